//! Network instances: base station and user layouts in the unit square,
//! large-scale fading and the SNR factors derived from them.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::capacity::ThetaMatrix;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A physical network instance.
///
/// `q[l][k]` is the large-scale fading amplitude between base station `l`
/// and user `k`, `d(l,k)^(-alpha0/2)`. Noise is normalized to one and the
/// transmit power carries the SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub bs_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub q: Array2<f64>,
    pub power_p: f64,
    pub noise_n0: f64,
    pub pathloss_alpha0: f64,
    pub seed: u64,
}

impl Scenario {
    /// Builds a scenario from explicit positions, validating every invariant.
    pub fn from_positions(
        bs_positions: Vec<Point>,
        user_positions: Vec<Point>,
        alpha0: f64,
        snr: f64,
        seed: u64,
    ) -> Result<Self> {
        if bs_positions.is_empty() {
            return Err(Error::validation("l", "at least one base station is required"));
        }
        if user_positions.is_empty() {
            return Err(Error::validation("k", "at least one user is required"));
        }
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::validation("snr", format!("must be positive and finite, got {snr}")));
        }
        if !alpha0.is_finite() || alpha0 < 0.0 {
            return Err(Error::validation("alpha0", format!("must be finite and nonnegative, got {alpha0}")));
        }
        for (name, points) in [("bs_positions", &bs_positions), ("user_positions", &user_positions)] {
            for (i, p) in points.iter().enumerate() {
                if !in_unit_square(p) {
                    return Err(Error::validation(
                        name,
                        format!("point {i} = ({}, {}) lies outside the unit square", p[0], p[1]),
                    ));
                }
            }
        }
        let q = fading_matrix(&bs_positions, &user_positions, alpha0);
        if let Some(((l, k), _)) = q.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(
                "user_positions",
                format!("user {k} coincides with base station {l}"),
            ));
        }
        Ok(Scenario {
            bs_positions,
            user_positions,
            q,
            power_p: snr,
            noise_n0: 1.0,
            pathloss_alpha0: alpha0,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.user_positions.len()
    }

    pub fn l(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn snr(&self) -> f64 {
        self.power_p / self.noise_n0
    }

    pub fn theta(&self) -> ThetaMatrix {
        theta_matrix(self)
    }
}

fn in_unit_square(p: &Point) -> bool {
    (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])
}

fn distance(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn fading_matrix(bs: &[Point], users: &[Point], alpha0: f64) -> Array2<f64> {
    Array2::from_shape_fn((bs.len(), users.len()), |(l, k)| {
        distance(&bs[l], &users[k]).powf(-alpha0 / 2.0)
    })
}

/// Uniform random layout in the unit square.
///
/// Base stations are drawn first, then users. A user that lands on a base
/// station (zero distance, infinite fading) is re-drawn.
pub fn generate_layout(k_users: usize, l_bs: usize, alpha0: f64, snr: f64, seed: u64) -> Result<Scenario> {
    if k_users == 0 {
        return Err(Error::InvalidArgument("k_users must be at least 1".into()));
    }
    if l_bs == 0 {
        return Err(Error::InvalidArgument("l_bs must be at least 1".into()));
    }
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bs: Vec<Point> = (0..l_bs).map(|_| [rng.random(), rng.random()]).collect();
    let mut users = Vec::with_capacity(k_users);
    while users.len() < k_users {
        let p: Point = [rng.random(), rng.random()];
        let ok = bs
            .iter()
            .all(|b| distance(b, &p) > 0.0 && distance(b, &p).powf(-alpha0 / 2.0).is_finite());
        if ok {
            users.push(p);
        }
    }
    Scenario::from_positions(bs, users, alpha0, snr, seed)
}

/// `theta[l][k] = P q[l][k]^2 / N0`.
pub fn theta_matrix(s: &Scenario) -> ThetaMatrix {
    let ratio = s.power_p / s.noise_n0;
    ThetaMatrix::new(s.q.mapv(|q| ratio * q * q)).expect("scenario fading is finite and nonnegative")
}

/// On-disk form. Positions are written with 17 significant digits.
#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    k: usize,
    l: usize,
    alpha0: f64,
    snr: f64,
    seed: u64,
    #[serde(serialize_with = "serialize_points")]
    bs_positions: Vec<Point>,
    #[serde(serialize_with = "serialize_points")]
    user_positions: Vec<Point>,
}

fn full_precision(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.16e}")).expect("formatted float is valid JSON")
}

fn serialize_points<S: Serializer>(points: &[Point], ser: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = ser.serialize_seq(Some(points.len()))?;
    for p in points {
        seq.serialize_element(&[full_precision(p[0]), full_precision(p[1])])?;
    }
    seq.end()
}

/// Serializes a scenario to the JSON scenario document.
pub fn scenario_to_string(s: &Scenario) -> Result<String> {
    let file = ScenarioFile {
        k: s.k(),
        l: s.l(),
        alpha0: s.pathloss_alpha0,
        snr: s.snr(),
        seed: s.seed,
        bs_positions: s.bs_positions.clone(),
        user_positions: s.user_positions.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Parses a scenario document; `origin` only labels errors.
pub fn scenario_from_str(text: &str, origin: &Path) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    if file.k == 0 {
        return Err(Error::validation("k", "must be at least 1"));
    }
    if file.l == 0 {
        return Err(Error::validation("l", "must be at least 1"));
    }
    if file.bs_positions.len() != file.l {
        return Err(Error::validation(
            "bs_positions",
            format!("expected {} points, found {}", file.l, file.bs_positions.len()),
        ));
    }
    if file.user_positions.len() != file.k {
        return Err(Error::validation(
            "user_positions",
            format!("expected {} points, found {}", file.k, file.user_positions.len()),
        ));
    }
    Scenario::from_positions(file.bs_positions, file.user_positions, file.alpha0, file.snr, file.seed)
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), scenario_to_string(s)?)?;
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    scenario_from_str(&text, path)
}
