//! Alpha-fair utility, the relaxed objective `F_alpha` and evaluation metrics.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::capacity::{BsPartition, DeIterations, DeModel, ThetaMatrix};
use crate::error::{Error, Result};

/// Capacities below this (nats) are clamped before entering the utility.
pub const CAPACITY_FLOOR: f64 = 1e-6;

/// Fairness parameter: an exact nonnegative rational or infinity (max-min).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphaParam {
    /// `num / den` in lowest terms, `den > 0`.
    Finite { num: u64, den: u64 },
    Infinity,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl AlphaParam {
    pub fn rational(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidArgument("alpha denominator must be positive".into()));
        }
        let g = gcd(num, den).max(1);
        Ok(AlphaParam::Finite { num: num / g, den: den / g })
    }

    pub fn integer(n: u64) -> Self {
        AlphaParam::Finite { num: n, den: 1 }
    }

    pub fn value(&self) -> f64 {
        match *self {
            AlphaParam::Finite { num, den } => num as f64 / den as f64,
            AlphaParam::Infinity => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, AlphaParam::Finite { .. })
    }

    /// Sort key: finite values ascending, infinity last.
    pub fn sort_key(&self) -> (u8, u128, u128) {
        match *self {
            // Compare num/den by cross-multiplying against a common scale.
            AlphaParam::Finite { num, den } => (0, num as u128 * (u64::MAX as u128) / den as u128, 0),
            AlphaParam::Infinity => (1, 0, 0),
        }
    }
}

impl fmt::Display for AlphaParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AlphaParam::Finite { num, den: 1 } => write!(f, "{num}"),
            AlphaParam::Finite { num, den } => write!(f, "{num}/{den}"),
            AlphaParam::Infinity => write!(f, "inf"),
        }
    }
}

/// Accepts `p/q`, integers, exact decimal literals such as `4.5` (read
/// digit by digit, never through a float), and `inf`.
impl FromStr for AlphaParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::InvalidArgument(format!("cannot parse alpha from {s:?}; expected \"p/q\" or \"inf\""));
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") || t == "∞" {
            return Ok(AlphaParam::Infinity);
        }
        if t.starts_with('-') {
            return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {t}")));
        }
        if let Some((p, q)) = t.split_once('/') {
            let num = p.trim().parse::<u64>().map_err(|_| bad())?;
            let den = q.trim().parse::<u64>().map_err(|_| bad())?;
            return AlphaParam::rational(num, den);
        }
        if let Some((whole, frac)) = t.split_once('.') {
            if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let whole = if whole.is_empty() { 0 } else { whole.parse::<u64>().map_err(|_| bad())? };
            let den = 10u64.pow(frac.len() as u32);
            let num = whole
                .checked_mul(den)
                .and_then(|w| w.checked_add(frac.parse::<u64>().ok()?))
                .ok_or_else(bad)?;
            return AlphaParam::rational(num, den);
        }
        t.parse::<u64>().map(AlphaParam::integer).map_err(|_| bad())
    }
}

impl Serialize for AlphaParam {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AlphaParam {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
            Float(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(AlphaParam::integer(n)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
            Raw::Float(v) => Err(serde::de::Error::custom(format!(
                "floating-point alpha {v} is ambiguous; write it as a string such as \"p/q\""
            ))),
        }
    }
}

/// Solver family selected by the shape of `F_alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
    Case4,
}

impl CaseId {
    pub fn number(&self) -> u8 {
        match self {
            CaseId::Case1 => 1,
            CaseId::Case2 => 2,
            CaseId::Case3 => 3,
            CaseId::Case4 => 4,
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case{}", self.number())
    }
}

/// Parity classification of `1 - alpha = p/q` in lowest terms:
/// both odd is case 1, `p` even with `q` odd (alpha != 1) is case 2,
/// alpha = 1 or `q` even is case 3, and infinity is case 4.
pub fn classify_case(a: AlphaParam) -> CaseId {
    match a {
        AlphaParam::Infinity => CaseId::Case4,
        AlphaParam::Finite { num, den } => {
            let p = den as i128 - num as i128;
            let q = den as i128;
            let (p_odd, q_odd) = (p.rem_euclid(2) == 1, q % 2 == 1);
            if p == 0 {
                CaseId::Case3
            } else if p_odd && q_odd {
                CaseId::Case1
            } else if !p_odd && q_odd {
                CaseId::Case2
            } else {
                CaseId::Case3
            }
        }
    }
}

/// `u_alpha(c)`: `ln c` at alpha = 1, otherwise `c^(1-alpha) / (1-alpha)`.
pub fn alpha_utility(c: f64, a: AlphaParam) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("utility needs a positive capacity, got {c}")));
    }
    match a {
        AlphaParam::Infinity => Err(Error::InvalidArgument("utility is undefined at alpha = inf".into())),
        AlphaParam::Finite { num, den } if num == den => Ok(c.ln()),
        _ => {
            let e = 1.0 - a.value();
            Ok(c.powf(e) / e)
        }
    }
}

/// `F_alpha(X) = -sum_m u_alpha(max(-f_m(X), floor))` over a DE model.
#[derive(Debug, Clone)]
pub struct FairObjective {
    model: DeModel,
    alpha: AlphaParam,
}

impl FairObjective {
    pub fn new(model: DeModel, alpha: AlphaParam) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument("F_alpha needs a finite alpha".into()));
        }
        Ok(FairObjective { model, alpha })
    }

    pub fn model(&self) -> &DeModel {
        &self.model
    }

    pub fn alpha(&self) -> AlphaParam {
        self.alpha
    }

    fn floored(c: f64) -> f64 {
        c.max(CAPACITY_FLOOR)
    }

    pub fn objective_from_capacities(&self, caps: &[f64]) -> f64 {
        -caps
            .iter()
            .map(|&c| alpha_utility(Self::floored(c), self.alpha).expect("floored capacity is positive"))
            .sum::<f64>()
    }

    pub fn value(&self, x: ArrayView2<f64>) -> f64 {
        self.objective_from_capacities(&self.model.capacities(x))
    }

    /// Value and `sum_m (-f_m)^(-alpha) grad f_m`.
    pub fn value_and_gradient(&self, x: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let a = self.alpha.value();
        let mut grad = Array2::zeros((self.model.k(), self.model.m()));
        let mut caps = Vec::with_capacity(self.model.m());
        for (m, term) in self.model.terms(x).into_iter().enumerate() {
            let c = -term.f;
            caps.push(c);
            let weight = if a == 0.0 { 1.0 } else { Self::floored(c).powf(-a) };
            grad.column_mut(m).assign(&(&term.grad * weight));
        }
        (self.objective_from_capacities(&caps), grad)
    }
}

pub fn big_f_alpha(
    theta: &ThetaMatrix,
    partition: &BsPartition,
    x: ArrayView2<f64>,
    a: AlphaParam,
    mode: DeIterations,
) -> Result<f64> {
    check_dims(theta, partition, x)?;
    Ok(FairObjective::new(DeModel::new(theta, partition, mode)?, a)?.value(x))
}

pub fn grad_big_f_alpha(
    theta: &ThetaMatrix,
    partition: &BsPartition,
    x: ArrayView2<f64>,
    a: AlphaParam,
    mode: DeIterations,
) -> Result<Array2<f64>> {
    check_dims(theta, partition, x)?;
    Ok(FairObjective::new(DeModel::new(theta, partition, mode)?, a)?.value_and_gradient(x).1)
}

fn check_dims(theta: &ThetaMatrix, partition: &BsPartition, x: ArrayView2<f64>) -> Result<()> {
    if x.dim() != (theta.k(), partition.num_groups()) {
        return Err(Error::InvalidArgument(format!(
            "assignment shape {:?} does not match K = {}, M = {}",
            x.dim(),
            theta.k(),
            partition.num_groups()
        )));
    }
    Ok(())
}

/// Fairness and throughput summary of per-subnetwork capacities (bits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Jain's index `(sum C)^2 / (M sum C^2)`.
    pub fi: f64,
    pub c_sum: f64,
    pub c_min: f64,
    pub per_subnetwork: Vec<f64>,
    /// Set when every capacity is zero; `fi` is then reported as `1/M`.
    pub all_zero: bool,
}

pub fn metrics(capacities: &[f64]) -> Result<MetricsRecord> {
    if capacities.is_empty() {
        return Err(Error::InvalidArgument("metrics need at least one subnetwork".into()));
    }
    if capacities.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("capacities".into()));
    }
    let m = capacities.len() as f64;
    let sum: f64 = capacities.iter().sum();
    let sq: f64 = capacities.iter().map(|c| c * c).sum();
    let all_zero = sq == 0.0;
    let fi = if all_zero {
        log::warn!("all subnetwork capacities are zero; fairness index set to 1/M");
        1.0 / m
    } else {
        sum * sum / (m * sq)
    };
    Ok(MetricsRecord {
        fi,
        c_sum: sum,
        c_min: capacities.iter().copied().fold(f64::INFINITY, f64::min),
        per_subnetwork: capacities.to_vec(),
        all_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn alpha(s: &str) -> AlphaParam {
        s.parse().unwrap()
    }

    #[test]
    fn utility_examples() {
        assert_eq!(alpha_utility(1.0, alpha("1")).unwrap(), 0.0);
        assert_eq!(alpha_utility(5.0, alpha("0")).unwrap(), 5.0);
        assert_relative_eq!(alpha_utility(2.0, alpha("2")).unwrap(), -0.5);
        assert!(alpha_utility(0.0, alpha("2")).is_err());
        assert!(alpha_utility(-1.0, alpha("0")).is_err());
    }

    #[test]
    fn parses_rationals_and_infinity() {
        assert_eq!(alpha("6/4"), AlphaParam::Finite { num: 3, den: 2 });
        assert_eq!(alpha("4.5"), AlphaParam::Finite { num: 9, den: 2 });
        assert_eq!(alpha(".5"), AlphaParam::Finite { num: 1, den: 2 });
        assert_eq!(alpha("inf"), AlphaParam::Infinity);
        assert_eq!(alpha("7"), AlphaParam::integer(7));
        assert!("-1".parse::<AlphaParam>().is_err());
        assert!("1/0".parse::<AlphaParam>().is_err());
        assert!("abc".parse::<AlphaParam>().is_err());
        assert!("1e3".parse::<AlphaParam>().is_err());
        assert_eq!(alpha("3/2").to_string(), "3/2");
    }

    #[test]
    fn config_values_reject_floats() {
        #[derive(Deserialize)]
        struct C {
            a: Vec<AlphaParam>,
        }
        let c: C = toml::from_str(r#"a = [0, "1/2", "inf"]"#).unwrap();
        assert_eq!(c.a, vec![AlphaParam::integer(0), alpha("1/2"), AlphaParam::Infinity]);
        assert!(toml::from_str::<C>("a = [0.5]").is_err());
    }

    #[test]
    fn case_examples() {
        for a in ["0", "4", "8", "10"] {
            assert_eq!(classify_case(alpha(a)), CaseId::Case1, "alpha = {a}");
        }
        for a in ["3", "7", "11", "5"] {
            assert_eq!(classify_case(alpha(a)), CaseId::Case2, "alpha = {a}");
        }
        for a in ["1", "1/2", "9/2", "17/2"] {
            assert_eq!(classify_case(alpha(a)), CaseId::Case3, "alpha = {a}");
        }
        assert_eq!(classify_case(AlphaParam::Infinity), CaseId::Case4);
        // 1 - 2/3 = 1/3: both odd
        assert_eq!(classify_case(alpha("2/3")), CaseId::Case1);
        // 1 - 1/3 = 2/3: even over odd
        assert_eq!(classify_case(alpha("1/3")), CaseId::Case2);
    }

    proptest! {
        #[test]
        fn classification_follows_parity_rules(num in 0u64..1_000_000, den in 1u64..1_000_000) {
            let a = AlphaParam::rational(num, den).unwrap();
            let AlphaParam::Finite { num, den } = a else { unreachable!() };
            let p = den as i64 - num as i64;
            let case = classify_case(a);
            if p == 0 {
                prop_assert_eq!(case, CaseId::Case3);
            } else if p % 2 != 0 && den % 2 == 1 {
                prop_assert_eq!(case, CaseId::Case1);
            } else if p % 2 == 0 && den % 2 == 1 {
                prop_assert_eq!(case, CaseId::Case2);
            } else {
                prop_assert_eq!(case, CaseId::Case3);
            }
        }

        #[test]
        fn fairness_index_stays_in_range(caps in prop::collection::vec(0.0f64..100.0, 1..12)) {
            prop_assume!(caps.iter().any(|c| *c > 0.0));
            let r = metrics(&caps).unwrap();
            let m = caps.len() as f64;
            prop_assert!(r.fi >= 1.0 / m - 1e-12 && r.fi <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn objective_from_capacities_examples() {
        let model = DeModel::new(
            &ThetaMatrix::new(ndarray::array![[1.0, 1.0], [1.0, 1.0]]).unwrap(),
            &BsPartition::new(vec![vec![0], vec![1]], 2).unwrap(),
            DeIterations::CONVERGED,
        )
        .unwrap();
        let f0 = FairObjective::new(model.clone(), alpha("0")).unwrap();
        assert_relative_eq!(f0.objective_from_capacities(&[2.0, 3.0]), -5.0);
        let f1 = FairObjective::new(model.clone(), alpha("1")).unwrap();
        assert_eq!(f1.objective_from_capacities(&[1.0, 1.0]), 0.0);
        let f2 = FairObjective::new(model, alpha("2")).unwrap();
        assert_relative_eq!(f2.objective_from_capacities(&[1.0, 2.0]), 1.5);
    }

    #[test]
    fn metrics_examples() {
        assert_relative_eq!(metrics(&[3.0, 3.0, 3.0]).unwrap().fi, 1.0);
        assert_relative_eq!(metrics(&[0.0, 5.0, 0.0, 0.0]).unwrap().fi, 0.25);
        let r = metrics(&[2.0, 4.0]).unwrap();
        assert_relative_eq!(r.fi, 0.9);
        assert_eq!(r.c_sum, 6.0);
        assert_eq!(r.c_min, 2.0);
        let z = metrics(&[0.0, 0.0]).unwrap();
        assert!(z.all_zero);
        assert_eq!(z.fi, 0.5);
        assert!(metrics(&[]).is_err());
    }
}
