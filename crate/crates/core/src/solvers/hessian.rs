use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Objective;
use crate::error::{Error, Result};

/// Inflation applied to the extreme eigenvalue estimates.
pub const SAFETY_FACTOR: f64 = 1.2;

const FD_STEP: f64 = 1e-5;

/// Extreme Hessian eigenvalues over a set of sample points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Estimates before the safety factor.
    pub raw_min: f64,
    pub raw_max: f64,
}

fn norm(v: &Array2<f64>) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn hvp(objective: &dyn Objective, x: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let plus = objective.evaluate((x + &(v * FD_STEP)).view()).1;
    let minus = objective.evaluate((x - &(v * FD_STEP)).view()).1;
    (plus - minus) / (2.0 * FD_STEP)
}

/// Dominant eigenpair of `v -> H v + shift v` by power iteration; returns
/// the Rayleigh quotient of `H + shift I`.
fn power(
    objective: &dyn Objective,
    x: &Array2<f64>,
    shift: f64,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> Option<f64> {
    let mut v = Array2::from_shape_fn(x.dim(), |_| StandardNormal.sample(rng));
    let n = norm(&v);
    v /= n;
    let mut rq = 0.0;
    for _ in 0..iters {
        let w = hvp(objective, x, &v) + &v * shift;
        if w.iter().any(|a| !a.is_finite()) {
            return None;
        }
        rq = (&w * &v).sum();
        let n = norm(&w);
        if n == 0.0 {
            return Some(0.0);
        }
        v = w / n;
    }
    Some(rq)
}

/// Smallest and largest Hessian eigenvalue of `objective` over `samples`,
/// from power iterations on finite-difference Hessian-vector products.
/// The maximum is inflated and the minimum deflated by [`SAFETY_FACTOR`].
pub fn hessian_extreme_eigs(
    objective: &dyn Objective,
    samples: &[Array2<f64>],
    probe_iters: usize,
    seed: u64,
) -> Result<HessianEstimate> {
    if samples.is_empty() || probe_iters == 0 {
        return Err(Error::InvalidArgument("need at least one sample and one probe iteration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in samples {
        if x.dim() != objective.shape() {
            return Err(Error::InvalidArgument("sample shape does not match the objective".into()));
        }
        let Some(dominant) = power(objective, x, 0.0, probe_iters, &mut rng) else {
            continue;
        };
        // Shift by a bound on the spectral radius so both ends become dominant.
        let rho = dominant.abs() * 1.05 + 1e-12;
        let (Some(top), Some(bottom)) = (
            power(objective, x, rho, probe_iters, &mut rng),
            power(objective, x, -rho, probe_iters, &mut rng),
        ) else {
            continue;
        };
        // `bottom` estimates the dominant eigenvalue of H - rho I, i.e. lambda_min - rho.
        hi = hi.max(top - rho);
        lo = lo.min(bottom + rho);
    }
    if !hi.is_finite() || !lo.is_finite() {
        return Err(Error::Solver("every Hessian probe was non-finite".into()));
    }
    let inflate = |v: f64| if v >= 0.0 { v * SAFETY_FACTOR } else { v / SAFETY_FACTOR };
    let deflate = |v: f64| if v >= 0.0 { v / SAFETY_FACTOR } else { v * SAFETY_FACTOR };
    Ok(HessianEstimate { lambda_min: deflate(lo), lambda_max: inflate(hi), raw_min: lo, raw_max: hi })
}
