//! Monte Carlo ergodic capacity under i.i.d. `CN(0, 1)` small-scale fading.
//!
//! Samples are drawn in fixed-size chunks. Chunk `c` uses its own ChaCha
//! stream derived from `(seed, c)` and the chunk sums are combined in chunk
//! order, so results do not depend on the number of worker threads.

use nalgebra::{Complex, DMatrix};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::solvers::Decomposition;

type C64 = Complex<f64>;

const CHUNK: usize = 2048;

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Channel matrix with entries `sqrt(theta_lk) g_lk`.
fn sample_channel(scale: &Array2<f64>, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let (rows, cols) = scale.dim();
    DMatrix::from_fn(rows, cols, |l, k| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * (scale[[l, k]] * std::f64::consts::FRAC_1_SQRT_2)
    })
}

/// `ln det(I + W W^H)` through a Cholesky factor.
fn logdet_identity_plus_gram(w: &DMatrix<C64>) -> f64 {
    let n = w.nrows();
    let gram = DMatrix::<C64>::identity(n, n) + w * w.adjoint();
    let chol = gram.cholesky().expect("I + W W^H is Hermitian positive definite");
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
}

/// Sum of `eval` over `samples` draws, chunked and combined in order.
fn chunked_sum<F>(samples: usize, seed: u64, eval: F) -> f64
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let n = CHUNK.min(samples - c * CHUNK);
            (0..n).map(|_| eval(&mut rng)).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Monte Carlo estimate of `E[ln det(I + W W^H)]` in nats for a channel
/// with entry variances `theta_sub`.
pub fn mc_logdet(theta_sub: ArrayView2<f64>, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    if theta_sub.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("theta submatrix must be finite and nonnegative".into()));
    }
    let scale = theta_sub.mapv(f64::sqrt);
    let total = chunked_sum(samples, seed, |rng| logdet_identity_plus_gram(&sample_channel(&scale, rng)));
    Ok(total / samples as f64)
}

struct SubnetworkChannels {
    /// Columns of `sqrt(theta)` for the subnetwork's own users first, then
    /// the interferers.
    scale: Array2<f64>,
    own: usize,
}

fn subnetwork_channels(s: &Scenario, d: &Decomposition, m: usize) -> Result<SubnetworkChannels> {
    if s.k() != d.user_of.len() || s.l() != d.partition.l() {
        return Err(Error::InvalidArgument("decomposition does not match scenario dimensions".into()));
    }
    let group = d.partition.group(m)?;
    let theta = s.theta();
    let own: Vec<usize> = (0..s.k()).filter(|&k| d.user_of[k] == m).collect();
    let others: Vec<usize> = (0..s.k()).filter(|&k| d.user_of[k] != m).collect();
    let order: Vec<usize> = own.iter().chain(others.iter()).copied().collect();
    let scale = Array2::from_shape_fn((group.len(), order.len()), |(i, j)| theta.get(group[i], order[j]).sqrt());
    Ok(SubnetworkChannels { scale, own: own.len() })
}

/// Ergodic sum capacity of subnetwork `m` in bits, evaluated directly as
/// `E ln det[I + P (N0 I + P Pi Pi^H)^-1 H H^H]` with an LU determinant.
pub fn mc_ergodic_capacity(s: &Scenario, d: &Decomposition, m: usize, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let ch = subnetwork_channels(s, d, m)?;
    let lm = ch.scale.nrows();
    let total = chunked_sum(samples, seed, |rng| {
        let w = sample_channel(&ch.scale, rng);
        let h = w.columns(0, ch.own);
        let pi = w.columns(ch.own, w.ncols() - ch.own);
        let interference = DMatrix::<C64>::identity(lm, lm) + &pi * pi.adjoint();
        let signal = &h * h.adjoint();
        let inv = interference.lu().solve(&signal).expect("interference covariance is nonsingular");
        let det = (DMatrix::<C64>::identity(lm, lm) + inv).lu().determinant();
        det.norm().ln()
    });
    Ok(crate::nats_to_bits(total / samples as f64))
}

/// Same capacity through the split form: log-det of every user minus the
/// log-det of the interferers, on the same samples as
/// [`mc_ergodic_capacity`] for equal seeds.
pub fn mc_split_capacity(s: &Scenario, d: &Decomposition, m: usize, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let ch = subnetwork_channels(s, d, m)?;
    let total = chunked_sum(samples, seed, |rng| {
        let w = sample_channel(&ch.scale, rng);
        let pi = w.columns(ch.own, w.ncols() - ch.own).into_owned();
        logdet_identity_plus_gram(&w) - logdet_identity_plus_gram(&pi)
    });
    Ok(crate::nats_to_bits(total / samples as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::BsPartition;
    use ndarray::array;

    #[test]
    fn zero_power_gives_zero() {
        assert_eq!(mc_logdet(Array2::zeros((2, 3)).view(), 100, 1).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let t = array![[1.0, 0.5], [0.2, 2.0]];
        let a = mc_logdet(t.view(), 5000, 42).unwrap();
        let b = mc_logdet(t.view(), 5000, 42).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, mc_logdet(t.view(), 5000, 43).unwrap());
    }

    #[test]
    fn direct_and_split_forms_agree() {
        let s = Scenario::from_positions(
            vec![[0.1, 0.2], [0.8, 0.7], [0.4, 0.9]],
            vec![[0.3, 0.3], [0.6, 0.8], [0.9, 0.1]],
            4.0,
            1.0,
            0,
        )
        .unwrap();
        let part = BsPartition::new(vec![vec![0, 2], vec![1]], 3).unwrap();
        let d = Decomposition::new(vec![0, 1, 0], part).unwrap();
        for m in 0..2 {
            let direct = mc_ergodic_capacity(&s, &d, m, 20_000, 7).unwrap();
            let split = mc_split_capacity(&s, &d, m, 20_000, 7).unwrap();
            // Shared samples: the two forms are algebraically identical.
            assert!((direct - split).abs() <= 1e-8 * direct.abs().max(1.0), "{direct} vs {split}");
        }
    }

    #[test]
    fn rejects_zero_samples() {
        assert!(mc_logdet(array![[1.0]].view(), 0, 0).is_err());
    }
}
