//! Projection primitives: the entropic transport subsolver used by the
//! Frank-Wolfe step, Euclidean projection onto the probability simplex, the
//! KL projections onto the three sets whose intersection is the relaxed
//! assignment polytope, and Dykstra's cyclic scheme that combines them.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::capacity::{omega_residual, Assignment};
use crate::error::{Error, Result};

/// Entrywise floor applied before KL projections.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Output of [`sinkhorn_opt`]: a transport plan `y` with unit row sums and
/// column sums `1 + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub y: Array2<f64>,
    pub z: Array1<f64>,
}

impl TransportPlan {
    /// Largest deviation from unit row sums and from column sums `1 + z`.
    pub fn marginal_error(&self) -> f64 {
        let rows = self.y.sum_axis(Axis(1)).iter().fold(0.0f64, |a, s| a.max((s - 1.0).abs()));
        let cols = self
            .y
            .sum_axis(Axis(0))
            .iter()
            .zip(self.z.iter())
            .fold(0.0f64, |a, (s, z)| a.max((s - 1.0 - z).abs()));
        rows.max(cols)
    }
}

fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln psi` for `psi = (1 + sqrt(1 + 4 s)) / (2 s)` given `ln s`, without
/// forming `s` when it would overflow.
fn log_psi(log_s: f64) -> f64 {
    if log_s < 0.0 {
        let s = log_s.exp();
        let r = (1.0 + 4.0 * s).sqrt();
        (1.0 + r).ln() - std::f64::consts::LN_2 - log_s
    } else {
        // ln r = (ln 4 + ln s + ln(1 + 1/(4s))) / 2 and ln(1 + r) = ln r + ln(1 + 1/r).
        let log_r = 0.5 * (4f64.ln() + log_s + ((-log_s).exp() / 4.0).ln_1p());
        log_r + (-log_r).exp().ln_1p() - std::f64::consts::LN_2 - log_s
    }
}

/// Entropy-regularized minimization of `<g, y>` over row-stochastic `y`
/// with column sums `1 + z`, `z >= 0`, by `iters` rounds of the alternating
/// `psi` / `phi` scaling updates. Computed in the log domain after
/// subtracting each row's minimum from `g`.
pub fn sinkhorn_opt(g: ArrayView2<f64>, delta: f64, iters: usize) -> Result<TransportPlan> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transport cost".into()));
    }
    let (k, m) = g.dim();
    if k == 0 || m == 0 {
        return Err(Error::InvalidArgument("transport cost must be nonempty".into()));
    }
    let mut log_a = Array2::zeros((k, m));
    for (i, row) in g.rows().into_iter().enumerate() {
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        for j in 0..m {
            log_a[[i, j]] = -(row[j] - min) / delta;
        }
    }
    let mut log_phi = Array1::<f64>::zeros(k);
    let mut log_psi_v = Array1::<f64>::zeros(m);
    for _ in 0..iters {
        for j in 0..m {
            let log_s = logsumexp((0..k).map(|i| log_phi[i] + log_a[[i, j]]));
            log_psi_v[j] = log_psi(log_s);
        }
        for i in 0..k {
            log_phi[i] = -logsumexp((0..m).map(|j| log_a[[i, j]] + log_psi_v[j]));
        }
    }
    let y = Array2::from_shape_fn((k, m), |(i, j)| (log_phi[i] + log_a[[i, j]] + log_psi_v[j]).exp());
    let z = log_psi_v.mapv(|l| (-l).exp());
    Ok(TransportPlan { y, z })
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Array1<f64>);

impl SimplexPoint {
    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }

    pub fn uniform(m: usize) -> Self {
        SimplexPoint(Array1::from_elem(m, 1.0 / m as f64))
    }
}

/// Euclidean projection onto `{y >= 0, sum y = 1}`.
///
/// With `a` sorted descending, the support size `N` is the first index for
/// which `a_{N+1} - (sum_{n<=N} a_n - 1) / N` is negative (or `M`), and the
/// top `N` entries are shifted by that common amount.
pub fn simplex_project(a: &[f64]) -> Result<SimplexPoint> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("simplex projection input".into()));
    }
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
    let mut prefix = 0.0;
    let mut shift = 0.0;
    for (n, &i) in order.iter().enumerate() {
        prefix += a[i];
        shift = (prefix - 1.0) / (n + 1) as f64;
        match order.get(n + 1) {
            Some(&next) if a[next] - shift <= 0.0 => break,
            _ => {}
        }
    }
    let mut y = Array1::from_shape_fn(a.len(), |i| (a[i] - shift).max(0.0));
    // Remove the last few ulps of drift so the sum is 1 to machine precision.
    let s = y.sum();
    y /= s;
    Ok(SimplexPoint(y))
}

fn check_nonnegative(x: ArrayView2<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection input".into()));
    }
    if x.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("KL projection needs a nonnegative matrix".into()));
    }
    Ok(())
}

/// Nonnegativity: entrywise `max(x, 0)`.
pub fn kl_project_omega1(x: ArrayView2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Column sums at least one: column `m` scaled by `max(1 / colsum, 1)`.
pub fn kl_project_omega2(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_nonnegative(x)?;
    let mut out = x.to_owned();
    for (m, mut col) in out.columns_mut().into_iter().enumerate() {
        let s = col.sum();
        if s == 0.0 {
            return Err(Error::Infeasible(format!("column {m} is zero; KL projection is undefined")));
        }
        col *= (1.0 / s).max(1.0);
    }
    Ok(out)
}

/// Unit row sums: each row divided by its sum.
pub fn kl_project_omega3(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_nonnegative(x)?;
    let mut out = x.to_owned();
    for (k, mut row) in out.rows_mut().into_iter().enumerate() {
        let s = row.sum();
        if s == 0.0 {
            return Err(Error::Infeasible(format!("row {k} is zero; KL projection is undefined")));
        }
        row /= s;
    }
    Ok(out)
}

/// Result of [`dykstra_project`].
#[derive(Debug, Clone)]
pub struct DykstraOutput {
    pub x: Assignment,
    /// Largest remaining violation of the relaxed set.
    pub residual: f64,
    pub cycles: usize,
}

fn dykstra_run(x0: ArrayView2<f64>, cycles: usize, tol: Option<f64>) -> Result<DykstraOutput> {
    if cycles == 0 {
        return Err(Error::InvalidArgument("Dykstra needs at least one cycle".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Dykstra input".into()));
    }
    if x0.is_empty() {
        return Err(Error::InvalidArgument("Dykstra input must be nonempty".into()));
    }
    let mut x = x0.mapv(|v| v.max(POSITIVITY_FLOOR));
    let mut z = [Array2::<f64>::ones(x.dim()), Array2::ones(x.dim()), Array2::ones(x.dim())];
    let mut done = 0;
    for _ in 0..cycles {
        for (s, zs) in z.iter_mut().enumerate() {
            let input = &x * &*zs;
            let next = match s {
                0 => kl_project_omega1(input.view()),
                1 => kl_project_omega2(input.view())?,
                _ => kl_project_omega3(input.view())?,
            };
            *zs = &*zs * &x / &next;
            x = next;
        }
        done += 1;
        if let Some(t) = tol {
            if omega_residual(x.view()) <= t {
                break;
            }
        }
    }
    let residual = omega_residual(x.view());
    Ok(DykstraOutput { x: Assignment::new(x)?, residual, cycles: done })
}

/// KL Dykstra projection onto the relaxed assignment set, cycling
/// nonnegativity, column sums and row sums (row sums last) for exactly
/// `cycles` full cycles.
pub fn dykstra_project(x0: ArrayView2<f64>, cycles: usize) -> Result<DykstraOutput> {
    dykstra_run(x0, cycles, None)
}

/// Like [`dykstra_project`] but stops early once the residual is at most `tol`.
pub fn dykstra_project_to_tolerance(x0: ArrayView2<f64>, tol: f64, max_cycles: usize) -> Result<DykstraOutput> {
    dykstra_run(x0, max_cycles, Some(tol))
}
