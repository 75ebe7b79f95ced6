//! Deterministic-equivalent (DE) model of subnetwork ergodic sum capacity.
//!
//! For a subnetwork `m` with base stations `B_m`, the ergodic capacity splits
//! into a constant `c_m` (all users seen by `B_m`) minus the log-det term of
//! the interfering users. Both terms are replaced by the large-system
//! approximation
//!
//! ```text
//! V(theta) = -sum_l ln a_l - sum_k ln b_k - sum_{l,k} theta_lk a_l b_k
//! a_l = 1 / (1 + sum_k theta_lk b_k),   b_k = 1 / (1 + sum_l theta_lk a_l)
//! ```
//!
//! with the interference profile masked by the relaxed assignment,
//! `theta^m_lk = (1 - x_km) theta_lk`. `f_m(X) = V(theta^m) - c_m` is concave
//! in `X` and the subnetwork capacity is `-f_m`.

pub mod monte_carlo;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub use monte_carlo::{mc_ergodic_capacity, mc_logdet, mc_split_capacity};

/// Tolerance on unit row sums of an [`Assignment`].
pub const ROW_SUM_TOL: f64 = 1e-9;

/// `L x K` matrix of per-link SNR factors `P q_lk^2 / N0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix(Array2<f64>);

impl ThetaMatrix {
    pub fn new(theta: Array2<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta matrix".into()));
        }
        if theta.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("theta entries must be nonnegative".into()));
        }
        Ok(ThetaMatrix(theta))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.0[[l, k]]
    }

    pub fn l(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    /// Rows belonging to the given base stations.
    pub fn rows(&self, bs: &[usize]) -> Array2<f64> {
        self.0.select(Axis(0), bs)
    }
}

/// Fixed grouping of the `L` base stations into `M` disjoint, nonempty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsPartition {
    groups: Vec<Vec<usize>>,
    l: usize,
}

impl BsPartition {
    /// Groups hold zero-based base station indices.
    pub fn new(groups: Vec<Vec<usize>>, l: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::validation("groups", "at least one group is required"));
        }
        let mut seen = vec![false; l];
        for (m, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::validation("groups", format!("group {m} is empty")));
            }
            for &b in g {
                if b >= l {
                    return Err(Error::IndexOutOfRange { index: b, len: l });
                }
                if seen[b] {
                    return Err(Error::validation("groups", format!("base station {b} appears twice")));
                }
                seen[b] = true;
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(Error::validation("groups", format!("base station {b} is not covered")));
        }
        Ok(BsPartition { groups, l })
    }

    /// Single group holding every base station.
    pub fn single(l: usize) -> Result<Self> {
        BsPartition::new(vec![(0..l).collect()], l)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, m: usize) -> Result<&[usize]> {
        self.groups
            .get(m)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange { index: m, len: self.groups.len() })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Group index of every base station.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.l];
        for (m, g) in self.groups.iter().enumerate() {
            for &b in g {
                labels[b] = m;
            }
        }
        labels
    }
}

/// `K x M` row-stochastic relaxed user-to-subnetwork assignment.
///
/// Column sums of at least one (the relaxed "every subnetwork has a user"
/// constraint) are not enforced; use [`Assignment::in_omega`] to check them.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment(Array2<f64>);

impl Assignment {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidArgument("assignment must be nonempty".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("assignment".into()));
        }
        if x.iter().any(|v| *v < -ROW_SUM_TOL || *v > 1.0 + ROW_SUM_TOL) {
            return Err(Error::InvalidArgument("assignment entries must lie in [0, 1]".into()));
        }
        for (k, row) in x.rows().into_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("row {k} sums to {s}, expected 1")));
            }
        }
        Ok(Assignment(x))
    }

    /// Every entry `1/M`.
    pub fn uniform(k: usize, m: usize) -> Self {
        Assignment(Array2::from_elem((k, m), 1.0 / m as f64))
    }

    /// Indicator matrix of a discrete assignment.
    pub fn from_users(user_of: &[usize], m: usize) -> Result<Self> {
        let mut x = Array2::zeros((user_of.len(), m));
        for (k, &s) in user_of.iter().enumerate() {
            if s >= m {
                return Err(Error::IndexOutOfRange { index: s, len: m });
            }
            x[[k, s]] = 1.0;
        }
        Assignment::new(x)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn m(&self) -> usize {
        self.0.ncols()
    }

    /// Largest violation of the relaxed feasible set (nonnegativity, unit row
    /// sums, column sums at least one).
    pub fn omega_residual(&self) -> f64 {
        omega_residual(self.0.view())
    }

    pub fn in_omega(&self, tol: f64) -> bool {
        self.omega_residual() <= tol
    }
}

/// Largest constraint violation of `x` with respect to the relaxed set.
pub fn omega_residual(x: ArrayView2<f64>) -> f64 {
    let neg = x.iter().fold(0.0f64, |acc, v| acc.max(-v));
    let rows = x.rows().into_iter().fold(0.0f64, |acc, r| acc.max((r.sum() - 1.0).abs()));
    let cols = x.columns().into_iter().fold(0.0f64, |acc, c| acc.max(1.0 - c.sum()));
    neg.max(rows).max(cols)
}

/// Iteration budget for the DE fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeIterations {
    pub max_iters: usize,
    /// Stop once successive iterates differ by less than this in max-norm.
    /// Zero runs exactly `max_iters` sweeps.
    pub tol: f64,
}

impl DeIterations {
    /// Converged mode used for oracles and reported metrics.
    pub const CONVERGED: DeIterations = DeIterations { max_iters: 500, tol: 1e-10 };

    /// Exactly `n` alternating sweeps, as used inside the solvers.
    pub fn fixed(n: usize) -> Self {
        DeIterations { max_iters: n, tol: 0.0 }
    }
}

impl Default for DeIterations {
    fn default() -> Self {
        DeIterations::CONVERGED
    }
}

/// Solution `(a, b)` of the DE fixed-point equations.
#[derive(Debug, Clone, PartialEq)]
pub struct DeFixedPoint {
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DeFixedPoint {
    /// Max-norm residual of the fixed-point equations.
    pub fn residual(&self, theta_sub: ArrayView2<f64>) -> f64 {
        let mut r = 0.0f64;
        for (l, row) in theta_sub.rows().into_iter().enumerate() {
            let a = 1.0 / (1.0 + row.dot(&self.beta));
            r = r.max((a - self.alpha[l]).abs());
        }
        for (k, col) in theta_sub.columns().into_iter().enumerate() {
            let b = 1.0 / (1.0 + col.dot(&self.alpha));
            r = r.max((b - self.beta[k]).abs());
        }
        r
    }
}

/// Alternating iteration of the fixed point for a group's `theta` rows with
/// the user mask `w_k = 1 - x_km` applied to every column. Starts at all-ones.
fn masked_fixed_point(
    theta_rows: ArrayView2<f64>,
    mask: &[f64],
    mode: DeIterations,
) -> (Array1<f64>, Array1<f64>, usize, bool) {
    let (lm, k) = theta_rows.dim();
    let mut alpha = Array1::<f64>::ones(lm);
    let mut beta = Array1::<f64>::ones(k);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < mode.max_iters {
        iterations += 1;
        let mut delta = 0.0f64;
        for l in 0..lm {
            let row = theta_rows.row(l);
            let s: f64 = (0..k).map(|j| mask[j] * row[j] * beta[j]).sum();
            let a = 1.0 / (1.0 + s);
            delta = delta.max((a - alpha[l]).abs());
            alpha[l] = a;
        }
        for j in 0..k {
            let s: f64 = (0..lm).map(|l| theta_rows[[l, j]] * alpha[l]).sum();
            let b = 1.0 / (1.0 + mask[j] * s);
            delta = delta.max((b - beta[j]).abs());
            beta[j] = b;
        }
        if mode.tol > 0.0 && delta < mode.tol {
            converged = true;
            break;
        }
    }
    (alpha, beta, iterations, converged)
}

fn masked_value(theta_rows: ArrayView2<f64>, mask: &[f64], alpha: &Array1<f64>, beta: &Array1<f64>) -> f64 {
    let mut v = -alpha.iter().map(|a| a.ln()).sum::<f64>() - beta.iter().map(|b| b.ln()).sum::<f64>();
    for (l, row) in theta_rows.rows().into_iter().enumerate() {
        for (j, t) in row.iter().enumerate() {
            v -= mask[j] * t * alpha[l] * beta[j];
        }
    }
    v
}

fn check_theta_sub(theta_sub: ArrayView2<f64>) -> Result<()> {
    if theta_sub.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("theta submatrix".into()));
    }
    if theta_sub.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("theta submatrix must be nonnegative".into()));
    }
    Ok(())
}

/// Fixed point `(a, b)` for an `L_m x K` SNR profile.
pub fn de_fixed_point(theta_sub: ArrayView2<f64>, mode: DeIterations) -> Result<DeFixedPoint> {
    check_theta_sub(theta_sub)?;
    let ones = vec![1.0; theta_sub.ncols()];
    let (alpha, beta, iterations, converged) = masked_fixed_point(theta_sub, &ones, mode);
    Ok(DeFixedPoint { alpha, beta, iterations, converged })
}

/// DE approximation of `E[ln det(I + W W^H)]` in nats, where `W` has
/// independent entries of variance `theta_sub`.
pub fn de_logdet(theta_sub: ArrayView2<f64>, mode: DeIterations) -> Result<f64> {
    let fp = de_fixed_point(theta_sub, mode)?;
    let ones = vec![1.0; theta_sub.ncols()];
    Ok(masked_value(theta_sub, &ones, &fp.alpha, &fp.beta))
}

fn check_x(x: ArrayView2<f64>, theta: &ThetaMatrix, partition: &BsPartition) -> Result<()> {
    if x.nrows() != theta.k() {
        return Err(Error::InvalidArgument(format!(
            "assignment has {} rows but there are {} users",
            x.nrows(),
            theta.k()
        )));
    }
    if x.ncols() != partition.num_groups() {
        return Err(Error::InvalidArgument(format!(
            "assignment has {} columns but the partition has {} groups",
            x.ncols(),
            partition.num_groups()
        )));
    }
    if partition.l() != theta.l() {
        return Err(Error::InvalidArgument("partition and theta disagree on L".into()));
    }
    Ok(())
}

/// `theta` rows of group `m` with column `k` scaled by `1 - x[k][m]`.
pub fn masked_theta(theta: &ThetaMatrix, partition: &BsPartition, x: ArrayView2<f64>, m: usize) -> Result<Array2<f64>> {
    check_x(x, theta, partition)?;
    let group = partition.group(m)?;
    let mut sub = theta.rows(group);
    for (k, mut col) in sub.columns_mut().into_iter().enumerate() {
        col *= 1.0 - x[[k, m]];
    }
    Ok(sub)
}

/// `c_m`: DE log-det of group `m` with every user included.
pub fn c_m_constant(theta: &ThetaMatrix, partition: &BsPartition, m: usize, mode: DeIterations) -> Result<f64> {
    let group = partition.group(m)?;
    de_logdet(theta.rows(group).view(), mode)
}

/// `f_m(X)`; the DE subnetwork capacity is `-f_m`.
pub fn f_m(theta: &ThetaMatrix, partition: &BsPartition, x: ArrayView2<f64>, m: usize, mode: DeIterations) -> Result<f64> {
    let masked = masked_theta(theta, partition, x, m)?;
    Ok(de_logdet(masked.view(), mode)? - c_m_constant(theta, partition, m, mode)?)
}

/// Gradient of `f_m` with respect to `X`. Only column `m` is nonzero:
/// `d f_m / d x_km = -b_k sum_{l in B_m} theta_lk a_l`.
pub fn grad_f_m(
    theta: &ThetaMatrix,
    partition: &BsPartition,
    x: ArrayView2<f64>,
    m: usize,
    mode: DeIterations,
) -> Result<Array2<f64>> {
    let masked = masked_theta(theta, partition, x, m)?;
    let fp = de_fixed_point(masked.view(), mode)?;
    let rows = theta.rows(partition.group(m)?);
    let mut g = Array2::zeros(x.dim());
    for k in 0..theta.k() {
        g[[k, m]] = -fp.beta[k] * rows.column(k).dot(&fp.alpha);
    }
    Ok(g)
}

/// Value and gradient column of one subnetwork term.
#[derive(Debug, Clone)]
pub struct SubnetworkTerm {
    /// `f_m(X)`.
    pub f: f64,
    /// Column `m` of `grad f_m`, length `K`.
    pub grad: Array1<f64>,
}

/// Precomputed per-group data for repeated evaluation of every `f_m`.
///
/// Both the masked term and `c_m` use the same iteration budget, so an
/// empty subnetwork has exactly zero capacity.
#[derive(Debug, Clone)]
pub struct DeModel {
    group_rows: Vec<Array2<f64>>,
    c: Vec<f64>,
    mode: DeIterations,
    k: usize,
}

impl DeModel {
    pub fn new(theta: &ThetaMatrix, partition: &BsPartition, mode: DeIterations) -> Result<Self> {
        if partition.l() != theta.l() {
            return Err(Error::InvalidArgument("partition and theta disagree on L".into()));
        }
        let group_rows: Vec<Array2<f64>> = partition.groups().iter().map(|g| theta.rows(g)).collect();
        let ones = vec![1.0; theta.k()];
        let c = group_rows
            .iter()
            .map(|rows| {
                let (a, b, _, _) = masked_fixed_point(rows.view(), &ones, mode);
                masked_value(rows.view(), &ones, &a, &b)
            })
            .collect();
        Ok(DeModel { group_rows, c, mode, k: theta.k() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.group_rows.len()
    }

    pub fn mode(&self) -> DeIterations {
        self.mode
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Largest group size `L_max`.
    pub fn max_group_size(&self) -> usize {
        self.group_rows.iter().map(|r| r.nrows()).max().unwrap_or(0)
    }

    fn mask(x: ArrayView2<f64>, m: usize) -> Vec<f64> {
        x.column(m).iter().map(|v| 1.0 - v).collect()
    }

    /// `f_m(X)` and its gradient column. `x` is not validated, so finite
    /// differences may step slightly outside the feasible set.
    pub fn term(&self, x: ArrayView2<f64>, m: usize) -> SubnetworkTerm {
        let rows = self.group_rows[m].view();
        let mask = Self::mask(x, m);
        let (alpha, beta, _, _) = masked_fixed_point(rows, &mask, self.mode);
        let f = masked_value(rows, &mask, &alpha, &beta) - self.c[m];
        let grad = Array1::from_shape_fn(self.k, |k| -beta[k] * rows.column(k).dot(&alpha));
        SubnetworkTerm { f, grad }
    }

    pub fn terms(&self, x: ArrayView2<f64>) -> Vec<SubnetworkTerm> {
        (0..self.m()).map(|m| self.term(x, m)).collect()
    }

    /// Every `f_m(X)`.
    pub fn f_values(&self, x: ArrayView2<f64>) -> Vec<f64> {
        (0..self.m())
            .map(|m| {
                let rows = self.group_rows[m].view();
                let mask = Self::mask(x, m);
                let (alpha, beta, _, _) = masked_fixed_point(rows, &mask, self.mode);
                masked_value(rows, &mask, &alpha, &beta) - self.c[m]
            })
            .collect()
    }

    /// DE subnetwork capacities `-f_m(X)` in nats (not floored).
    pub fn capacities(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.f_values(x).into_iter().map(|f| -f).collect()
    }
}
