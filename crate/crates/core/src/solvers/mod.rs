//! Solvers for the relaxed alpha-fair clustering problem, plus rounding and
//! an exhaustive oracle for small instances.

mod discrete;
mod frank_wolfe;
mod hessian;
mod homotopy;
mod max_min;

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::capacity::{Assignment, BsPartition, DeIterations, DeModel, ThetaMatrix};
use crate::error::{Error, Result};
use crate::fairness::{self, classify_case, AlphaParam, CaseId, FairObjective, MetricsRecord};
use crate::projections::dykstra_project_to_tolerance;

pub use discrete::{brute_force_decompose, enumerate_best, round_assignment, BruteForceResult, MAX_ENUMERATION};
pub use frank_wolfe::{ffw, frank_wolfe, FfwRun};
pub use hessian::{hessian_extreme_eigs, HessianEstimate, SAFETY_FACTOR};
pub use homotopy::{ccrp, ccrp_eta, gnccp, Blend};
pub use max_min::{agp, AgpParams};

/// Feasibility tolerance enforced on every returned assignment.
pub const OMEGA_TOL: f64 = 1e-9;

/// Step-size rule for the AGP `X` update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgpStepRule {
    /// Global constant `kappa12 = L_max sqrt(M) max theta`.
    Global,
    /// `kappa12` recomputed every iteration as the largest gradient column
    /// norm at the current iterate.
    Local,
}

/// Iteration counts and parameters of all four solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Forces a solver instead of the one implied by alpha.
    pub case: Option<CaseId>,
    pub t_f: usize,
    pub s_f: usize,
    pub n_f: usize,
    pub delta: f64,
    pub s_c: f64,
    pub t_c: usize,
    pub s_g: f64,
    pub t_g: usize,
    pub t_a: usize,
    pub s_a: usize,
    pub epsilon: f64,
    pub rho: f64,
    /// Bound on `mu_t`; `None` means `5 K`.
    pub mu: Option<f64>,
    /// Radius of the ball holding both feasible sets; `None` means `sqrt(K)`.
    pub radius: Option<f64>,
    pub agp_step: AgpStepRule,
    /// Added to the CCRP concavity threshold.
    pub ccrp_margin: f64,
    /// Rescale `F_alpha` so its largest gradient entry at the uniform start
    /// is 1 before FFW, CCRP and GNCCP see it.
    pub normalize_objective: bool,
    pub hessian_samples: usize,
    pub hessian_probe_iters: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            case: None,
            t_f: 10,
            s_f: 10,
            n_f: 2,
            delta: 0.01,
            s_c: 0.1,
            t_c: 10,
            s_g: 0.1,
            t_g: 20,
            t_a: 10_000,
            s_a: 5,
            epsilon: 0.01,
            rho: 1.1,
            mu: None,
            radius: None,
            agp_step: AgpStepRule::Local,
            ccrp_margin: 0.01,
            normalize_objective: true,
            hessian_samples: 3,
            hessian_probe_iters: 30,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("t_f", self.t_f),
            ("s_f", self.s_f),
            ("n_f", self.n_f),
            ("t_c", self.t_c),
            ("t_g", self.t_g),
            ("t_a", self.t_a),
            ("s_a", self.s_a),
            ("hessian_samples", self.hessian_samples),
            ("hessian_probe_iters", self.hessian_probe_iters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::validation(name, "must be at least 1"));
            }
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::validation("delta", "must be positive"));
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return Err(Error::validation("rho", "must exceed 1"));
        }
        for (name, v) in [("s_c", self.s_c), ("s_g", self.s_g)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::validation(name, "must lie in (0, 1]"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation("epsilon", "must be positive"));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::validation("mu", "must be positive"));
            }
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::validation("radius", "must be positive"));
            }
        }
        if !self.ccrp_margin.is_finite() || self.ccrp_margin < 0.0 {
            return Err(Error::validation("ccrp_margin", "must be nonnegative"));
        }
        Ok(())
    }

    /// DE budget used inside the solvers.
    pub fn inner_mode(&self) -> DeIterations {
        DeIterations::fixed(self.n_f)
    }
}

/// Discrete user-to-subnetwork map together with the base station grouping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    /// Subnetwork of every user, zero-based.
    pub user_of: Vec<usize>,
    pub partition: BsPartition,
}

impl Decomposition {
    /// Rejects maps that leave a subnetwork without users.
    pub fn new(user_of: Vec<usize>, partition: BsPartition) -> Result<Self> {
        let m = partition.num_groups();
        let mut count = vec![0usize; m];
        for &s in &user_of {
            if s >= m {
                return Err(Error::IndexOutOfRange { index: s, len: m });
            }
            count[s] += 1;
        }
        if let Some(empty) = count.iter().position(|c| *c == 0) {
            return Err(Error::Infeasible(format!("subnetwork {empty} has no users")));
        }
        Ok(Decomposition { user_of, partition })
    }

    pub fn k(&self) -> usize {
        self.user_of.len()
    }

    pub fn m(&self) -> usize {
        self.partition.num_groups()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut count = vec![0; self.m()];
        for &s in &self.user_of {
            count[s] += 1;
        }
        count
    }

    pub fn to_assignment(&self) -> Assignment {
        Assignment::from_users(&self.user_of, self.m()).expect("validated on construction")
    }
}

/// Differentiable objective over `K x M` matrices, minimized by the solvers.
pub trait Objective: Sync {
    fn shape(&self) -> (usize, usize);

    /// Value and gradient at `x`.
    fn evaluate(&self, x: ArrayView2<f64>) -> (f64, Array2<f64>);
}

/// `factor * base`.
pub struct Scaled<'a> {
    pub base: &'a dyn Objective,
    pub factor: f64,
}

impl Objective for Scaled<'_> {
    fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }

    fn evaluate(&self, x: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let (f, g) = self.base.evaluate(x);
        (self.factor * f, g * self.factor)
    }
}

/// `1 / max |grad F|` at the uniform assignment, or 1 if that gradient is
/// zero or not finite. Positive scaling keeps the minimizers of `F`.
pub fn gradient_scale(objective: &dyn Objective) -> f64 {
    let (k, m) = objective.shape();
    let x0 = Array2::from_elem((k, m), 1.0 / m as f64);
    let g = objective.evaluate(x0.view()).1;
    let top = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if top > 0.0 && top.is_finite() {
        1.0 / top
    } else {
        1.0
    }
}

impl Objective for FairObjective {
    fn shape(&self) -> (usize, usize) {
        (self.model().k(), self.model().m())
    }

    fn evaluate(&self, x: ArrayView2<f64>) -> (f64, Array2<f64>) {
        self.value_and_gradient(x)
    }
}

/// Outcome of one solver run.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub case: CaseId,
    pub alpha: AlphaParam,
    pub final_x: Assignment,
    pub decomposition: Decomposition,
    /// One entry per inner iteration, in the units the solver saw (after
    /// any objective normalization).
    pub objective_trace: Vec<f64>,
    /// Discrete objective of the decomposition with converged DE: `F_alpha`
    /// for finite alpha, `max_m f_m` (minus the smallest capacity, nats) at
    /// infinity.
    pub objective: f64,
    pub metrics_de: MetricsRecord,
    pub metrics_mc: Option<MetricsRecord>,
    /// AGP only: per-iteration stationarity measure.
    pub stationarity: Vec<f64>,
    pub wall_time: f64,
    pub seed: u64,
}

/// Discrete objective value of a decomposition under converged DE.
pub fn discrete_objective(theta: &ThetaMatrix, d: &Decomposition, alpha: AlphaParam) -> Result<f64> {
    let model = DeModel::new(theta, &d.partition, DeIterations::CONVERGED)?;
    objective_of(&model, d.to_assignment().view(), alpha)
}

fn objective_of(model: &DeModel, x: ArrayView2<f64>, alpha: AlphaParam) -> Result<f64> {
    match alpha {
        AlphaParam::Infinity => Ok(model.f_values(x).into_iter().fold(f64::NEG_INFINITY, f64::max)),
        a => Ok(FairObjective::new(model.clone(), a)?.value(x)),
    }
}

/// Converged DE capacities of a decomposition, in bits.
pub fn de_capacities_bits(theta: &ThetaMatrix, d: &Decomposition) -> Result<Vec<f64>> {
    let model = DeModel::new(theta, &d.partition, DeIterations::CONVERGED)?;
    Ok(model.capacities(d.to_assignment().view()).into_iter().map(crate::nats_to_bits).collect())
}

pub(crate) fn check_instance(theta: &ThetaMatrix, partition: &BsPartition) -> Result<()> {
    if partition.l() != theta.l() {
        return Err(Error::InvalidArgument(format!(
            "partition covers {} base stations but theta has {}",
            partition.l(),
            theta.l()
        )));
    }
    if theta.k() < partition.num_groups() {
        return Err(Error::Infeasible(format!(
            "{} users cannot fill {} subnetworks",
            theta.k(),
            partition.num_groups()
        )));
    }
    Ok(())
}

/// Pulls a relaxed iterate back into the feasible set when the inner
/// solver left it slightly outside: a long Dykstra run, then, if column
/// deficits remain, the smallest blend toward the uniform assignment that
/// closes them.
pub(crate) fn restore_feasibility(x: Array2<f64>) -> Result<Assignment> {
    let residual = crate::capacity::omega_residual(x.view());
    if residual <= OMEGA_TOL && x.iter().all(|v| *v >= 0.0) {
        return Assignment::new(x);
    }
    let out = dykstra_project_to_tolerance(x.view(), OMEGA_TOL, 2_000)?;
    if out.residual <= OMEGA_TOL {
        return Ok(out.x);
    }
    let x = out.x.into_inner();
    let (k, m) = x.dim();
    let uniform_col = k as f64 / m as f64;
    let mut tau = 0.0f64;
    for col in x.columns() {
        let c = col.sum();
        if c < 1.0 {
            if uniform_col <= c {
                return Err(Error::Solver(format!("column sum {c} cannot be restored")));
            }
            tau = tau.max((1.0 - c) / (uniform_col - c));
        }
    }
    let tau = (tau * (1.0 + 1e-9)).min(1.0);
    let blended = x.mapv(|v| v * (1.0 - tau)) + tau / m as f64;
    let a = Assignment::new(blended)?;
    if a.omega_residual() > 1e-6 {
        return Err(Error::Solver(format!("could not restore feasibility, residual {}", a.omega_residual())));
    }
    Ok(a)
}

/// Rounds a final relaxed iterate and assembles the report.
pub(crate) fn finish(
    theta: &ThetaMatrix,
    partition: &BsPartition,
    alpha: AlphaParam,
    case: CaseId,
    x: Array2<f64>,
    objective_trace: Vec<f64>,
    stationarity: Vec<f64>,
    cfg: &SolverConfig,
    started: Instant,
) -> Result<SolverReport> {
    let final_x = restore_feasibility(x)?;
    let decomposition = round_assignment(&final_x, partition)?;
    let model = DeModel::new(theta, partition, DeIterations::CONVERGED)?;
    let indicator = decomposition.to_assignment();
    let objective = objective_of(&model, indicator.view(), alpha)?;
    let caps: Vec<f64> = model.capacities(indicator.view()).into_iter().map(crate::nats_to_bits).collect();
    Ok(SolverReport {
        case,
        alpha,
        final_x,
        decomposition,
        objective_trace,
        objective,
        metrics_de: fairness::metrics(&caps)?,
        metrics_mc: None,
        stationarity,
        wall_time: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
    })
}

/// Runs the solver matching the case of `alpha` (or `cfg.case` when set).
pub fn solve(theta: &ThetaMatrix, partition: &BsPartition, alpha: AlphaParam, cfg: &SolverConfig) -> Result<SolverReport> {
    match cfg.case.unwrap_or_else(|| classify_case(alpha)) {
        CaseId::Case1 => ffw(theta, partition, alpha, cfg),
        CaseId::Case2 => ccrp(theta, partition, alpha, cfg),
        CaseId::Case3 => gnccp(theta, partition, alpha, cfg),
        CaseId::Case4 => agp(theta, partition, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SolverConfig::default().validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig { t_f: 0, ..Default::default() },
            SolverConfig { delta: 0.0, ..Default::default() },
            SolverConfig { rho: 1.0, ..Default::default() },
            SolverConfig { s_c: 1.5, ..Default::default() },
            SolverConfig { s_g: 0.0, ..Default::default() },
            SolverConfig { mu: Some(-1.0), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn config_from_toml_overrides() {
        let c: SolverConfig = toml::from_str("t_f = 20\nagp_step = \"global\"").unwrap();
        assert_eq!(c.t_f, 20);
        assert_eq!(c.agp_step, AgpStepRule::Global);
        assert_eq!(c.s_f, 10);
        assert!(toml::from_str::<SolverConfig>("nope = 1").is_err());
    }

    #[test]
    fn decomposition_validation() {
        let p = BsPartition::new(vec![vec![0], vec![1]], 2).unwrap();
        assert!(Decomposition::new(vec![0, 0], p.clone()).is_err());
        assert!(Decomposition::new(vec![0, 2], p.clone()).is_err());
        let d = Decomposition::new(vec![1, 0, 1], p).unwrap();
        assert_eq!(d.sizes(), vec![1, 2]);
        assert_eq!(d.to_assignment().as_array().column(1).sum(), 2.0);
    }

    #[test]
    fn scaling_normalizes_the_start_gradient() {
        let theta = ThetaMatrix::new(ndarray::array![[4.0, 0.5, 1.0], [0.3, 2.0, 3.0]]).unwrap();
        let part = BsPartition::new(vec![vec![0], vec![1]], 2).unwrap();
        let model = DeModel::new(&theta, &part, DeIterations::CONVERGED).unwrap();
        let base = FairObjective::new(model, AlphaParam::integer(5)).unwrap();
        let factor = gradient_scale(&base);
        let scaled = Scaled { base: &base, factor };
        let x0 = Array2::from_elem((3, 2), 0.5);
        let (f, g) = base.evaluate(x0.view());
        let (fs, gs) = scaled.evaluate(x0.view());
        assert!((gs.iter().fold(0.0f64, |a, v| a.max(v.abs())) - 1.0).abs() < 1e-12);
        assert!((fs - f * factor).abs() <= 1e-12 * fs.abs());
        assert!(g.iter().zip(gs.iter()).all(|(a, b)| a * b >= 0.0), "signs are kept");
    }
}
