use std::time::Instant;

use ndarray::{Array1, Array2};

use super::{check_instance, finish, AgpStepRule, SolverConfig, SolverReport};
use crate::capacity::{BsPartition, DeModel, ThetaMatrix};
use crate::error::{Error, Result};
use crate::fairness::{AlphaParam, CaseId};
use crate::projections::{dykstra_project, simplex_project};

/// Step-size schedule of the alternating gradient projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AgpParams {
    /// Proximal weight toward the fixed simplex point.
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub kappa11: f64,
    /// Global bound `L_max sqrt(M) max theta`.
    pub kappa12_global: f64,
    pub rule: AgpStepRule,
}

impl AgpParams {
    pub fn new(theta: &ThetaMatrix, partition: &BsPartition, cfg: &SolverConfig) -> Self {
        let (k, m) = (theta.k() as f64, partition.num_groups() as f64);
        let radius = cfg.radius.unwrap_or(k.sqrt());
        let max_theta = theta.as_array().iter().copied().fold(0.0, f64::max);
        AgpParams {
            lambda: cfg.epsilon / (8.0 * radius * radius),
            mu: cfg.mu.unwrap_or(5.0 * k),
            rho: cfg.rho,
            kappa11: m.sqrt(),
            kappa12_global: partition.max_group_size() as f64 * m.sqrt() * max_theta,
            rule: cfg.agp_step,
        }
    }

    /// `gamma_t = mu / (t + 1)^rho`.
    pub fn gamma(&self, t: usize) -> f64 {
        self.mu / ((t + 1) as f64).powf(self.rho)
    }

    /// `zeta_t = (kappa11 / 2 + kappa12^2 / (lambda + gamma_t))^-1`.
    pub fn zeta(&self, t: usize, kappa12: f64) -> f64 {
        1.0 / (self.kappa11 / 2.0 + kappa12 * kappa12 / (self.lambda + self.gamma(t)))
    }
}

/// Case 4 solver for the max-min problem `min_X max_{y in simplex} sum_m y_m f_m(X)`.
///
/// Alternates an exact regularized maximization in `y` (a simplex
/// projection) with a projected gradient step in `X` (Dykstra). Records the
/// stationarity measure `||X_t - P(X_t - grad_X f(X_t, y_{t+1}))||_F`.
pub fn agp(theta: &ThetaMatrix, partition: &BsPartition, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    check_instance(theta, partition)?;
    let started = Instant::now();
    let model = DeModel::new(theta, partition, cfg.inner_mode())?;
    let params = AgpParams::new(theta, partition, cfg);
    let (k, m) = (theta.k(), partition.num_groups());
    let y_bar = Array1::from_elem(m, 1.0 / m as f64);
    let mut y = y_bar.clone();
    let mut x = Array2::from_elem((k, m), 1.0 / m as f64);
    let mut trace = Vec::with_capacity(cfg.t_a);
    let mut stationarity = Vec::with_capacity(cfg.t_a);
    for t in 0..cfg.t_a {
        let terms = model.terms(x.view());
        if terms.iter().any(|term| !term.f.is_finite() || term.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::Solver(format!("non-finite subnetwork term at AGP step {t}")));
        }
        let gamma = params.gamma(t);
        let denom = params.lambda + gamma;
        let target: Vec<f64> =
            (0..m).map(|j| (params.lambda * y_bar[j] + gamma * y[j] + terms[j].f) / denom).collect();
        y = simplex_project(&target)?.into_inner();
        let mut grad = Array2::zeros((k, m));
        for (j, term) in terms.iter().enumerate() {
            grad.column_mut(j).assign(&(&term.grad * y[j]));
        }
        trace.push(terms.iter().zip(y.iter()).map(|(term, w)| w * term.f).sum());
        let kappa12 = match params.rule {
            AgpStepRule::Global => params.kappa12_global,
            AgpStepRule::Local => terms
                .iter()
                .map(|term| term.grad.iter().map(|g| g * g).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        };
        let zeta = params.zeta(t, kappa12);
        let probe = dykstra_project((&x - &grad).view(), cfg.s_a)?;
        stationarity.push((&x - probe.x.as_array()).iter().map(|v| v * v).sum::<f64>().sqrt());
        x = dykstra_project((&x - &(&grad * zeta)).view(), cfg.s_a)?.x.into_inner();
    }
    finish(theta, partition, AlphaParam::Infinity, CaseId::Case4, x, trace, stationarity, cfg, started)
}
