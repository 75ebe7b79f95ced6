use std::time::Instant;

use ndarray::Array2;

use super::{check_instance, finish, gradient_scale, Objective, Scaled, SolverConfig, SolverReport};
use crate::capacity::{BsPartition, DeModel, ThetaMatrix};
use crate::error::{Error, Result};
use crate::fairness::{classify_case, AlphaParam, CaseId, FairObjective};
use crate::projections::sinkhorn_opt;

/// Result of a bare Frank-Wolfe run.
#[derive(Debug, Clone)]
pub struct FfwRun {
    pub x: Array2<f64>,
    /// Objective at each iterate before its update.
    pub trace: Vec<f64>,
}

/// `steps` Frank-Wolfe iterations on `objective` from `x0`, with the linear
/// subproblem replaced by the entropic transport solver and the open-loop
/// step `2 / (2 + t)`, `t` counted from `first_step`.
pub fn frank_wolfe(
    objective: &dyn Objective,
    x0: Array2<f64>,
    steps: usize,
    first_step: usize,
    delta: f64,
    sinkhorn_iters: usize,
) -> Result<FfwRun> {
    if x0.dim() != objective.shape() {
        return Err(Error::InvalidArgument(format!(
            "start point has shape {:?}, objective expects {:?}",
            x0.dim(),
            objective.shape()
        )));
    }
    let mut x = x0;
    let mut trace = Vec::with_capacity(steps);
    for t in first_step..first_step + steps {
        let (value, grad) = objective.evaluate(x.view());
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Solver(format!("non-finite objective or gradient at Frank-Wolfe step {t}")));
        }
        trace.push(value);
        let plan = sinkhorn_opt(grad.view(), delta, sinkhorn_iters)?;
        let step = 2.0 / (2.0 + t as f64);
        x = &x * (1.0 - step) + &plan.y * step;
    }
    Ok(FfwRun { x, trace })
}

/// Case 1 solver: Frank-Wolfe on `F_alpha` from the uniform assignment.
pub fn ffw(theta: &ThetaMatrix, partition: &BsPartition, alpha: AlphaParam, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    check_instance(theta, partition)?;
    let case = classify_case(alpha);
    if case != CaseId::Case1 && cfg.case != Some(CaseId::Case1) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} is {case}; FFW handles case 1 only")));
    }
    let started = Instant::now();
    let base = FairObjective::new(DeModel::new(theta, partition, cfg.inner_mode())?, alpha)?;
    let factor = if cfg.normalize_objective { gradient_scale(&base) } else { 1.0 };
    let objective = Scaled { base: &base, factor };
    let (k, m) = (theta.k(), partition.num_groups());
    let x0 = Array2::from_elem((k, m), 1.0 / m as f64);
    let run = frank_wolfe(&objective, x0, cfg.t_f, 0, cfg.delta, cfg.s_f)?;
    finish(theta, partition, alpha, CaseId::Case1, run.x, run.trace, Vec::new(), cfg, started)
}
