use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_instance, finish, frank_wolfe, gradient_scale, hessian_extreme_eigs, Objective, Scaled, SolverConfig, SolverReport,
};
use crate::capacity::{BsPartition, DeIterations, DeModel, ThetaMatrix};
use crate::error::{Error, Result};
use crate::fairness::{classify_case, AlphaParam, CaseId, FairObjective};
use crate::projections::dykstra_project_to_tolerance;

/// `w_f F(X) + w_tr tr(X^T X)`.
pub struct Blend<'a> {
    pub base: &'a dyn Objective,
    pub w_f: f64,
    pub w_tr: f64,
}

impl Blend<'_> {
    /// CCRP stage objective `(1 - zeta) F - zeta tr(X^T X)`.
    pub fn ccrp(base: &dyn Objective, zeta: f64) -> Blend<'_> {
        Blend { base, w_f: 1.0 - zeta, w_tr: -zeta }
    }

    /// GNCCP stage objective: `(1 - gamma) F + gamma tr` for `gamma >= 0`,
    /// `(1 + gamma) F + gamma tr` below zero.
    pub fn gnccp(base: &dyn Objective, gamma: f64) -> Blend<'_> {
        let w_f = if gamma >= 0.0 { 1.0 - gamma } else { 1.0 + gamma };
        Blend { base, w_f, w_tr: gamma }
    }
}

impl Objective for Blend<'_> {
    fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }

    fn evaluate(&self, x: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let tr = x.iter().map(|v| v * v).sum::<f64>();
        if self.w_f == 0.0 {
            return (self.w_tr * tr, &x * (2.0 * self.w_tr));
        }
        let (f, g) = self.base.evaluate(x);
        (self.w_f * f + self.w_tr * tr, g * self.w_f + &x * (2.0 * self.w_tr))
    }
}

/// Smallest `zeta` making `(1 - zeta) F - zeta tr` concave when the
/// largest Hessian eigenvalue of `F` is `lambda_max`.
pub fn ccrp_eta(lambda_max: f64) -> f64 {
    let l = lambda_max.max(0.0);
    l / (2.0 + l)
}

fn random_omega_points(k: usize, m: usize, count: usize, seed: u64) -> Result<Vec<Array2<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Array2::from_elem((k, m), 1.0 / m as f64)];
    while out.len() < count {
        let raw = Array2::from_shape_fn((k, m), |_| rng.random::<f64>() + 0.05);
        out.push(dykstra_project_to_tolerance(raw.view(), 1e-10, 10_000)?.x.into_inner());
    }
    Ok(out)
}

fn homotopy_path(
    objective: &dyn Objective,
    weights: impl Iterator<Item = f64>,
    stage: impl Fn(&dyn Objective, f64) -> Blend<'_>,
    cfg: &SolverConfig,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let (k, m) = objective.shape();
    let mut x = Array2::from_elem((k, m), 1.0 / m as f64);
    let mut trace = Vec::new();
    for (i, w) in weights.enumerate() {
        let blend = stage(objective, w);
        // Warm-started stages skip the full first step so the path is kept.
        let first_step = usize::from(i > 0);
        let run = frank_wolfe(&blend, x, cfg.t_f, first_step, cfg.delta, cfg.s_f)?;
        x = run.x;
        trace.extend(run.trace);
    }
    Ok((x, trace))
}

/// Case 2 solver: sweeps `zeta` from 0 to the concavity threshold `eta`,
/// solving each stage by warm-started Frank-Wolfe.
pub fn ccrp(theta: &ThetaMatrix, partition: &BsPartition, alpha: AlphaParam, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    check_instance(theta, partition)?;
    let case = classify_case(alpha);
    if case != CaseId::Case2 && cfg.case != Some(CaseId::Case2) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} is {case}; CCRP handles case 2 only")));
    }
    let started = Instant::now();
    let (k, m) = (theta.k(), partition.num_groups());
    let base = FairObjective::new(DeModel::new(theta, partition, cfg.inner_mode())?, alpha)?;
    let factor = if cfg.normalize_objective { gradient_scale(&base) } else { 1.0 };
    let objective = Scaled { base: &base, factor };
    let exact = FairObjective::new(DeModel::new(theta, partition, DeIterations::CONVERGED)?, alpha)?;
    let exact = Scaled { base: &exact, factor };
    let samples = random_omega_points(k, m, cfg.hessian_samples, cfg.seed)?;
    let est = hessian_extreme_eigs(&exact, &samples, cfg.hessian_probe_iters, cfg.seed)?;
    if !est.lambda_max.is_finite() {
        return Err(Error::Solver("largest Hessian eigenvalue estimate is not finite".into()));
    }
    let eta = (ccrp_eta(est.lambda_max) + cfg.ccrp_margin).clamp(0.0, 1.0);
    let mut zetas = Vec::new();
    for t in 0..=cfg.t_c {
        let z = (t as f64 * cfg.s_c).min(eta);
        if zetas.last() != Some(&z) {
            zetas.push(z);
        }
    }
    let (x, trace) = homotopy_path(&objective, zetas.into_iter(), Blend::ccrp, cfg)?;
    finish(theta, partition, alpha, CaseId::Case2, x, trace, Vec::new(), cfg, started)
}

/// Case 3 solver: sweeps `gamma` from 1 down to -1, convex first and
/// concave last, solving each stage by warm-started Frank-Wolfe.
pub fn gnccp(theta: &ThetaMatrix, partition: &BsPartition, alpha: AlphaParam, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    check_instance(theta, partition)?;
    let case = classify_case(alpha);
    if case != CaseId::Case3 && cfg.case != Some(CaseId::Case3) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} is {case}; GNCCP handles case 3 only")));
    }
    let started = Instant::now();
    let base = FairObjective::new(DeModel::new(theta, partition, cfg.inner_mode())?, alpha)?;
    let factor = if cfg.normalize_objective { gradient_scale(&base) } else { 1.0 };
    let objective = Scaled { base: &base, factor };
    let gammas = (0..=cfg.t_g).map(|t| (1.0 - t as f64 * cfg.s_g).max(-1.0));
    let (x, trace) = homotopy_path(&objective, gammas, Blend::gnccp, cfg)?;
    finish(theta, partition, alpha, CaseId::Case3, x, trace, Vec::new(), cfg, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn model() -> DeModel {
        let theta = ThetaMatrix::new(array![[4.0, 0.5, 1.0], [0.3, 2.0, 3.0]]).unwrap();
        let part = BsPartition::new(vec![vec![0], vec![1]], 2).unwrap();
        DeModel::new(&theta, &part, DeIterations::CONVERGED).unwrap()
    }

    #[test]
    fn stage_objectives_at_endpoints() {
        let obj = FairObjective::new(model(), AlphaParam::integer(3)).unwrap();
        let x = array![[0.6, 0.4], [0.3, 0.7], [0.5, 0.5]];
        let (f, g) = obj.evaluate(x.view());
        let (c, cg) = Blend::ccrp(&obj, 0.0).evaluate(x.view());
        assert_eq!(c, f);
        assert_eq!(cg, g);
        let (z, zg) = Blend::gnccp(&obj, 0.0).evaluate(x.view());
        assert_eq!(z, f);
        assert_eq!(zg, g);
        let tr = x.iter().map(|v| v * v).sum::<f64>();
        let (one, one_g) = Blend::gnccp(&obj, 1.0).evaluate(x.view());
        assert_relative_eq!(one, tr);
        assert_eq!(one_g, &x * 2.0);
    }

    #[test]
    fn eta_examples() {
        assert_relative_eq!(ccrp_eta(2.0), 0.5);
        assert_eq!(ccrp_eta(0.0), 0.0);
        assert_eq!(ccrp_eta(-3.0), 0.0);
    }

    #[test]
    fn solvers_reject_wrong_cases() {
        let theta = ThetaMatrix::new(array![[1.0, 2.0]]).unwrap();
        let part = BsPartition::single(1).unwrap();
        let cfg = SolverConfig::default();
        assert!(ccrp(&theta, &part, AlphaParam::integer(0), &cfg).is_err());
        assert!(gnccp(&theta, &part, AlphaParam::integer(3), &cfg).is_err());
    }

    #[test]
    fn gnccp_trace_covers_every_stage() {
        let theta = ThetaMatrix::new(array![[4.0, 0.5, 1.0], [0.3, 2.0, 3.0]]).unwrap();
        let part = BsPartition::new(vec![vec![0], vec![1]], 2).unwrap();
        let r = gnccp(&theta, &part, AlphaParam::integer(1), &SolverConfig::default()).unwrap();
        assert_eq!(r.objective_trace.len(), 21 * 10);
        assert!(r.final_x.in_omega(1e-6));
    }
}
