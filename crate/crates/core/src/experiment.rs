//! Multi-layout experiment sweeps and their CSV outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::mc_ergodic_capacity;
use crate::error::{Error, Result};
use crate::fairness::{self, AlphaParam, MetricsRecord};
use crate::partition::balanced_kmeans;
use crate::scenario::{generate_layout, theta_matrix};
use crate::solvers::{solve, SolverConfig, SolverReport};

/// Samples used by `--mc-validate` when the config leaves `mc_samples` at zero.
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

fn default_alpha0() -> f64 {
    4.0
}

fn default_kmeans_iters() -> usize {
    100
}

/// Output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub timings: PathBuf,
    pub failures: PathBuf,
    /// Prefix of the per-metric plot tables.
    pub plot_prefix: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            results: "results.csv".into(),
            summary: "summary.csv".into(),
            timings: "timings.csv".into(),
            failures: "failures.csv".into(),
            plot_prefix: "plot".into(),
        }
    }
}

/// Sweep definition, read from TOML (or JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k_list: Vec<usize>,
    pub l: usize,
    pub m_list: Vec<usize>,
    pub alpha_list: Vec<AlphaParam>,
    #[serde(default)]
    pub snr_db: f64,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    pub n_layouts: usize,
    /// Monte Carlo samples per subnetwork; zero disables the MC metrics.
    #[serde(default)]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_iters: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layouts == 0 {
            return Err(Error::validation("n_layouts", "must be at least 1"));
        }
        if self.l == 0 {
            return Err(Error::validation("l", "must be at least 1"));
        }
        for (name, list) in [("k_list", &self.k_list), ("m_list", &self.m_list)] {
            if list.is_empty() || list.contains(&0) {
                return Err(Error::validation(name, "must be a nonempty list of positive counts"));
            }
        }
        if let Some(m) = self.m_list.iter().find(|&&m| m > self.l) {
            return Err(Error::validation("m_list", format!("M = {m} exceeds L = {}", self.l)));
        }
        if self.alpha_list.is_empty() {
            return Err(Error::validation("alpha_list", "must not be empty"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::validation("snr_db", "must be finite"));
        }
        if !self.alpha0.is_finite() || self.alpha0 < 0.0 {
            return Err(Error::validation("alpha0", "must be finite and nonnegative"));
        }
        self.solver.validate()
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Parses TOML, or JSON when the path ends in `.json`.
    pub fn from_str_at(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), message };
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| parse_err(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_str_at(&fs::read_to_string(path)?, path)
    }
}

/// One solved (layout, K, M, alpha) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub alpha: AlphaParam,
    pub case: u8,
    pub metrics: MetricsRecord,
    pub objective: f64,
    pub mc: Option<MetricsRecord>,
    pub wall_time: f64,
}

/// A combination whose solver returned an error.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedRun {
    pub seed: u64,
    pub k: usize,
    pub m: usize,
    pub alpha: AlphaParam,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Compute MC metrics even when the config leaves `mc_samples` at zero.
    pub mc_validate: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    /// Sorted by (seed, K, M, alpha) with infinity last.
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailedRun>,
}

type Job = (u64, usize, usize, AlphaParam);

fn sort_key(seed: u64, k: usize, m: usize, a: AlphaParam) -> (u64, usize, usize, (u8, u128, u128)) {
    (seed, k, m, a.sort_key())
}

fn run_one(cfg: &ExperimentConfig, mc_samples: usize, (seed, k, m, alpha): Job) -> Result<ResultRow> {
    let scenario = generate_layout(k, cfg.l, cfg.alpha0, cfg.snr_linear(), seed)?;
    let partition = balanced_kmeans(&scenario.bs_positions, m, seed, cfg.kmeans_iters)?;
    let theta = theta_matrix(&scenario);
    let solver_cfg = SolverConfig { seed, ..cfg.solver.clone() };
    let report: SolverReport = solve(&theta, &partition, alpha, &solver_cfg)?;
    let mc = if mc_samples > 0 {
        let caps = (0..m)
            .map(|j| mc_ergodic_capacity(&scenario, &report.decomposition, j, mc_samples, seed))
            .collect::<Result<Vec<_>>>()?;
        Some(fairness::metrics(&caps)?)
    } else {
        None
    };
    Ok(ResultRow {
        seed,
        k,
        l: cfg.l,
        m,
        alpha,
        case: report.case.number(),
        metrics: report.metrics_de,
        objective: report.objective,
        mc,
        wall_time: report.wall_time,
    })
}

/// Runs every (layout, K, M, alpha) combination. Layout `i` uses seed
/// `cfg.seed + i` for its positions, partition and solver.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mc_samples = match (cfg.mc_samples, opts.mc_validate) {
        (0, true) => DEFAULT_MC_SAMPLES,
        (n, _) => n,
    };
    let mut jobs: Vec<Job> = Vec::new();
    for i in 0..cfg.n_layouts {
        let seed = cfg.seed.wrapping_add(i as u64);
        for &k in &cfg.k_list {
            for &m in &cfg.m_list {
                for &a in &cfg.alpha_list {
                    jobs.push((seed, k, m, a));
                }
            }
        }
    }
    jobs.sort_by_key(|&(s, k, m, a)| sort_key(s, k, m, a));
    jobs.dedup();
    let work = || jobs.par_iter().map(|&job| (job, run_one(cfg, mc_samples, job))).collect::<Vec<_>>();
    let results = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    };
    let mut out = ExperimentOutput::default();
    for ((seed, k, m, alpha), r) in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(e) => {
                log::warn!("seed {seed}, K = {k}, M = {m}, alpha = {alpha}: {e}");
                out.failures.push(FailedRun { seed, k, m, alpha, error: e.to_string() });
            }
        }
    }
    Ok(out)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes the per-row table. Timing is kept out so identical configs give
/// byte-identical files.
pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "k",
        "l",
        "m",
        "alpha",
        "case",
        "fi",
        "c_sum_bits",
        "c_min_bits",
        "per_subnetwork_bits",
        "objective",
        "mc_fi",
        "mc_c_sum_bits",
        "mc_c_min_bits",
    ])?;
    for r in rows {
        let (mc_fi, mc_sum, mc_min) = match &r.mc {
            Some(mc) => (mc.fi.to_string(), mc.c_sum.to_string(), mc.c_min.to_string()),
            None => Default::default(),
        };
        w.write_record([
            r.seed.to_string(),
            r.k.to_string(),
            r.l.to_string(),
            r.m.to_string(),
            r.alpha.to_string(),
            r.case.to_string(),
            r.metrics.fi.to_string(),
            r.metrics.c_sum.to_string(),
            r.metrics.c_min.to_string(),
            fmt_list(&r.metrics.per_subnetwork),
            r.objective.to_string(),
            mc_fi,
            mc_sum,
            mc_min,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "k", "m", "alpha", "wall_time_s"])?;
    for r in rows {
        w.write_record([r.seed.to_string(), r.k.to_string(), r.m.to_string(), r.alpha.to_string(), r.wall_time.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures_csv(failures: &[FailedRun], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "k", "m", "alpha", "error"])?;
    for f in failures {
        w.write_record([f.seed.to_string(), f.k.to_string(), f.m.to_string(), f.alpha.to_string(), f.error.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-metric accessor used by the aggregations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Fi,
    CSum,
    CMin,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Fi, Metric::CSum, Metric::CMin];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Fi => "fi",
            Metric::CSum => "c_sum_bits",
            Metric::CMin => "c_min_bits",
        }
    }

    pub fn of(&self, r: &ResultRow) -> f64 {
        match self {
            Metric::Fi => r.metrics.fi,
            Metric::CSum => r.metrics.c_sum,
            Metric::CMin => r.metrics.c_min,
        }
    }
}

/// Sample mean and standard error (`n - 1` deviation over `sqrt(n)`; zero
/// for a single sample).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean of each metric per (K, M, alpha).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub k: usize,
    pub m: usize,
    pub alpha: AlphaParam,
    pub n: usize,
    pub fi: f64,
    pub c_sum: f64,
    pub c_min: f64,
    pub objective: f64,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, usize, (u8, u128, u128)), (AlphaParam, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        groups.entry((r.k, r.m, r.alpha.sort_key())).or_insert_with(|| (r.alpha, Vec::new())).1.push(r);
    }
    groups
        .into_iter()
        .map(|((k, m, _), (alpha, rs))| {
            let mean = |f: &dyn Fn(&ResultRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            SummaryRow {
                k,
                m,
                alpha,
                n: rs.len(),
                fi: mean(&|r| r.metrics.fi),
                c_sum: mean(&|r| r.metrics.c_sum),
                c_min: mean(&|r| r.metrics.c_min),
                objective: mean(&|r| r.objective),
            }
        })
        .collect()
}

pub fn write_summary_csv(summary: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "m", "alpha", "n", "fi_mean", "c_sum_bits_mean", "c_min_bits_mean", "objective_mean"])?;
    for s in summary {
        w.write_record([
            s.k.to_string(),
            s.m.to_string(),
            s.alpha.to_string(),
            s.n.to_string(),
            s.fi.to_string(),
            s.c_sum.to_string(),
            s.c_min.to_string(),
            s.objective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// X-axis variable of a plot table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GroupBy {
    K,
    M,
}

/// One plot-table line: a metric's mean and standard error at one x value
/// of one alpha series.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub x: usize,
    /// The dimension not on the x axis.
    pub other: usize,
    pub alpha: AlphaParam,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

pub fn plot_points(rows: &[ResultRow], metric: Metric, group_by: GroupBy) -> Vec<PlotPoint> {
    let mut groups: BTreeMap<((u8, u128, u128), usize, usize), (AlphaParam, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let (x, other) = match group_by {
            GroupBy::K => (r.k, r.m),
            GroupBy::M => (r.m, r.k),
        };
        groups.entry((r.alpha.sort_key(), other, x)).or_insert_with(|| (r.alpha, Vec::new())).1.push(metric.of(r));
    }
    groups
        .into_iter()
        .filter_map(|((_, other, x), (alpha, values))| {
            if values.is_empty() {
                log::warn!("empty plot group at x = {x}; skipped");
                return None;
            }
            let (mean, stderr) = mean_stderr(&values);
            Some(PlotPoint { x, other, alpha, n: values.len(), mean, stderr })
        })
        .collect()
}

/// Writes one CSV per metric into `dir` and returns their paths.
pub fn emit_plotdata(rows: &[ResultRow], group_by: GroupBy, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no result rows to aggregate".into()));
    }
    let (x_name, other_name, tag) = match group_by {
        GroupBy::K => ("k", "m", "by_k"),
        GroupBy::M => ("m", "k", "by_m"),
    };
    let mut paths = Vec::new();
    for metric in Metric::ALL {
        let path = dir.join(format!("{prefix}_{}_{tag}.csv", metric.name()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([x_name, other_name, "alpha", "n", "mean", "stderr"])?;
        for p in plot_points(rows, metric, group_by) {
            w.write_record([
                p.x.to_string(),
                p.other.to_string(),
                p.alpha.to_string(),
                p.n.to_string(),
                p.mean.to_string(),
                p.stderr.to_string(),
            ])?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes results, summary, timings, failures and plot tables into `dir`.
pub fn write_all(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_results_csv(&out.rows, &dir.join(&cfg.output.results))?;
    write_summary_csv(&summarize(&out.rows), &dir.join(&cfg.output.summary))?;
    write_timings_csv(&out.rows, &dir.join(&cfg.output.timings))?;
    write_failures_csv(&out.failures, &dir.join(&cfg.output.failures))?;
    if !out.rows.is_empty() {
        emit_plotdata(&out.rows, GroupBy::K, dir, &cfg.output.plot_prefix)?;
        emit_plotdata(&out.rows, GroupBy::M, dir, &cfg.output.plot_prefix)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(seed: u64, k: usize, alpha: &str, fi: f64, c_sum: f64) -> ResultRow {
        ResultRow {
            seed,
            k,
            l: 8,
            m: 2,
            alpha: alpha.parse().unwrap(),
            case: 1,
            metrics: MetricsRecord { fi, c_sum, c_min: c_sum / 3.0, per_subnetwork: vec![], all_zero: false },
            objective: -c_sum,
            mc: None,
            wall_time: 0.0,
        }
    }

    const SMALL: &str = r#"
k_list = [6]
l = 6
m_list = [2]
alpha_list = [0, "inf"]
n_layouts = 2
seed = 10
[solver]
t_a = 30
"#;

    #[test]
    fn parses_config() {
        let cfg = ExperimentConfig::from_str_at(SMALL, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.alpha_list, vec![AlphaParam::integer(0), AlphaParam::Infinity]);
        assert_eq!(cfg.solver.t_a, 30);
        assert_eq!(cfg.alpha0, 4.0);
        assert_relative_eq!(cfg.snr_linear(), 1.0);
    }

    #[test]
    fn config_errors() {
        let p = Path::new("x.toml");
        assert!(matches!(ExperimentConfig::from_str_at("k_list = [", p), Err(Error::Parse { .. })));
        let bad_alpha = SMALL.replace("\"inf\"", "0.5");
        assert!(matches!(ExperimentConfig::from_str_at(&bad_alpha, p), Err(Error::Parse { .. })));
        let zero = SMALL.replace("n_layouts = 2", "n_layouts = 0");
        assert!(matches!(ExperimentConfig::from_str_at(&zero, p), Err(Error::Validation { .. })));
        let big_m = SMALL.replace("m_list = [2]", "m_list = [7]");
        assert!(ExperimentConfig::from_str_at(&big_m, p).is_err());
    }

    #[test]
    fn single_combination_gives_one_row() {
        let mut cfg = ExperimentConfig::from_str_at(SMALL, Path::new("x.toml")).unwrap();
        cfg.n_layouts = 1;
        cfg.alpha_list = vec![AlphaParam::integer(0)];
        let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.failures.is_empty());
    }

    #[test]
    fn rows_are_sorted_with_infinity_last() {
        let cfg = ExperimentConfig::from_str_at(SMALL, Path::new("x.toml")).unwrap();
        let out = run_experiment(&cfg, &RunOptions { workers: Some(2), ..Default::default() }).unwrap();
        let keys: Vec<(u64, String)> = out.rows.iter().map(|r| (r.seed, r.alpha.to_string())).collect();
        assert_eq!(
            keys,
            vec![(10, "0".into()), (10, "inf".into()), (11, "0".into()), (11, "inf".into())]
        );
    }

    #[test]
    fn single_row_plot_has_zero_stderr() {
        let pts = plot_points(&[row(1, 10, "0", 0.8, 6.0)], Metric::Fi, GroupBy::K);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].mean, 0.8);
        assert_eq!(pts[0].stderr, 0.0);
    }

    #[test]
    fn hand_aggregated_fixture() {
        let rows = vec![
            row(1, 10, "0", 0.80, 6.0),
            row(2, 10, "0", 0.90, 8.0),
            row(3, 10, "0", 0.70, 7.0),
            row(1, 20, "0", 0.60, 9.0),
            row(1, 10, "inf", 0.95, 5.0),
        ];
        let pts = plot_points(&rows, Metric::CSum, GroupBy::K);
        // alpha 0 at K=10: values 6, 8, 7 -> mean 7, sd 1, stderr 1/sqrt(3)
        let p = pts.iter().find(|p| p.x == 10 && p.alpha == AlphaParam::integer(0)).unwrap();
        assert_eq!(p.n, 3);
        assert_relative_eq!(p.mean, 7.0);
        assert_relative_eq!(p.stderr, 1.0 / 3f64.sqrt());
        // one line per K value in the alpha-0 series
        assert_eq!(pts.iter().filter(|p| p.alpha == AlphaParam::integer(0)).count(), 2);
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_relative_eq!(s[0].fi, 0.8);
        assert!(emit_plotdata(&[], GroupBy::K, Path::new("."), "p").is_err());
    }
}
