use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
k_list = [6, 8]
l = 6
m_list = [2]
alpha_list = [0, "1/2", 3, "inf"]
n_layouts = 2
seed = 11

[solver]
t_a = 100
"#;

fn ccfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccfair")).args(args).output().expect("run ccfair")
}

fn run_config(dir: &Path, config: &str, out: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("cfg.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join(out);
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    ccfair(&args)
}

#[test]
fn run_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), SMALL, "out", &[]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for name in ["results.csv", "summary.csv", "timings.csv", "failures.csv"] {
        assert!(o.join(name).exists(), "{name} missing");
    }
    for metric in ["fi", "c_sum_bits", "c_min_bits"] {
        for tag in ["by_k", "by_m"] {
            assert!(o.join(format!("plot_{metric}_{tag}.csv")).exists());
        }
    }
    let results = fs::read_to_string(o.join("results.csv")).unwrap();
    // header plus 2 layouts x 2 K values x 4 alphas
    assert_eq!(results.lines().count(), 1 + 16);
    assert!(!results.contains("wall"), "timings belong in their own file");
    let summary = fs::read_to_string(o.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 8);
    assert_eq!(fs::read_to_string(o.join("failures.csv")).unwrap().lines().count(), 1);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_config(dir.path(), SMALL, "a", &[]).status.success());
    assert!(run_config(dir.path(), SMALL, "b", &["--workers", "3"]).status.success());
    for name in ["results.csv", "summary.csv", "plot_fi_by_k.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn mc_validation_fills_the_mc_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = "k_list = [6]\nl = 4\nm_list = [2]\nalpha_list = [0]\nn_layouts = 1\nseed = 3\nmc_samples = 500\n";
    let out = run_config(dir.path(), config, "out", &["--mc-validate"]);
    assert!(out.status.success());
    let results = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(results.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "mc_c_sum_bits").unwrap();
    let row = rdr.records().next().unwrap().unwrap();
    let mc: f64 = row[col].parse().unwrap();
    assert!(mc > 0.0);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_alpha = SMALL.replace("\"1/2\"", "\"half\"");
    assert_eq!(run_config(dir.path(), &bad_alpha, "out", &[]).status.code(), Some(2));

    let unknown = format!("{SMALL}\nbogus = 1\n").replace("[solver]\nt_a = 100\n", "");
    assert_eq!(run_config(dir.path(), &unknown, "out", &[]).status.code(), Some(2));

    let invalid = SMALL.replace("n_layouts = 2", "n_layouts = 0");
    let out = run_config(dir.path(), &invalid, "out", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_layouts"));

    let missing = dir.path().join("nope.toml");
    let out = ccfair(&["run", "--config", missing.to_str().unwrap(), "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_runs_exit_with_3_and_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let config = "k_list = [2, 4]\nl = 4\nm_list = [3]\nalpha_list = [0]\nn_layouts = 1\nseed = 1\n";
    let out = run_config(dir.path(), config, "out", &[]);
    assert_eq!(out.status.code(), Some(3));
    let failures = fs::read_to_string(dir.path().join("out/failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 2);
    assert!(failures.contains("infeasible"));
    // The feasible run is still written.
    let results = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
}

#[test]
fn json_configs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"k_list": [5], "l": 4, "m_list": [2], "alpha_list": ["inf"], "n_layouts": 1, "seed": 2, "solver": {"t_a": 50}}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = ccfair(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_prints_one_row_per_seed() {
    let out = ccfair(&["oracle", "--k", "4", "--m", "2", "--alpha", "1", "--seeds", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("seed,alpha,case"));
    for line in &lines[1..] {
        let gap: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(gap >= -1e-9, "no solver can beat exhaustive search: {line}");
    }
}

#[test]
fn de_check_reports_relative_errors() {
    let out = ccfair(&["de-check", "--instances", "1", "--samples", "2000"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_arguments_are_rejected() {
    let out = ccfair(&["oracle", "--k", "4", "--m", "2", "--alpha", "-1"]);
    assert!(!out.status.success());
    let out = ccfair(&["oracle", "--k", "2", "--m", "3"]);
    assert_eq!(out.status.code(), Some(3));
}
