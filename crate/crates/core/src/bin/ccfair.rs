use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccfair::experiment::{run_experiment, write_all, ExperimentConfig, RunOptions};
use ccfair::partition::balanced_kmeans;
use ccfair::scenario::{generate_layout, theta_matrix};
use ccfair::solvers::{brute_force_decompose, de_capacities_bits, solve, Decomposition, SolverConfig};
use ccfair::{capacity, AlphaParam, Error};

/// Alpha-fair user clustering for clustered cell-free networks.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a TOML (or JSON) config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also compute Monte Carlo metrics for every row.
        #[arg(long)]
        mc_validate: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compare a solver against exhaustive search on small random layouts.
    Oracle {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        l: usize,
        #[arg(long, default_value = "0")]
        alpha: AlphaParam,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare DE capacities against Monte Carlo on random layouts.
    DeCheck {
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        l: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        instances: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Parse { .. } | Error::Validation { .. } | Error::InvalidArgument(_) => ExitCode::from(EXIT_CONFIG),
        Error::Solver(_) | Error::Infeasible(_) | Error::NonFinite(_) => ExitCode::from(EXIT_SOLVER),
        _ => ExitCode::FAILURE,
    }
}

fn run(config: PathBuf, out: PathBuf, mc_validate: bool, workers: Option<usize>) -> ExitCode {
    let cfg = match ExperimentConfig::load(&config) {
        Ok(cfg) => cfg,
        Err(e @ Error::Io(_)) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => return fail(&e),
    };
    let result = run_experiment(&cfg, &RunOptions { mc_validate, workers })
        .and_then(|res| write_all(&cfg, &res, &out).map(|_| res));
    match result {
        Ok(res) if res.failures.is_empty() => {
            println!("{} rows written to {}", res.rows.len(), out.display());
            ExitCode::SUCCESS
        }
        Ok(res) => {
            eprintln!("{} of {} runs failed; see {}", res.failures.len(), res.failures.len() + res.rows.len(), cfg.output.failures.display());
            ExitCode::from(EXIT_SOLVER)
        }
        Err(e) => fail(&e),
    }
}

fn oracle(k: usize, m: usize, l: usize, alpha: AlphaParam, seeds: u64, seed: u64) -> ccfair::Result<()> {
    println!("seed,alpha,case,solver_objective,optimum,relative_gap");
    for s in seed..seed + seeds {
        let scenario = generate_layout(k, l, 4.0, 1.0, s)?;
        let partition = balanced_kmeans(&scenario.bs_positions, m, s, 100)?;
        let theta = theta_matrix(&scenario);
        let report = solve(&theta, &partition, alpha, &SolverConfig { seed: s, ..Default::default() })?;
        let best = brute_force_decompose(&theta, &partition, alpha)?;
        let gap = (report.objective - best.objective) / best.objective.abs().max(f64::MIN_POSITIVE);
        println!("{s},{alpha},{},{},{},{gap}", report.case.number(), report.objective, best.objective);
    }
    Ok(())
}

fn de_check(k: usize, l: usize, m: usize, instances: u64, samples: usize, seed: u64) -> ccfair::Result<()> {
    println!("seed,subnetwork,de_bits,mc_bits,relative_error");
    for s in seed..seed + instances {
        let scenario = generate_layout(k, l, 4.0, 1.0, s)?;
        let partition = balanced_kmeans(&scenario.bs_positions, m, s, 100)?;
        let user_of = (0..k).map(|u| u % m).collect();
        let d = Decomposition::new(user_of, partition)?;
        let de = de_capacities_bits(&theta_matrix(&scenario), &d)?;
        for (j, de_j) in de.iter().enumerate() {
            let mc = capacity::mc_ergodic_capacity(&scenario, &d, j, samples, s)?;
            println!("{s},{j},{de_j},{mc},{}", (de_j - mc).abs() / mc);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, mc_validate, workers } => run(config, out, mc_validate, workers),
        Command::Oracle { k, m, l, alpha, seeds, seed } => match oracle(k, m, l, alpha, seeds, seed) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        },
        Command::DeCheck { k, l, m, instances, samples, seed } => match de_check(k, l, m, instances, samples, seed) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        },
    }
}
