//! Command-line front end: criterion checks, batch simulation, and the
//! Monte Carlo verification suite.
//!
//! Exit codes: 0 success (an INCONCLUSIVE verdict is data, not
//! failure), 1 usage error, 2 validation error, 3 numerical failure,
//! 4 experiment failure.

mod config;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use config::{ConfigError, RunConfig};
use skewcir::criterion::{check_corollary, CriterionError, CriterionReport};
use skewcir::engine::{simulate_path, simulate_summaries, EngineError, PathSummary};
use skewcir::lab::{
    self, suite_csv, ExperimentReport, TestFunctionFlux,
};
use skewcir::report::fmt_f64;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "skewcir", version, about = "Skew-reflected square-root diffusions on a curve: simulate, estimate local times, and check pathwise-uniqueness criteria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the analytic pathwise-uniqueness criterion for the
    /// configured model and curve
    Check(CommonArgs),
    /// Simulate a batch of paths and write per-path summaries
    Simulate(CommonArgs),
    /// Run the selected verification experiments
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (section.key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Directory for CSV reports and the run.meta echo; created if
    /// missing. Without it results go to stdout only.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the seed from the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker-thread count (0 = machine parallelism)
    #[arg(long)]
    threads: Option<usize>,
}

enum CliError {
    Usage(String),
    Validation(String),
    Numerical(String),
    ExperimentFailure,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::ExperimentFailure => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Usage(msg) => CliError::Usage(msg),
            ConfigError::Validation(msg) => CliError::Validation(msg),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NumericalFailure { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<CriterionError> for CliError {
    fn from(e: CriterionError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Check(args) => with_config(args, cmd_check),
        Command::Simulate(args) => with_config(args, cmd_simulate),
        Command::Verify(args) => with_config(args, cmd_verify),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Usage(msg) => eprintln!("usage error: {msg}"),
                CliError::Validation(msg) => eprintln!("validation error: {msg}"),
                CliError::Numerical(msg) => eprintln!("numerical failure: {msg}"),
                CliError::ExperimentFailure => eprintln!("one or more experiments failed"),
            }
            ExitCode::from(err.exit_code())
        }
    }
}

fn with_config(
    args: &CommonArgs,
    run: impl FnOnce(&RunConfig, Option<&Path>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    if cfg.threads > 0 {
        // Ignore the error: the global pool can only be sized once per
        // process, which is fine for a single dispatch.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("run.meta"), cfg.to_text())?;
    }
    run(&cfg, args.out.as_deref())
}

fn cmd_check(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let report = check_corollary(&cfg.params, &cfg.curve, cfg.check_horizon)?;
    print!("{}", report.kv_block());
    if let Some(dir) = out {
        let csv = format!("{}\n{}\n", CriterionReport::csv_header(), report.csv_row());
        std::fs::write(dir.join("criterion_report.csv"), csv)?;
    }
    Ok(())
}

fn summary_csv(summaries: &[PathSummary]) -> String {
    let mut csv = String::from("path_index,R_T,ell0,ell0_plus,ell0_minus,aborted\n");
    for (i, s) in summaries.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i,
            fmt_f64(s.r_terminal),
            fmt_f64(s.ell0),
            fmt_f64(s.ell0_plus),
            fmt_f64(s.ell0_minus),
            u8::from(s.aborted)
        ));
    }
    csv
}

fn cmd_simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let summaries = simulate_summaries(&cfg.params, &cfg.curve, &cfg.sim)?;
    let completed: Vec<f64> = summaries
        .iter()
        .filter(|s| !s.aborted)
        .map(|s| s.r_terminal)
        .collect();
    let aborted = summaries.len() - completed.len();
    if !completed.is_empty() {
        let n = completed.len() as f64;
        let mean = completed.iter().sum::<f64>() / n;
        let var = completed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let stderr = (var / n).sqrt();
        println!("paths={} aborted={aborted}", summaries.len());
        println!("mean_R_T={}", fmt_f64(mean));
        println!("stderr_R_T={}", fmt_f64(stderr));
        type LedgerField = fn(&PathSummary) -> f64;
        let ledger_fields: [(&str, LedgerField); 3] = [
            ("ell0", |s| s.ell0),
            ("ell0_plus", |s| s.ell0_plus),
            ("ell0_minus", |s| s.ell0_minus),
        ];
        for (name, field) in ledger_fields {
            let mean = summaries.iter().map(field).sum::<f64>() / summaries.len() as f64;
            println!("mean_{name}={}", fmt_f64(mean));
        }
    } else {
        println!("paths={} aborted={aborted}", summaries.len());
    }
    if let Some(dir) = out {
        std::fs::write(dir.join("simulation_summary.csv"), summary_csv(&summaries))?;
        for index in 0..cfg.dump_paths.min(cfg.sim.n_paths) {
            let traj = simulate_path(&cfg.params, &cfg.curve, &cfg.sim, index)?;
            let mut csv = String::from("t,R,ell0,ell0_plus,ell0_minus\n");
            let ledger = traj.ledger();
            for (k, &r) in traj.values().iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f64(traj.time(k)),
                    fmt_f64(r),
                    fmt_f64(ledger.symmetric()[k]),
                    fmt_f64(ledger.plus()[k]),
                    fmt_f64(ledger.minus()[k]),
                ));
            }
            std::fs::write(dir.join(format!("path_{index:05}.csv")), csv)?;
        }
    }
    Ok(())
}

fn run_experiment(cfg: &RunConfig, name: &str) -> Result<ExperimentReport, CliError> {
    let report = match name {
        "positivity" => lab::test_positivity_and_occupation(&cfg.params, &cfg.curve, &cfg.sim)?,
        "local-time" => lab::test_local_time_relations(&cfg.params, &cfg.curve, &cfg.sim)?,
        "local-time-control" => {
            lab::test_local_time_relations_control(&cfg.params, &cfg.curve, &cfg.sim)?
        }
        "supinf" => lab::test_supinf_representation(&cfg.params, &cfg.curve, &cfg.sim, cfg.eta)?,
        "martingale" => {
            let tf = TestFunctionFlux::compliant(&cfg.params, cfg.sim.horizon);
            lab::test_martingale_problem(&cfg.params, &cfg.curve, &cfg.sim, &tf)?
        }
        "martingale-control" => {
            lab::test_martingale_problem_control(&cfg.params, &cfg.curve, &cfg.sim)?
        }
        "uniqueness-decay" => {
            lab::test_uniqueness_decay(&cfg.params, &cfg.curve, &cfg.sim, &cfg.ladder)?
        }
        "harmonic" => lab::test_harmonic_martingale(&cfg.params, &cfg.sim)?,
        other => return Err(CliError::Usage(format!("unknown experiment `{other}`"))),
    };
    Ok(report)
}

fn cmd_verify(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    if cfg.experiments.is_empty() {
        return Err(CliError::Usage("verify.experiments resolved to an empty list".into()));
    }
    let mut reports = Vec::new();
    for name in &cfg.experiments {
        let report = run_experiment(cfg, name)?;
        print!("{}", report.kv_block());
        println!();
        reports.push(report);
    }
    let all_ok = reports.iter().all(|r| r.acceptable());
    for r in &reports {
        println!(
            "{}: {} ({}){}",
            r.name,
            r.outcome,
            r.kind,
            if r.acceptable() { "" } else { "  <-- unacceptable" }
        );
    }
    if let Some(dir) = out {
        std::fs::write(dir.join("verify_suite.csv"), suite_csv(&reports))?;
    }
    if all_ok {
        Ok(())
    } else {
        Err(CliError::ExperimentFailure)
    }
}
