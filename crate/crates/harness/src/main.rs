use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use stacking_core::stackers::solve_bcrp;
use stacking_harness::checks::check_trace;
use stacking_harness::report::{aggregate, read_trace, write_aggregate, write_failure};
use stacking_harness::sweep::write_sweep;
use stacking_harness::{run_experiment, sweep_learning_rates, write_report, ExperimentConfig, HarnessError, Overrides};

#[derive(Parser)]
#[command(name = "stacking", version, about = "Online Bayesian stacking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long, short, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Same as --config.
    #[arg(value_name = "CONFIG", conflicts_with = "config")]
    config_pos: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Steps excluded from summary statistics.
    #[arg(long)]
    suppress: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial and write traces, summaries and the aggregate table.
    Run(RunArgs),
    /// Learning-rate sweep of EG and ONS.
    Sweep(RunArgs),
    /// Best constant weights in hindsight for a trace.
    Bcrp { trace: PathBuf },
    /// Replay the identity and consistency checks on a trace.
    Check { trace: PathBuf },
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let path = self
            .config
            .as_ref()
            .or(self.config_pos.as_ref())
            .ok_or_else(|| HarnessError::Config("no configuration given (use --config)".into()))?;
        let overrides = Overrides {
            trials: self.trials,
            seed: self.seed,
            suppress: self.suppress,
        };
        ExperimentConfig::from_path(path, &overrides)
    }
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<bool> {
    let config = args.load()?;
    let results = run_experiment(&config);
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut ok = Vec::new();
    let mut failed = 0;
    for r in &results {
        match r {
            Ok(report) => {
                let dir = write_report(report, &args.out)?;
                eprintln!("trial {:>3} (seed {}): {}", report.trial, report.seed, dir.display());
                ok.push(report);
            }
            Err(e) => {
                write_failure(e, &args.out)?;
                eprintln!("{e}");
                failed += 1;
            }
        }
    }
    let rows = aggregate(&ok);
    write_aggregate(&rows, &args.out.join("aggregate.csv"))?;
    println!("{:<24} {:>6} {:>12} {:>12} {:>12} {:>12}", "stacker", "trials", "median_pll", "p10", "p90", "regret");
    for r in &rows {
        println!(
            "{:<24} {:>6} {:>12.5} {:>12.5} {:>12.5} {:>12.4}",
            r.label, r.trials, r.median_pll, r.p10_pll, r.p90_pll, r.median_regret
        );
    }
    Ok(failed == 0)
}

fn cmd_sweep(args: &RunArgs) -> anyhow::Result<bool> {
    let config = args.load()?;
    let rows = sweep_learning_rates(&config, &config.sweep.algorithms, &config.sweep.rates)?;
    std::fs::create_dir_all(&args.out)?;
    write_sweep(&rows, &args.out.join("sweep.csv"))?;
    println!("{:<6} {:>10} {:>12} {:>10} {:>6}", "alg", "rate", "median_pll", "std", "valid");
    for r in &rows {
        println!(
            "{:<6} {:>10.0e} {:>12.5} {:>10.5} {:>6}{}",
            r.algorithm,
            r.rate,
            r.median_pll,
            r.std_pll,
            r.weights_valid,
            r.error.as_deref().map(|e| format!("  ({e})")).unwrap_or_default()
        );
    }
    Ok(rows.iter().all(|r| r.error.is_none() && r.weights_valid))
}

fn cmd_bcrp(path: &Path) -> anyhow::Result<bool> {
    let trace = read_trace(path)?;
    let sol = solve_bcrp(&trace.history()?).map_err(HarnessError::from)?;
    let out = serde_json::json!({
        "steps": trace.r.len(),
        "k": trace.k(),
        "weights": sol.weights.as_slice(),
        "log_wealth": sol.log_wealth,
        "gap": sol.gap,
        "iterations": sol.iterations,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(true)
}

fn cmd_check(path: &Path) -> anyhow::Result<bool> {
    let trace = read_trace(path)?;
    let report = check_trace(&trace)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    for i in report.items.iter().filter(|i| !i.passed) {
        eprintln!("FAILED {} {}: {:.3e} ({})", i.label, i.check, i.worst, i.detail);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors count as invalid configuration
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bcrp { trace } => cmd_bcrp(trace),
        Command::Check { trace } => cmd_check(trace),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(2, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
