use clap::{Parser, Subcommand};
use perpsim::config::{parse_config, Scenario};
use perpsim::csvout::{csv_text, emit_csv};
use perpsim::runner::{run_scenario, run_verify_lyapunov, theta_star_report, RunError};
use perpsim::slope::slope_check;
use std::path::PathBuf;
use std::process::ExitCode;

/// Rare-event simulation for Markov-modulated perpetuities.
#[derive(Parser)]
#[command(name = "perpsim", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every scenario in a config file and emit one CSV row each.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (results are identical for any value in reps mode).
        #[arg(long)]
        workers: Option<usize>,
        /// Also write the CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the Cramer root and tilt diagnostics for each scenario's model.
    ThetaStar {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the log-log tail slope over each scenario's deltas grid (SI).
    Slope {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Monte Carlo check of the drift inequality at random tilt-region probes.
    VerifyLyapunov {
        #[arg(long)]
        config: PathBuf,
        /// Number of random probe states per scenario.
        #[arg(long, default_value_t = 100)]
        probes: usize,
        /// One-step samples per probe.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
    /// Run the shipped appendix reproduction grid into a directory.
    ReproduceAppendix {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_scenarios(path: &PathBuf) -> Result<Vec<Scenario>, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut scenarios = parse_config(&text).map_err(|e| RunError::Config(e.to_string()))?;
    if let Ok(seed) = std::env::var("PERPSIM_SEED") {
        let seed: u64 = seed.parse().map_err(|_| {
            RunError::Config(format!("PERPSIM_SEED='{seed}' is not a 64-bit integer"))
        })?;
        for sc in &mut scenarios {
            sc.seed = seed;
        }
    }
    Ok(scenarios)
}

fn dispatch(cmd: Cmd) -> Result<(), RunError> {
    match cmd {
        Cmd::Run {
            config,
            workers,
            out,
        } => {
            let workers = workers.unwrap_or_else(default_workers);
            let scenarios = load_scenarios(&config)?;
            let mut rows = Vec::with_capacity(scenarios.len());
            for sc in &scenarios {
                let outcome = run_scenario(sc, workers)?;
                if let Some(meta) = &outcome.lyapunov_summary {
                    println!("# {} lyapunov: {}", sc.name, meta);
                }
                if let Some(bias) = outcome.bias_note {
                    println!("# {} bias: {}", sc.name, bias);
                }
                if outcome.nondeterministic_n {
                    println!(
                        "# {} ran in budget mode: the replication count is wall-clock dependent",
                        sc.name
                    );
                }
                rows.push(outcome.row);
            }
            print!("{}", csv_text(&rows));
            if let Some(path) = out {
                emit_csv(&path, &rows).map_err(RunError::Io)?;
            }
            Ok(())
        }
        Cmd::ThetaStar { config } => {
            for sc in &load_scenarios(&config)? {
                print!("{}", theta_star_report(sc)?);
            }
            Ok(())
        }
        Cmd::Slope { config, workers } => {
            let workers = workers.unwrap_or_else(default_workers);
            for sc in &load_scenarios(&config)? {
                let fit = slope_check(sc, workers)?;
                println!("{}: slope = {} +/- {}", sc.name, fit.slope, fit.std_err);
                for p in &fit.points {
                    println!(
                        "  delta={} estimate={} std_err={}",
                        p.delta, p.estimate, p.std_err
                    );
                }
            }
            Ok(())
        }
        Cmd::VerifyLyapunov {
            config,
            probes,
            samples,
        } => {
            let mut all_ok = true;
            for sc in &load_scenarios(&config)? {
                let report = run_verify_lyapunov(sc, probes, samples)?;
                println!("# {} lyapunov: {}", sc.name, report.lyapunov_summary);
                for (i, c) in report.checks.iter().enumerate() {
                    println!(
                        "{} probe {} ratio={} se={} {}",
                        sc.name,
                        i,
                        c.ratio,
                        c.std_err,
                        if c.pass { "pass" } else { "FAIL" }
                    );
                }
                let frac = report.passed as f64 / probes.max(1) as f64;
                println!(
                    "{}: {}/{} probes satisfied the drift inequality",
                    sc.name, report.passed, probes
                );
                if frac < 0.95 {
                    all_ok = false;
                }
            }
            if all_ok {
                Ok(())
            } else {
                Err(RunError::Numeric(
                    "drift inequality failed on more than 5% of probes".into(),
                ))
            }
        }
        Cmd::ReproduceAppendix { out, workers } => {
            let workers = workers.unwrap_or_else(default_workers);
            let rows = perpsim::appendix::run_appendix(&out, workers)?;
            eprintln!(
                "wrote {} rows to {}",
                rows.len(),
                out.join("appendix.csv").display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
