use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gtstorm::config::{load_config, ConfigError, RunConfig};
use gtstorm::harness::{self, HarnessError, SweepSpec};

#[derive(Parser)]
#[command(name = "gtstorm", version, about = "Decentralized GT-STORM / DSGD / GNSD simulator")]
struct Cli {
    /// Enable invariant assertions on every iteration.
    #[arg(long, global = true)]
    check: bool,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all trials of one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configuration once per value of one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of pc, m, rho, eta0.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

fn load(path: &PathBuf, check: bool) -> Result<RunConfig, ConfigError> {
    let mut config = load_config(path)?;
    config.run.check_mode |= check;
    Ok(config)
}

fn exit_for(err: &HarnessError) -> ExitCode {
    match err {
        HarnessError::Config(_) => ExitCode::from(EXIT_CONFIG),
        HarnessError::Invariant(_) => ExitCode::from(EXIT_INVARIANT),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Run { config } => {
            let config = match load(&config, cli.check) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match harness::run_and_write(&config) {
                Ok(out) => {
                    if !cli.quiet {
                        let s = &out.summary;
                        println!(
                            "{}: final stationarity {:.6e} ± {:.3e} at t={} ({}/{} trials completed)",
                            s.algorithm.name(),
                            s.final_stationarity_mean,
                            s.final_stationarity_std,
                            s.final_t,
                            s.completed_trials,
                            s.trials
                        );
                    }
                    if out.has_violation() {
                        for t in out.trials.iter().filter_map(|t| t.violation.as_ref()) {
                            eprintln!("invariant violation: {t}");
                        }
                        ExitCode::from(EXIT_INVARIANT)
                    } else if out.summary.partial {
                        ExitCode::FAILURE
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    exit_for(&e)
                }
            }
        }
        Command::Sweep { config, axis, values } => {
            let spec = (|| -> Result<SweepSpec, ConfigError> {
                Ok(SweepSpec {
                    base: load(&config, cli.check)?,
                    axis: axis.parse()?,
                    values: harness::parse_values(&values)?,
                })
            })();
            let spec = match spec {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match harness::sweep(&spec) {
                Ok(summary) => {
                    if !cli.quiet {
                        for e in &summary.entries {
                            println!(
                                "{}={}: final stationarity {:.6e}",
                                spec.axis.name(),
                                e.value,
                                e.summary.final_stationarity_mean
                            );
                        }
                        println!("trend: {:?}", summary.final_stationarity_trend);
                    }
                    let violated = summary
                        .entries
                        .iter()
                        .any(|e| e.summary.checks.as_ref().is_some_and(|c| !c.violations.is_empty()));
                    if violated {
                        ExitCode::from(EXIT_INVARIANT)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    exit_for(&e)
                }
            }
        }
    }
}
