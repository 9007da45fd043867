//! `qtag`: run, validate and replay tagging experiments.
//!
//! Exit codes: 0 success, 1 other failure (I/O, replay mismatch),
//! 2 configuration invalid, 3 invariant violation during a run.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qtag_core::engine::{replay, run, trial_seed, SimError, Trace};
use qtag_core::experiment::{emit_report, load_config, run_experiment, ConfigError, ReportFormat};

const EXIT_OTHER: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "qtag", version, about = "Position authentication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Records,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep row of a scenario file and print the report.
    Run {
        config: PathBuf,
        #[arg(long, env = "QTAG_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Worker threads, 0 for all cores.
        #[arg(long, env = "QTAG_WORKERS")]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Also write the trace of trial 0 of the first row here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Re-run a trace and audit its adversary injections.
    Replay { trace: PathBuf },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => EXIT_OTHER,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::Invalid(_) => EXIT_INVALID,
            e if e.is_invariant_violation() => EXIT_INVARIANT,
            _ => EXIT_OTHER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_OTHER,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            seed,
            trials,
            workers,
            format,
            trace,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            if let Some(t) = trials {
                cfg.experiment.trials = t;
            }
            if let Some(w) = workers {
                cfg.experiment.workers = w;
            }
            cfg.validate().map_err(|e| Failure::from(ConfigError::Invalid(e)))?;
            let report = run_experiment(&cfg)?;
            if let Some(path) = trace {
                if let Some(point) = cfg.sweep_points().first() {
                    let sc = cfg.scenario_at(point).map_err(SimError::Invalid)?;
                    let seed = trial_seed(trial_seed(cfg.experiment.seed, 0), 0);
                    let out = run(&sc, seed)?;
                    let file = BufWriter::new(File::create(&path)?);
                    out.trace.expect("run records a trace").write_ndjson(file)?;
                }
            }
            let format = match format {
                Format::Table => ReportFormat::Table,
                Format::Records => ReportFormat::Records,
            };
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            emit_report(&report, format, &mut lock)?;
            lock.flush()?;
            Ok(())
        }
        Command::Replay { trace } => {
            let file = File::open(&trace)?;
            let trace = Trace::read_ndjson(BufReader::new(file)).map_err(|e| Failure {
                code: EXIT_OTHER,
                message: e.to_string(),
            })?;
            let report = replay(&trace)?;
            println!("records: {}", report.records);
            match &report.divergence {
                None => println!("replay: identical"),
                Some(d) => println!(
                    "replay: diverged at record {}\n  expected: {}\n  found:    {}",
                    d.index,
                    d.expected.as_deref().unwrap_or("<end of trace>"),
                    d.found.as_deref().unwrap_or("<end of trace>")
                ),
            }
            println!("audit violations: {}", report.violations.len());
            for v in &report.violations {
                println!("  record {}: {}", v.index, v.detail);
            }
            if report.is_ok() {
                Ok(())
            } else {
                Err(Failure {
                    code: EXIT_OTHER,
                    message: "trace does not replay cleanly".into(),
                })
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("ok: {} configuration(s)", cfg.sweep_points().len());
            Ok(())
        }
    }
}
