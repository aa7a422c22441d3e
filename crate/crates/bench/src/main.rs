use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsbo_bench::aggregate::{aggregate, load_dir, write_outputs};
use dsbo_bench::config::{ExperimentConfig, Settings};
use dsbo_bench::demo::{demo_traces, write_demo_csv};
use dsbo_bench::experiment::{run_experiment, ExperimentError};

const EXIT_RUN_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "dsbo-bench", version, about = "Benchmarks for boundary-aware Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated optimizations and write one trace per run and variant.
    Run(RunArgs),
    /// Summarize traces as p25/p50/p75 incumbent curves.
    Aggregate {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Acquisitions of VBO and DBO on the two-Gaussian objective, as CSV.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 15)]
        budget: usize,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file. Flags take precedence over its values.
    #[arg(long, env = "DSBO_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,
    /// two_gaussian, mnd, mnd_border or library.
    #[arg(long)]
    suite: Option<String>,
    /// Comma-separated subset of VBO,DBO,ADBO.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long)]
    runs: Option<usize>,
    /// Evaluations after the initial design.
    #[arg(long)]
    budget: Option<usize>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overwrite existing traces.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    workers: Option<usize>,
}

fn run(args: RunArgs) -> ExitCode {
    let file = match &args.config {
        Some(p) => match Settings::from_file(p) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => Settings::default(),
    };
    let flags = Settings {
        suite: args.suite,
        variants: args.variants,
        runs: args.runs,
        budget: args.budget,
        base_seed: args.seed,
        out: args.out,
        workers: args.workers,
        ..Settings::default()
    };
    let cfg = match ExperimentConfig::resolve(file.merged(flags)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run_experiment(&cfg, args.force) {
        Ok(report) => {
            for f in report.failures() {
                eprintln!("run {} {} failed: {}", f.run, f.variant, f.error.as_deref().unwrap_or(""));
            }
            println!(
                "wrote {} traces to {}",
                report.outcomes.len() - report.failures().count(),
                cfg.out.display()
            );
            if report.all_succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_RUN_FAILURE)
            }
        }
        Err(e @ ExperimentError::WouldOverwrite(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUN_FAILURE)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Aggregate { input, out } => {
            let result = load_dir(&input).and_then(|t| aggregate(&t)).and_then(|rows| Ok(write_outputs(&rows, &out)?));
            match result {
                Ok(paths) => {
                    for p in paths {
                        println!("wrote {}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUN_FAILURE)
                }
            }
        }
        Command::Demo { seed, budget, out } => {
            let traces = match demo_traces(seed, budget) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUN_FAILURE);
                }
            };
            let written = match &out {
                Some(p) => std::fs::File::create(p).and_then(|f| {
                    let mut w = std::io::BufWriter::new(f);
                    write_demo_csv(&mut w, &traces)?;
                    w.flush()
                }),
                None => write_demo_csv(std::io::stdout().lock(), &traces),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUN_FAILURE)
                }
            }
        }
    }
}
