use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use codeflow::experiment::{self, ExperimentConfig, EXIT_USAGE, EXIT_VERIFICATION};
use codeflow::random_fields::FieldSampleSpec;

#[derive(Parser)]
#[command(name = "codeflow", version, about = "Controlled-flow interpolation experiments")]
struct Cli {
    /// Seed for randomized commands (overrides the config seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (CODEFLOW_OUT takes precedence)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON experiment config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check sl generation, the bracket identities and polynomial degree cover
    Verify {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
    /// Tabulate free Lie algebra dimensions against d^n
    Witt {
        #[arg(long)]
        d: u64,
        #[arg(long = "max-n")]
        max_n: u64,
    },
    /// Train controls for a training set
    Interpolate,
    /// Rank test of the interpolation matrix at a tuple
    Rank {
        /// Sweep this many consecutive seeds
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Integrate a controlled flow, or run the commutator sweep
    Flow {
        #[arg(long)]
        variation: bool,
        #[arg(long)]
        commutator: bool,
    },
    /// Sample random polynomial fields
    Sample {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
}

fn config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let path = cli.config.as_ref().context("this command needs --config <path>")?;
    Ok(ExperimentConfig::load(path)?.with_seed(cli.seed))
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let out = experiment::resolve_out_dir(cli.out.clone());
    match &cli.command {
        Command::Verify { m, degree } => {
            let report = experiment::cmd_verify(*m, *degree)?;
            experiment::save_report(&out, "verify.json", &report)?;
            print_json(&report)?;
            for label in &report.failed_identities {
                eprintln!("failed identity: {label}");
            }
            Ok(report.exit_code())
        }
        Command::Witt { d, max_n } => {
            let rows = experiment::cmd_witt(*d, *max_n)?;
            print!("{}", experiment::witt_csv(&rows));
            if experiment::witt_consistent(&rows) {
                Ok(0)
            } else {
                eprintln!("Witt dimension disagrees with the Lyndon word count");
                Ok(EXIT_VERIFICATION)
            }
        }
        Command::Interpolate => {
            let outcome = experiment::cmd_interpolate(&config(&cli)?, &out)?;
            print_json(&outcome)?;
            Ok(outcome.exit_code())
        }
        Command::Rank { seeds } => {
            let sweep = experiment::cmd_rank(&config(&cli)?, *seeds)?;
            experiment::save_report(&out, "rank.json", &sweep)?;
            print_json(&sweep)?;
            Ok(0)
        }
        Command::Flow { variation, commutator } => {
            if *commutator {
                let spec = match &cli.config {
                    Some(_) => config(&cli)?.commutator.unwrap_or_default(),
                    None => Default::default(),
                };
                let (_, path) = experiment::cmd_commutator(&spec, &out)?;
                print!("{}", std::fs::read_to_string(&path)?);
                return Ok(0);
            }
            let path = experiment::cmd_flow(&config(&cli)?, *variation, &out)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Sample { m, d, k } => {
            let mut spec: FieldSampleSpec = match &cli.config {
                Some(p) => experiment::load_json(p)?,
                None => FieldSampleSpec::new(
                    m.context("sample needs --m or --config")?,
                    d.unwrap_or(5),
                    k.unwrap_or(2),
                    0,
                ),
            };
            if let Some(v) = m {
                spec.m = *v;
            }
            if let Some(v) = d {
                spec.d = *v;
            }
            if let Some(v) = k {
                spec.k = *v;
            }
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let path = experiment::cmd_sample(&spec, &out)?;
            println!("{}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<codeflow::Error>()
                .map_or(EXIT_USAGE, experiment::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
