use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use critlab::config::{ExperimentConfig, ExperimentKind, Overrides};
use critlab::error::{HarnessError, Result};
use critlab::verify::{default_fixture_dir, verify};

#[derive(Parser)]
#[command(name = "critlab", version, about = "Experiments on critical lattice models")]
#[command(
    after_help = "Experiments: crossing_sweep, universality, conformal_image, cardy_table, carleson, \
sle_sample, zipper_roundtrip, kappa_estimate, ising_observable, cr_residual\n\n\
Usage: critlab <experiment> --config path.json [--seed N] [--replicas K] [--out dir]"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the regression fixtures and brute-force oracles.
    Verify {
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// SLE traces from Brownian driving functions.
    Sle {
        #[command(subcommand)]
        command: SleCommand,
    },
    /// The fermionic observable of the critical Ising model.
    Ising {
        #[command(subcommand)]
        command: IsingCommand,
    },
    #[command(external_subcommand)]
    Run(Vec<OsString>),
}

#[derive(Subcommand)]
enum SleCommand {
    Sample {
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum IsingCommand {
    Observable {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Total recorded sweeps; accepts forms like `1e6`.
        #[arg(long)]
        samples: f64,
        #[arg(long, default_value_t = 4)]
        chains: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Parser)]
#[command(name = "critlab", no_binary_name = true)]
struct RunArgs {
    experiment: ExperimentKind,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn direct(kind: ExperimentKind, parameters: Value, common: Common) -> Result<()> {
    let doc = json!({
        "experiment": kind,
        "parameters": parameters,
        "seed": common.seed,
        "replicas": common.replicas,
        "output_path": common.out,
    });
    let cfg = ExperimentConfig::from_value(doc, &Overrides::default())?;
    report(&cfg)
}

fn report(cfg: &ExperimentConfig) -> Result<()> {
    let summary = critlab::run(cfg)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Verify { fixtures } => {
            let dir = fixtures.unwrap_or_else(default_fixture_dir);
            let r = verify(&dir)?;
            print!("{}", r.lines());
            if r.passed() {
                Ok(())
            } else {
                Err(HarnessError::Verification(format!(
                    "{} checks failed",
                    r.failures().len()
                )))
            }
        }
        Command::Sle {
            command:
                SleCommand::Sample {
                    kappa,
                    steps,
                    dt,
                    n,
                    stride,
                    common,
                },
        } => direct(
            ExperimentKind::SleSample,
            json!({"kappa": kappa, "steps": steps, "dt": dt, "n": n, "stride": stride}),
            common,
        ),
        Command::Ising {
            command:
                IsingCommand::Observable {
                    rows,
                    cols,
                    samples,
                    chains,
                    common,
                },
        } => {
            if !(samples >= 1.0 && samples.fract() == 0.0 && samples < 1e15) {
                return Err(
                    critlab::ConfigError::invalid("samples", format!("not a positive integer: {samples}")).into(),
                );
            }
            direct(
                ExperimentKind::IsingObservable,
                json!({"rows": rows, "cols": cols, "samples": samples as u64, "chains": chains}),
                common,
            )
        }
        Command::Run(args) => {
            let a = match RunArgs::try_parse_from(args) {
                Ok(a) => a,
                Err(e) => {
                    let _ = e.print();
                    std::process::exit(2);
                }
            };
            let overrides = Overrides {
                experiment: Some(a.experiment),
                seed: a.seed,
                replicas: a.replicas,
                output_path: a.out,
            };
            let cfg = ExperimentConfig::from_path(&a.config, &overrides)?;
            report(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("critlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
