use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparsecox_cli::commands::{self, EvaluateInputs};
use sparsecox_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "sparsecox", version, about = "Bayesian intensity estimation for Poisson point processes")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config entry, e.g. `--set n_samples=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw events from a known intensity.
    Simulate {
        /// synthetic-bimodal, constant, piecewise or tabulated.
        #[arg(long)]
        intensity: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Choose inducing points for an event file.
    Select {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the posterior.
    Fit {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        inducing: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Summarize the posterior on the configured grid.
    Predict {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also summarize at the fitted events (requires --data-out).
        #[arg(long, requires = "data_out")]
        events: Option<PathBuf>,
        #[arg(long, requires = "events")]
        data_out: Option<PathBuf>,
    },
    /// Score an estimate against a known intensity and held-out events.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: String,
        #[arg(long, required = true)]
        heldout: Vec<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        fit_summary: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let cfg = RunConfig::load(&path, &cli.overrides)?;
    match cli.command {
        Command::Simulate {
            intensity,
            out,
            replicates,
        } => {
            let m = commands::cmd_simulate(&cfg, &intensity, &out, replicates)?;
            for f in &m.files {
                println!("{}: {} events", f.path.display(), f.count);
            }
        }
        Command::Select { events, out } => {
            let f = commands::cmd_select(&cfg, &events, &out)?;
            let total = f.trace.as_ref().map_or(f.points.len(), |t| t.k());
            println!("{} inducing points (trace of {total})", f.points.len());
        }
        Command::Fit {
            events,
            inducing,
            out,
            chains,
        } => {
            let s = commands::cmd_fit(&cfg, &events, &inducing, &out, chains)?;
            println!(
                "{} draws in {:.2} s, acceptance {:.3}, ESS/1000 {}",
                s.draws,
                s.wall_seconds,
                s.acceptance_rate,
                s.ess_per_1000.map_or("n/a".into(), |e| format!("{e:.1}"))
            );
        }
        Command::Predict {
            samples,
            out,
            events,
            data_out,
        } => {
            let pair = events.as_deref().zip(data_out.as_deref());
            let est = commands::cmd_predict(&cfg, &samples, &out, pair)?;
            println!("{} grid points written to {}", est.len(), out.display());
        }
        Command::Evaluate {
            estimate,
            truth,
            heldout,
            samples,
            fit_summary,
            out,
        } => {
            let inputs = EvaluateInputs {
                estimate: &estimate,
                truth: &truth,
                heldout: &heldout,
                samples: samples.as_deref(),
                fit_summary: fit_summary.as_deref(),
            };
            let r = commands::cmd_evaluate(&cfg, &inputs, &out)?;
            println!("mae {:.4} rmse {:.4} lp {:.3} ± {:.3}", r.mae, r.rmse, r.lp_mean, r.lp_sd);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
