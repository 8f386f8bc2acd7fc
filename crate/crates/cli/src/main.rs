use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gapsched::scheduler::GammaSchedule;
use gapsched_cli::commands::{cmd_adapt, cmd_baseline, cmd_fit, cmd_landscape, cmd_report};
use gapsched_cli::{CliError, Context, RunConfig};

#[derive(Parser)]
#[command(
    name = "gapsched",
    version,
    about = "Adaptive sampling of noise specifications for denoiser training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    inner_budget: Option<usize>,
    /// Constant dual step size.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_random: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    degree: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the ideal landscape at the sparse design.
    Landscape(Common),
    /// Fit a quadratic landscape model to the sampled landscape.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Landscape CSV; defaults to landscape.csv in the output directory.
        #[arg(long)]
        landscape: Option<PathBuf>,
    },
    /// Run dual ascent on the sampling distribution.
    Adapt {
        #[command(flatten)]
        common: Common,
        /// Fitted ideal landscape; the ideal is computed directly when omitted.
        #[arg(long)]
        ideal: Option<PathBuf>,
    },
    /// Train once under the uniform distribution.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ideal: Option<PathBuf>,
    },
    /// Join baseline and adapt outputs into a per-point gap table.
    Report(Common),
}

fn context(c: &Common) -> Result<Context, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = &c.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = c.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = c.inner_budget {
        cfg.inner_budget = v;
    }
    if let Some(v) = c.gamma {
        cfg.schedule = GammaSchedule::Constant { gamma: v };
    }
    if let Some(v) = c.n_random {
        cfg.design.n_random = v;
    }
    if let Some(v) = c.ridge {
        cfg.fit.ridge = v;
    }
    if let Some(v) = c.degree {
        cfg.fit.degree = v;
    }
    Context::new(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Landscape(c) => {
            let out = cmd_landscape(&mut context(&c)?)?;
            println!(
                "{}: {} samples ({} computed)",
                out.path.display(),
                out.samples.len(),
                out.computed
            );
        }
        Command::Fit { common, landscape } => {
            let out = cmd_fit(&mut context(&common)?, landscape.as_deref())?;
            let r = &out.report;
            println!(
                "degree {} ridge {}: max residual {:.3e} dB, loo mse {}",
                r.degree,
                r.ridge,
                r.max_abs_residual,
                r.loo_mse.map_or("n/a".into(), |v| format!("{v:.3e}"))
            );
        }
        Command::Adapt { common, ideal } => {
            let out = cmd_adapt(&mut context(&common)?, ideal.as_deref())?;
            if let Some(last) = out.summary.last() {
                println!(
                    "{} iterations: max gap {:.4} dB, mean {:.4} dB, std {:.4} dB",
                    out.summary.iterations.len(),
                    last.max_gap,
                    last.mean_gap,
                    last.std_gap
                );
            }
        }
        Command::Baseline { common, ideal } => {
            let out = cmd_baseline(&mut context(&common)?, ideal.as_deref())?;
            println!(
                "uniform: max gap {:.4} dB, mean {:.4} dB, std {:.4} dB",
                out.gaps.max, out.gaps.mean, out.gaps.std
            );
        }
        Command::Report(c) => {
            let r = cmd_report(&mut context(&c)?)?;
            println!(
                "baseline: max gap {:.4} dB, std {:.4} dB",
                r.baseline.max, r.baseline.std
            );
            println!("adapt:    max gap {:.4} dB, std {:.4} dB", r.adapt.max, r.adapt.std);
            println!("std ratio {:.4}", r.std_ratio);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
