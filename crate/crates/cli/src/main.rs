use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use grngc_cli::{commands, RunConfig, TruthOrientation, LAMBDA_SWEEP};
use grngc_core::metrics::EvalMode;

#[derive(Parser)]
#[command(name = "grngc", version, about = "Granger causality from the input gradients of one KAN or MLP forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single seed instead of the configured list
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted override, e.g. train.lambda=1e-2 or data.kind=var (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        let out = cfg.out.clone();
        Ok((cfg, out))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    OffDiagonal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Orientation {
    TargetSource,
    SourceTarget,
}

#[derive(Subcommand)]
enum Command {
    /// Write series.csv and truth.csv from the configured generator
    Simulate(Common),
    /// Train on the configured data and write gc_matrix.csv and train_report.json
    Infer(Common),
    /// Score a gc_matrix.csv against a truth.csv and write metrics.json
    Eval {
        #[arg(long)]
        gc: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        mode: Mode,
        /// Layout of the truth file
        #[arg(long, value_enum, default_value = "target-source")]
        orientation: Orientation,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Simulate or load, train and evaluate over every seed, then summarize
    Run {
        #[command(flatten)]
        common: Common,
        /// Sweep lambda over 1e-4, 1e-3 and 1e-2
        #[arg(long)]
        sweep: bool,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let (cfg, out) = common.resolve()?;
            let (series, truth) = commands::simulate(&cfg, cfg.seeds[0], &out)?;
            println!("wrote {}", series.display());
            if let Some(t) = truth {
                println!("wrote {}", t.display());
            }
        }
        Command::Infer(common) => {
            let (cfg, out) = common.resolve()?;
            let report = commands::infer(&cfg, cfg.seeds[0], &out)?;
            println!(
                "trained {} epochs (best {}) in {:.1} s; wrote {}",
                report.epochs.len(),
                report.best_epoch,
                report.seconds,
                out.join("gc_matrix.csv").display()
            );
        }
        Command::Eval {
            gc,
            truth,
            mode,
            orientation,
            out,
        } => {
            let mode = match mode {
                Mode::Full => EvalMode::Full,
                Mode::OffDiagonal => EvalMode::OffDiagonal,
            };
            let orientation = match orientation {
                Orientation::TargetSource => TruthOrientation::TargetSource,
                Orientation::SourceTarget => TruthOrientation::SourceTarget,
            };
            let m = commands::eval(&gc, &truth, orientation, mode, &out)?;
            println!("AUROC {:.3}  AUPRC {:.3}  ({} edges, {})", m.auroc, m.auprc, m.n_edges, m.mode);
        }
        Command::Run { common, sweep } => {
            let (mut cfg, out) = common.resolve()?;
            if sweep {
                cfg.lambdas = LAMBDA_SWEEP.to_vec();
            }
            let summary = commands::run(&cfg, &out)?;
            print!("{}", commands::render(&summary));
            println!("wrote {}", out.join("summary.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
