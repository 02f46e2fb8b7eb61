//! The four subcommands. Every fallible step is tagged with the stage it
//! belongs to so failures read as `stage: cause`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use grngc_core::causal::{train, TrainReport};
use grngc_core::data::{save_csv, save_truth};
use grngc_core::metrics::{evaluate, EvalMode, MetricsReport};
use grngc_core::{AdjacencyTruth, GcMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{read_truth, RunConfig, TruthOrientation};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("write: cannot create {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("write: cannot write {}", path.display()))
}

/// Writes `series.csv` and, when known, `truth.csv` for repetition `seed`.
pub fn simulate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(PathBuf, Option<PathBuf>)> {
    let (series, truth) = cfg.data.load(seed).context("simulate")?;
    create_dir(out)?;
    let series_path = out.join("series.csv");
    save_csv(&series, &series_path, b',').context("write")?;
    let truth_path = match truth {
        Some(t) => {
            let path = out.join("truth.csv");
            save_truth(&t, &path).context("write")?;
            Some(path)
        }
        None => None,
    };
    Ok((series_path, truth_path))
}

/// Trains on the configured data and writes `gc_matrix.csv`,
/// `gc_matrix.json` and `train_report.json`.
pub fn infer(cfg: &RunConfig, seed: u64, out: &Path) -> Result<TrainReport> {
    let (series, _) = cfg.data.load(seed).context("load")?;
    let train_cfg = grngc_core::TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let report = train(&series, &train_cfg).context("train")?;
    write_scores(&report, out)?;
    Ok(report)
}

fn write_scores(report: &TrainReport, out: &Path) -> Result<()> {
    create_dir(out)?;
    report.gc_matrix.save_csv(&out.join("gc_matrix.csv")).context("write")?;
    write_json(&out.join("gc_matrix.json"), &report.gc_matrix)?;
    write_json(&out.join("train_report.json"), report)
}

/// Scores a saved matrix against a truth file and writes `metrics.json`.
pub fn eval(gc: &Path, truth: &Path, orientation: TruthOrientation, mode: EvalMode, out: &Path) -> Result<MetricsReport> {
    let matrix = GcMatrix::load_csv(gc).with_context(|| format!("load: score matrix {}", gc.display()))?;
    let truth = read_truth(truth, orientation, mode == EvalMode::Full)
        .with_context(|| format!("load: truth {}", truth.display()))?;
    let metrics = evaluate(&matrix, &truth, mode).context("eval")?;
    create_dir(out)?;
    write_json(&out.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

/// One (seed, lambda) point of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub lambda: f64,
    pub dir: PathBuf,
    pub metrics: Option<MetricsReport>,
    pub epochs: usize,
    pub best_epoch: usize,
    pub final_prediction_loss: f64,
    pub seconds: f64,
}

/// Mean and sample standard deviation over the seeds of one lambda.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub lambda: f64,
    pub runs: usize,
    pub auroc_mean: Option<f64>,
    pub auroc_std: Option<f64>,
    pub auprc_mean: Option<f64>,
    pub auprc_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: RunConfig,
    pub mode: EvalMode,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn lambda_dir(lambda: f64) -> String {
    format!("lambda_{lambda:e}")
}

/// Worker pool size: `GRNGC_THREADS` when set, else the machine's cores.
pub fn thread_count() -> Result<usize> {
    match std::env::var("GRNGC_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("GRNGC_THREADS must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run_one(cfg: &RunConfig, seed: u64, lambda: f64, dir: &Path) -> Result<RunRecord> {
    let (series, truth) = cfg
        .data
        .load(seed)
        .with_context(|| format!("simulate (seed {seed})"))?;
    let train_cfg = grngc_core::TrainConfig {
        seed,
        lambda,
        ..cfg.train.clone()
    };
    let report = train(&series, &train_cfg).with_context(|| format!("train (seed {seed}, lambda {lambda:e})"))?;
    write_scores(&report, dir)?;
    let metrics = match &truth {
        Some(t) => {
            let m = score(&report.gc_matrix, t, cfg.metric_mode()).with_context(|| format!("eval (seed {seed})"))?;
            write_json(&dir.join("metrics.json"), &m)?;
            Some(m)
        }
        None => None,
    };
    let last = report.epochs.last().map_or(f64::NAN, |e| e.prediction_loss);
    Ok(RunRecord {
        seed,
        lambda,
        dir: dir.to_path_buf(),
        metrics,
        epochs: report.epochs.len(),
        best_epoch: report.best_epoch,
        final_prediction_loss: last,
        seconds: report.seconds,
    })
}

fn score(gc: &GcMatrix, truth: &AdjacencyTruth, mode: EvalMode) -> Result<MetricsReport> {
    Ok(evaluate(gc, truth, mode)?)
}

/// Simulate (or load), train and evaluate every seed and lambda, then
/// aggregate into `summary.json`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    cfg.validate().context("config")?;
    let lambdas = cfg.lambda_grid();
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        let seed_dir = out.join(format!("seed_{seed}"));
        simulate(cfg, seed, &seed_dir)?;
        for &lambda in &lambdas {
            let dir = if lambdas.len() == 1 { seed_dir.clone() } else { seed_dir.join(lambda_dir(lambda)) };
            jobs.push((seed, lambda, dir));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .context("thread pool")?;
    let results: Vec<Result<RunRecord>> =
        pool.install(|| jobs.par_iter().map(|(seed, lambda, dir)| run_one(cfg, *seed, *lambda, dir)).collect());
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let aggregates = lambdas
        .iter()
        .map(|&lambda| {
            let group: Vec<&RunRecord> = runs.iter().filter(|r| r.lambda == lambda).collect();
            let metrics: Vec<&MetricsReport> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let stat = |f: fn(&MetricsReport) -> f64| {
                (!metrics.is_empty()).then(|| mean_std(&metrics.iter().map(|m| f(m)).collect::<Vec<_>>()))
            };
            let (roc, pr) = (stat(|m| m.auroc), stat(|m| m.auprc));
            Aggregate {
                lambda,
                runs: group.len(),
                auroc_mean: roc.map(|s| s.0),
                auroc_std: roc.map(|s| s.1),
                auprc_mean: pr.map(|s| s.0),
                auprc_std: pr.map(|s| s.1),
            }
        })
        .collect();
    let summary = Summary {
        config: cfg.clone(),
        mode: cfg.metric_mode(),
        runs,
        aggregates,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Console table, three decimals.
pub fn render(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>9} {:>7} {:>7} {:>7} {:>9}", "seed", "lambda", "AUROC", "AUPRC", "epochs", "seconds");
    for r in &summary.runs {
        let _ = writeln!(
            s,
            "{:>6} {:>9.1e} {:>7} {:>7} {:>7} {:>9.1}",
            r.seed,
            r.lambda,
            cell(r.metrics.as_ref().map(|m| m.auroc)),
            cell(r.metrics.as_ref().map(|m| m.auprc)),
            r.epochs,
            r.seconds
        );
    }
    for a in &summary.aggregates {
        if let (Some(rm), Some(rs), Some(pm), Some(ps)) = (a.auroc_mean, a.auroc_std, a.auprc_mean, a.auprc_std) {
            let _ = writeln!(
                s,
                "lambda {:.1e} over {} seed(s): AUROC {rm:.3} ± {rs:.3}  AUPRC {pm:.3} ± {ps:.3}  ({})",
                a.lambda, a.runs, summary.mode
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_dirs() {
        assert_eq!(lambda_dir(1e-3), "lambda_1e-3");
        assert_eq!(lambda_dir(0.0), "lambda_0e0");
    }
}
