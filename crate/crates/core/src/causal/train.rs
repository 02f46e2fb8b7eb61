use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_windows, standardize, TimeSeries, WindowedDataset};
use crate::diff::{no_grad, Tensor, Var};
use crate::forecast::{Backbone, BackboneKind, SplineSpec};

use super::loss::{infer_gc_matrix, loss_gradients, prediction_loss};
use super::{Adam, CausalError, GcMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lag: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 trains on the full training split every step.
    pub batch_size: usize,
    pub seed: u64,
    pub backbone: BackboneKind,
    /// Hidden layer widths; input and output widths follow from the data.
    pub hidden: Vec<usize>,
    pub spline: SplineSpec,
    /// Epochs without a new best validation prediction loss before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lag: 5,
            lambda: 1e-3,
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 0,
            seed: 0,
            backbone: BackboneKind::Kan,
            hidden: vec![128],
            spline: SplineSpec::default(),
            patience: 30,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CausalError> {
        let bad = |msg: &str| Err(CausalError::Config(msg.to_string()));
        if self.lag == 0 {
            return bad("lag must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 0.5)");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.backbone == BackboneKind::Kan {
            self.spline.validate().map_err(|e| CausalError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Full layer sizes for `p` series.
    pub fn layer_sizes(&self, p: usize) -> Vec<usize> {
        let mut sizes = vec![self.lag * p];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(p);
        sizes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub prediction_loss: f64,
    pub sparsity_loss: f64,
    pub total_loss: f64,
    /// `None` when there is no validation split.
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (best validation loss, or the last one).
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub parameter_count: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub gc_matrix: GcMatrix,
    pub seconds: f64,
}

impl TrainReport {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        let mut a = self.clone();
        a.seconds = other.seconds;
        a == *other
    }
}

/// Trained weights together with the report.
pub struct TrainOutcome {
    pub backbone: Backbone,
    pub dataset: WindowedDataset,
    pub report: TrainReport,
}

pub fn train(series: &TimeSeries, cfg: &TrainConfig) -> Result<TrainReport, CausalError> {
    fit(series, cfg).map(|o| o.report)
}

/// Standardizes, windows, splits chronologically, then optimizes
/// `L_p + lambda * L_s` with Adam. Scores come from the full window set.
pub fn fit(series: &TimeSeries, cfg: &TrainConfig) -> Result<TrainOutcome, CausalError> {
    cfg.validate()?;
    if series.len() <= cfg.lag + 10 {
        return Err(CausalError::TooShort {
            len: series.len(),
            lag: cfg.lag,
        });
    }
    let start = Instant::now();
    let (scaled, _) = standardize(series)?;
    let dataset = make_windows(&scaled, cfg.lag)?;
    let n = dataset.len();
    let n_val = (n as f64 * cfg.validation_fraction).floor() as usize;
    let train_set = dataset.subset(0, n - n_val);
    let val_set = (n_val > 0).then(|| dataset.subset(n - n_val, n));

    let p = series.dim();
    let mut backbone = Backbone::init(cfg.backbone, &cfg.layer_sizes(p), cfg.spline, cfg.seed)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let batches: Vec<WindowedDataset> = if cfg.batch_size == 0 || cfg.batch_size >= train_set.len() {
            vec![train_set.clone()]
        } else {
            order.shuffle(&mut shuffle_rng);
            order.chunks(cfg.batch_size).map(|idx| train_set.select(idx)).collect()
        };
        let (mut lp, mut ls, mut lt) = (0.0, 0.0, 0.0);
        for batch in &batches {
            let (terms, grads) = loss_gradients(&backbone, batch, cfg.lambda)?;
            let total = terms.total;
            if !total.is_finite() || grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
                return Err(CausalError::Diverged { epoch, loss: total });
            }
            let w = batch.len() as f64 / train_set.len() as f64;
            lp += w * terms.prediction;
            ls += w * terms.sparsity;
            lt += w * total;
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            adam.step(&mut backbone.tensors_mut(), &grad_refs);
        }

        let validation_loss = match &val_set {
            Some(v) => Some(validation_loss(&backbone, v)?),
            None => None,
        };
        records.push(EpochRecord {
            epoch,
            prediction_loss: lp,
            sparsity_loss: ls,
            total_loss: lt,
            validation_loss,
        });

        if let Some(vl) = validation_loss {
            if !vl.is_finite() {
                return Err(CausalError::Diverged { epoch, loss: vl });
            }
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, epoch, backbone.tensors().into_iter().cloned().collect()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, tensors)) => {
            backbone.set_tensors(&tensors)?;
            epoch
        }
        None => records.len() - 1,
    };
    let gc_matrix = infer_gc_matrix(&backbone, &dataset)?;
    let report = TrainReport {
        config: cfg.clone(),
        epochs: records,
        best_epoch,
        stopped_early,
        parameter_count: backbone.count_parameters(),
        train_samples: train_set.len(),
        validation_samples: n_val,
        gc_matrix,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        backbone,
        dataset,
        report,
    })
}

fn validation_loss(backbone: &Backbone, set: &WindowedDataset) -> Result<f64, CausalError> {
    let pred = no_grad(|| backbone.forward(&set.inputs))?;
    Ok(prediction_loss(&Var::constant(pred), &set.targets)?.item())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_series(t: usize, p: usize, seed: u64) -> TimeSeries {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..t * p).map(|_| StandardNormal.sample(&mut rng)).collect();
        TimeSeries::new(t, p, v).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            lag: 2,
            epochs: 5,
            hidden: vec![4],
            learning_rate: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for cfg in [
            TrainConfig { lambda: -1.0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { validation_fraction: 0.5, ..Default::default() },
            TrainConfig { lag: 0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(CausalError::Config(_))));
        }
    }

    #[test]
    fn too_short_series() {
        let s = noise_series(12, 2, 0);
        assert!(matches!(train(&s, &small_cfg()), Err(CausalError::TooShort { .. })));
    }

    #[test]
    fn deterministic_and_additive() {
        let s = noise_series(60, 3, 1);
        let a = train(&s, &small_cfg()).unwrap();
        let b = train(&s, &small_cfg()).unwrap();
        assert!(a.same_outcome(&b));
        assert_eq!(a.epochs.len(), 5);
        for r in &a.epochs {
            assert!((r.total_loss - r.prediction_loss - r.sparsity_loss).abs() < 1e-9);
        }
        assert_eq!(a.gc_matrix.dim(), 3);
    }

    #[test]
    fn minibatch_runs() {
        let s = noise_series(60, 2, 2);
        let cfg = TrainConfig {
            batch_size: 16,
            backbone: BackboneKind::Mlp,
            ..small_cfg()
        };
        let r = train(&s, &cfg).unwrap();
        assert_eq!(r.epochs.len(), 5);
    }

    #[test]
    fn divergence_reports_epoch() {
        let s = noise_series(60, 2, 3);
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            backbone: BackboneKind::Mlp,
            ..small_cfg()
        };
        match train(&s, &cfg) {
            Err(CausalError::Diverged { epoch, .. }) => assert!(epoch < 5),
            other => panic!("expected divergence, got {:?}", other.map(|r| r.epochs.len())),
        }
    }
}
