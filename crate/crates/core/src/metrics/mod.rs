//! Threshold-free scoring of a causal score matrix against known edges.
//!
//! Both metrics are rank statistics. AUROC uses midranks for tied scores;
//! AUPRC is average precision with each run of tied scores treated as a
//! single threshold step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::GcMatrix;
use crate::data::AdjacencyTruth;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("score matrix is {gc}x{gc} but truth is {truth}x{truth}")]
    DimensionMismatch { gc: usize, truth: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no edges to score")]
    Empty,
    #[error("score {index} is not finite")]
    NonFinite { index: usize },
    #[error("AUROC needs both classes, got {positives} positive and {negatives} negative labels")]
    SingleClass { positives: usize, negatives: usize },
    #[error("AUPRC needs at least one positive label")]
    NoPositives,
}

/// Which cells of a `p x p` matrix take part in scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// All `p^2` cells, self-loops included.
    #[default]
    Full,
    /// The `p^2 - p` cells with target != source.
    OffDiagonal,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalMode::Full => "full",
            EvalMode::OffDiagonal => "off_diagonal",
        })
    }
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(EvalMode::Full),
            "off_diagonal" | "off-diagonal" => Ok(EvalMode::OffDiagonal),
            other => Err(format!("unknown metric mode {other:?} (expected full or off_diagonal)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeScorePairs {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub mode: EvalMode,
}

impl EdgeScorePairs {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>, mode: EvalMode) -> Result<Self, MetricsError> {
        if scores.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MetricsError::NonFinite { index });
        }
        Ok(Self { scores, labels, mode })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Row-major cells of `gc` paired with the truth at the same
/// `(target, source)` position.
pub fn flatten(gc: &GcMatrix, truth: &AdjacencyTruth, mode: EvalMode) -> Result<EdgeScorePairs, MetricsError> {
    if gc.dim() != truth.dim() {
        return Err(MetricsError::DimensionMismatch {
            gc: gc.dim(),
            truth: truth.dim(),
        });
    }
    let p = gc.dim();
    let mut scores = Vec::with_capacity(p * p);
    let mut labels = Vec::with_capacity(p * p);
    for j in 0..p {
        for i in 0..p {
            if mode == EvalMode::OffDiagonal && i == j {
                continue;
            }
            scores.push(gc.get(j, i));
            labels.push(truth.get(j, i));
        }
    }
    EdgeScorePairs::new(scores, labels, mode)
}

/// Tie groups in descending score order as `(size, positives)`.
fn descending_groups(pairs: &EdgeScorePairs) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs.scores[b].total_cmp(&pairs.scores[a]));
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let score = pairs.scores[order[start]];
        let mut end = start;
        let mut pos = 0;
        while end < order.len() && pairs.scores[order[end]] == score {
            pos += usize::from(pairs.labels[order[end]]);
            end += 1;
        }
        groups.push((end - start, pos));
        start = end;
    }
    groups
}

/// Mann-Whitney AUROC with midranks for ties.
pub fn auroc(pairs: &EdgeScorePairs) -> Result<f64, MetricsError> {
    let n_pos = pairs.positives();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    // ascending ranks 1..=n; a tie group spanning ranks lo..=hi shares (lo + hi) / 2
    let mut rank_sum = 0.0;
    let mut above = pairs.len();
    for (size, pos) in descending_groups(pairs) {
        let hi = above as f64;
        let lo = (above - size + 1) as f64;
        rank_sum += pos as f64 * (lo + hi) / 2.0;
        above -= size;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Average precision, one step per distinct score.
pub fn auprc(pairs: &EdgeScorePairs) -> Result<f64, MetricsError> {
    let n_pos = pairs.positives();
    if n_pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    // sum of precision * (new positives), divided once so a perfect ranking gives exactly 1
    let (mut tp, mut seen, mut weighted) = (0usize, 0usize, 0.0);
    for (size, pos) in descending_groups(pairs) {
        tp += pos;
        seen += size;
        if pos > 0 {
            weighted += tp as f64 / seen as f64 * pos as f64;
        }
    }
    Ok(weighted / n_pos as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub auprc: f64,
    /// Number of scored cells.
    pub n_edges: usize,
    pub n_positive: usize,
    pub mode: EvalMode,
}

pub fn evaluate(gc: &GcMatrix, truth: &AdjacencyTruth, mode: EvalMode) -> Result<MetricsReport, MetricsError> {
    let pairs = flatten(gc, truth, mode)?;
    Ok(MetricsReport {
        auroc: auroc(&pairs)?,
        auprc: auprc(&pairs)?,
        n_edges: pairs.len(),
        n_positive: pairs.positives(),
        mode,
    })
}
