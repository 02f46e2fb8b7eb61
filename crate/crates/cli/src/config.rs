//! Run configuration: JSON on disk, dotted `key=value` overrides on the
//! command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use grngc_core::causal::TrainConfig;
use grngc_core::data::{
    load_csv, load_truth, random_sparse_var, simulate_lorenz96, simulate_var, Lorenz96Config, VarConfig,
};
use grngc_core::metrics::EvalMode;
use grngc_core::{AdjacencyTruth, TimeSeries};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Penalty weights tried by `run --sweep`.
pub const LAMBDA_SWEEP: [f64; 3] = [1e-4, 1e-3, 1e-2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub train: TrainConfig,
    /// `None` picks by source: full matrix for simulators, off-diagonal for CSV.
    pub metric_mode: Option<EvalMode>,
    /// One repetition per seed. The seed drives both the simulator and the
    /// weight initialization.
    pub seeds: Vec<u64>,
    /// Penalty weights to sweep; empty means `train.lambda` alone.
    pub lambdas: Vec<f64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Lorenz96(Lorenz96Config::default()),
            train: TrainConfig::default(),
            metric_mode: None,
            seeds: vec![0],
            lambdas: Vec::new(),
            out: PathBuf::from("grngc-out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Lorenz96(Lorenz96Config),
    Var(VarSource),
    Csv(CsvSource),
}

/// Random sparse VAR(1) system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarSource {
    pub p: usize,
    pub density: f64,
    /// Seed for the coefficient matrix; `None` reuses the repetition seed,
    /// giving every repetition its own graph.
    pub coefficient_seed: Option<u64>,
    pub t: usize,
    pub noise_sigma: f64,
    pub burn_in: usize,
}

impl Default for VarSource {
    fn default() -> Self {
        let sim = VarConfig::default();
        Self {
            p: 5,
            density: 0.3,
            coefficient_seed: None,
            t: sim.t,
            noise_sigma: sim.noise_sigma,
            burn_in: sim.burn_in,
        }
    }
}

/// How the truth file lays out edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthOrientation {
    /// Row = target, column = source (the score-matrix layout).
    #[default]
    TargetSource,
    /// Row = source, column = target; transposed on load.
    SourceTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSource {
    pub series: PathBuf,
    pub truth: Option<PathBuf>,
    pub has_header: bool,
    pub delimiter: char,
    pub truth_orientation: TruthOrientation,
    /// Whether the truth diagonal is meaningful.
    pub truth_include_self: bool,
}

impl Default for CsvSource {
    fn default() -> Self {
        Self {
            series: PathBuf::new(),
            truth: None,
            has_header: true,
            delimiter: ',',
            truth_orientation: TruthOrientation::TargetSource,
            truth_include_self: false,
        }
    }
}

impl DataSource {
    pub fn default_mode(&self) -> EvalMode {
        match self {
            DataSource::Lorenz96(_) | DataSource::Var(_) => EvalMode::Full,
            DataSource::Csv(_) => EvalMode::OffDiagonal,
        }
    }

    /// Simulates or reads the series for repetition `seed`, with its truth
    /// when one is known.
    pub fn load(&self, seed: u64) -> Result<(TimeSeries, Option<AdjacencyTruth>)> {
        match self {
            DataSource::Lorenz96(cfg) => {
                let (series, truth) = simulate_lorenz96(&Lorenz96Config { seed, ..cfg.clone() })?;
                Ok((series, Some(truth)))
            }
            DataSource::Var(v) => {
                let coeffs = random_sparse_var(v.p, v.density, v.coefficient_seed.unwrap_or(seed))?;
                let sim = VarConfig {
                    t: v.t,
                    noise_sigma: v.noise_sigma,
                    seed,
                    burn_in: v.burn_in,
                    initial: None,
                };
                let (series, truth) = simulate_var(&coeffs, &sim)?;
                Ok((series, Some(truth)))
            }
            DataSource::Csv(c) => {
                if c.series.as_os_str().is_empty() {
                    bail!("data.series is not set");
                }
                let delimiter = u8::try_from(c.delimiter).context("data.delimiter must be a single-byte character")?;
                let series = load_csv(&c.series, c.has_header, delimiter)?;
                let truth = match &c.truth {
                    Some(path) => Some(read_truth(path, c.truth_orientation, c.truth_include_self)?),
                    None => None,
                };
                if let Some(t) = &truth {
                    if t.dim() != series.dim() {
                        bail!("truth is {0}x{0} but the series has {1} columns", t.dim(), series.dim());
                    }
                }
                Ok((series, truth))
            }
        }
    }
}

/// Reads a 0/1 truth matrix and returns it in target-source layout.
pub fn read_truth(path: &Path, orientation: TruthOrientation, include_self: bool) -> Result<AdjacencyTruth> {
    let truth = load_truth(path, include_self)?;
    Ok(match orientation {
        TruthOrientation::TargetSource => truth,
        TruthOrientation::SourceTarget => {
            let p = truth.dim();
            let mut flipped = AdjacencyTruth::empty(p, include_self);
            for j in 0..p {
                for i in 0..p {
                    flipped.set(i, j, truth.get(j, i));
                }
            }
            flipped
        }
    })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Applies `key=value` overrides in order. Keys are dotted paths into
    /// the JSON form (`train.lambda`, `data.forcing`); values are parsed as
    /// JSON and fall back to plain strings. Setting `data.kind` resets the
    /// data section to that kind's defaults.
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        let mut doc = serde_json::to_value(&self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .with_context(|| format!("override {item:?} is not key=value"))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            if key == "data.kind" {
                let mut fresh = serde_json::Map::new();
                fresh.insert("kind".into(), value);
                let data: DataSource =
                    serde_json::from_value(Value::Object(fresh)).with_context(|| format!("bad override {item:?}"))?;
                doc["data"] = serde_json::to_value(data)?;
                continue;
            }
            set_path(&mut doc, key, value).with_context(|| format!("bad override {item:?}"))?;
        }
        serde_json::from_value(doc).context("overrides produce an invalid configuration")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            bail!("lambdas must be finite and non-negative");
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn metric_mode(&self) -> EvalMode {
        self.metric_mode.unwrap_or_else(|| self.data.default_mode())
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        if self.lambdas.is_empty() {
            vec![self.train.lambda]
        } else {
            self.lambdas.clone()
        }
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            bail!("{} is not a section", parts[..depth].join("."));
        };
        if !map.contains_key(*part) {
            let known: Vec<&String> = map.keys().collect();
            bail!("unknown key {:?} (known here: {known:?})", parts[..=depth].join("."));
        }
        node = map.get_mut(*part).expect("checked above");
    }
    *node = value;
    Ok(())
}
