//! Regressors from a moment's tag-strength vector to one audio feature.
//!
//! Three kinds share one serialized container, [`TrainedRegressor`]:
//!
//! * `baseline` ignores its input and draws from a normal distribution fitted
//!   to the training targets;
//! * `ridge` is closed-form L2-regularized least squares;
//! * `gbt` is least-squares gradient boosting over depth-limited trees.

mod gbt;
mod ridge;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use gbt::{train_gbt, GbtConfig, RegressionTree, TreeNode};
pub use ridge::train_ridge;

use crate::dataset::MomentsDataset;
use crate::error::{Error, Result};
use crate::types::{Feature, TagVocabulary};

pub const MODEL_FORMAT: &str = "musical-moments/regressor";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    Ridge,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Baseline, ModelKind::Ridge, ModelKind::Gbt];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Ridge => "ridge",
            ModelKind::Gbt => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("model", format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Parameters {
    Baseline { mean: f64, std: f64 },
    Ridge { weights: Vec<f64>, intercept: f64, lambda: f64 },
    Gbt { init: f64, learning_rate: f64, max_depth: usize, trees: Vec<RegressionTree> },
}

impl Parameters {
    pub fn kind(&self) -> ModelKind {
        match self {
            Parameters::Baseline { .. } => ModelKind::Baseline,
            Parameters::Ridge { .. } => ModelKind::Ridge,
            Parameters::Gbt { .. } => ModelKind::Gbt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRegressor {
    pub format: String,
    pub version: u32,
    pub target_feature: Feature,
    pub seed: u64,
    pub train_rmse: f64,
    /// Expected input width; `None` for the input-agnostic baseline.
    pub input_dim: Option<usize>,
    /// Column names of the training inputs, when trained from a dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<TagVocabulary>,
    pub parameters: Parameters,
}

impl TrainedRegressor {
    fn new(target: Feature, seed: u64, input_dim: Option<usize>, parameters: Parameters) -> Self {
        Self {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            target_feature: target,
            seed,
            train_rmse: f64::NAN,
            input_dim,
            vocabulary: None,
            parameters,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.parameters.kind()
    }

    /// Predictions for a batch of inputs, clamped to the target's range.
    ///
    /// The baseline draws one value per input, in order, from a generator
    /// seeded with `self.seed`; the same batch always gives the same values.
    pub fn predict_many<R: AsRef<[f64]>>(&self, xs: &[R]) -> Result<Vec<f64>> {
        if let Some(dim) = self.input_dim {
            if let Some(bad) = xs.iter().find(|x| x.as_ref().len() != dim) {
                return Err(Error::invalid(
                    "input",
                    format!("{} values, model expects {dim}", bad.as_ref().len()),
                ));
            }
        }
        let target = self.target_feature;
        let raw: Vec<f64> = match &self.parameters {
            Parameters::Baseline { mean, std } => {
                if *std == 0.0 {
                    vec![*mean; xs.len()]
                } else {
                    let normal =
                        Normal::new(*mean, *std).map_err(|e| Error::ModelFormat(format!("baseline: {e}")))?;
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                    (0..xs.len()).map(|_| normal.sample(&mut rng)).collect()
                }
            }
            Parameters::Ridge { weights, intercept, .. } => {
                xs.iter().map(|x| intercept + dot(weights, x.as_ref())).collect()
            }
            Parameters::Gbt { init, learning_rate, trees, .. } => {
                xs.iter().map(|x| gbt::predict_raw(*init, *learning_rate, trees, x.as_ref())).collect()
            }
        };
        Ok(raw.into_iter().map(|v| target.clamp(v)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_many(&[x])?[0])
    }

    /// Attaches input column names; their count must match the input width.
    pub fn with_vocabulary(mut self, vocabulary: TagVocabulary) -> Result<Self> {
        match self.input_dim {
            Some(dim) if dim != vocabulary.len() => {
                return Err(Error::VocabularyMismatch { expected: dim, actual: vocabulary.len() })
            }
            _ => {}
        }
        self.vocabulary = Some(vocabulary);
        Ok(self)
    }

    fn with_train_rmse<R: AsRef<[f64]>>(mut self, xs: &[R], ys: &[f64]) -> Result<Self> {
        self.train_rmse = evaluate_rmse(&self, xs, ys)?;
        Ok(self)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stores the sample mean and (population) standard deviation of `targets`.
pub fn train_baseline(targets: &[f64], target: Feature, seed: u64) -> Result<TrainedRegressor> {
    if targets.len() < 2 {
        return Err(Error::invalid("targets", "baseline needs at least 2 targets"));
    }
    check_finite(targets)?;
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let model = TrainedRegressor::new(target, seed, None, Parameters::Baseline { mean, std: var.sqrt() });
    // Train RMSE of a baseline is measured against its own draws.
    let probe = vec![[0.0f64; 0]; targets.len()];
    model.with_train_rmse(&probe, targets)
}

/// √(mean((ŷ − y)²)) over a test set.
pub fn evaluate_rmse<R: AsRef<[f64]>>(model: &TrainedRegressor, xs: &[R], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || ys.is_empty() {
        return Err(Error::invalid("test set", format!("{} inputs for {} targets", xs.len(), ys.len())));
    }
    let preds = model.predict_many(xs)?;
    Ok(rmse(&preds, ys))
}

pub fn rmse(preds: &[f64], ys: &[f64]) -> f64 {
    let sse: f64 = preds.iter().zip(ys).map(|(p, y)| (p - y).powi(2)).sum();
    (sse / ys.len() as f64).sqrt()
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("training data", "non-finite value"))
    }
}

fn check_matrix<R: AsRef<[f64]>>(xs: &[R], ys: &[f64]) -> Result<usize> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::invalid("training data", format!("{} inputs for {} targets", xs.len(), ys.len())));
    }
    let dim = xs[0].as_ref().len();
    for x in xs {
        if x.as_ref().len() != dim {
            return Err(Error::invalid("training data", "ragged input rows"));
        }
        check_finite(x.as_ref())?;
    }
    check_finite(ys)?;
    Ok(dim)
}

/// Hyperparameters for [`train`]; unused fields are ignored per kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub lambda: f64,
    pub gbt: GbtConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { seed: 0, lambda: DEFAULT_LAMBDA, gbt: GbtConfig::default() }
    }
}

/// Trains `kind` on the non-degenerate rows of `dataset` and attaches the
/// dataset's vocabulary.
pub fn train(dataset: &MomentsDataset, kind: ModelKind, config: &TrainConfig) -> Result<TrainedRegressor> {
    let (xs, ys) = dataset.training_data();
    let target = dataset.target_feature;
    let model = match kind {
        ModelKind::Baseline => {
            let mut m = train_baseline(&ys, target, config.seed)?;
            m.input_dim = Some(dataset.vocabulary.len());
            m
        }
        ModelKind::Ridge => train_ridge(&xs, &ys, config.lambda, target, config.seed)?,
        ModelKind::Gbt => train_gbt(&xs, &ys, &config.gbt, target, config.seed)?.0,
    };
    model.with_vocabulary(dataset.vocabulary.clone())
}

pub fn save_model(model: &TrainedRegressor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(model)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedRegressor> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let head: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
    let format = head.get("format").and_then(|v| v.as_str());
    if format != Some(MODEL_FORMAT) {
        return Err(Error::ModelFormat(format!(
            "{}: format {format:?}, expected {MODEL_FORMAT:?}",
            path.display()
        )));
    }
    let version = head.get("version").and_then(|v| v.as_u64());
    if version != Some(u64::from(MODEL_VERSION)) {
        return Err(Error::ModelFormat(format!(
            "{}: version {version:?}, expected {MODEL_VERSION}",
            path.display()
        )));
    }
    serde_json::from_str(&text).map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))
}

/// [`load_model`], failing unless the file holds a model of `kind`.
pub fn load_model_of_kind(path: impl AsRef<Path>, kind: ModelKind) -> Result<TrainedRegressor> {
    let model = load_model(&path)?;
    if model.kind() != kind {
        return Err(Error::ModelFormat(format!(
            "{}: holds a {} model, expected {kind}",
            path.as_ref().display(),
            model.kind()
        )));
    }
    Ok(model)
}
