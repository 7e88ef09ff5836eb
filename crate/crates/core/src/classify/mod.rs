//! Six multiclass classifiers behind one interface.
//!
//! Every method trains on a [`Dictionary`], normalizes features internally
//! (z-score statistics frozen from the training split), emits a length-K
//! probability estimate per input, and decides by maximum a-posteriori with
//! ties broken toward the lowest class index. Models serialize to versioned
//! JSON and reproduce their predictions bit-exactly after a round trip.

pub mod forest;
pub mod gboost;
pub mod logistic;
pub mod mlp;
pub mod svm;
pub mod tree;

use crate::dictionary::{Dictionary, LabeledSample};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training dictionary is empty")]
    EmptyDictionary,
    #[error("class {class_id} has no training samples")]
    MissingClass { class_id: usize },
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("pooled covariance is singular even after ridge regularization")]
    SingularCovariance,
    #[error("model file has format version {found}, this build reads {supported}")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-feature z-score statistics, fitted on the training split only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Population statistics; a constant feature gets std 1 so its z-score
    /// is identically 0 rather than NaN.
    pub fn fit(samples: &[LabeledSample]) -> Self {
        let n = samples.len() as f64;
        let f = samples.first().map_or(0, |s| s.x.len());
        let mut mean = vec![0.0; f];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(&s.x) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; f];
        for s in samples {
            for j in 0..f {
                let d = s.x[j] - mean[j];
                var[j] += d * d;
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Logistic,
    Tree,
    Forest,
    GBoost,
    Svm,
    Mlp,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Logistic,
        Method::Tree,
        Method::Forest,
        Method::GBoost,
        Method::Svm,
        Method::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Logistic => "logistic",
            Method::Tree => "tree",
            Method::Forest => "forest",
            Method::GBoost => "gboost",
            Method::Svm => "svm",
            Method::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(Method::Logistic),
            "tree" => Ok(Method::Tree),
            "forest" => Ok(Method::Forest),
            "gboost" => Ok(Method::GBoost),
            "svm" => Ok(Method::Svm),
            "mlp" => Ok(Method::Mlp),
            other => Err(format!(
                "unknown method {other:?}, expected one of logistic, tree, forest, gboost, svm, mlp"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticHyper {
    /// Fit class means and a shared covariance instead of running the
    /// gradient optimizer.
    pub generative: bool,
    pub learning_rate: f64,
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper {
            generative: false,
            learning_rate: 0.1,
            l2: 1e-4,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeHyper {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Cost-complexity pruning strength; 0 disables pruning.
    pub ccp_alpha: f64,
}

impl Default for TreeHyper {
    fn default() -> Self {
        TreeHyper { max_depth: None, min_samples_leaf: 1, ccp_alpha: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestHyper {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Features tried per split; default ceil(sqrt(F)).
    pub feature_subset: Option<usize>,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper { n_trees: 100, max_depth: None, feature_subset: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GBoostHyper {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for GBoostHyper {
    fn default() -> Self {
        GBoostHyper { n_estimators: 100, learning_rate: 0.1, max_depth: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmHyper {
    /// Box penalty C.
    pub c: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// RBF width; default 1/(F * variance of the normalized features).
    pub gamma: Option<f64>,
}

impl Default for SvmHyper {
    fn default() -> Self {
        SvmHyper { c: 1.0, tol: 1e-3, max_sweeps: 100, gamma: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpHyper {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    /// Apply softmax across each hidden layer instead of the elementwise
    /// logistic sigmoid.
    pub layer_softmax_hidden: bool,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    /// Loss-improvement threshold for early stopping.
    pub tol: f64,
    pub n_iter_no_change: usize,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper {
            hidden_layers: 3,
            hidden_units: 50,
            layer_softmax_hidden: false,
            learning_rate: 1e-3,
            max_iter: 300,
            batch_size: 200,
            tol: 1e-4,
            n_iter_no_change: 10,
        }
    }
}

/// Hyperparameters for all six methods. Unused sections are ignored by each
/// trainer, so one value can drive a whole comparison run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub logistic: LogisticHyper,
    pub tree: TreeHyper,
    pub forest: ForestHyper,
    pub gboost: GBoostHyper,
    pub svm: SvmHyper,
    pub mlp: MlpHyper,
}

/// A trained classifier of any of the six methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Model {
    Logistic(logistic::LogisticModel),
    Tree(tree::TreeModel),
    Forest(forest::ForestModel),
    GBoost(gboost::GBoostModel),
    Svm(svm::SvmModel),
    Mlp(mlp::MlpModel),
}

/// Validated, normalized training matrix shared by all trainers.
pub(crate) struct TrainData {
    /// Row-major `n x f`, already z-scored.
    pub x: Vec<f64>,
    /// 0-based class labels.
    pub labels: Vec<usize>,
    pub n: usize,
    pub f: usize,
    pub k: usize,
}

impl TrainData {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.f..(i + 1) * self.f]
    }
}

fn prepare(d: &Dictionary) -> Result<(Normalizer, TrainData), ClassifierError> {
    if d.is_empty() {
        return Err(ClassifierError::EmptyDictionary);
    }
    if let Some(k) = d.class_counts.iter().position(|&c| c == 0) {
        return Err(ClassifierError::MissingClass { class_id: k + 1 });
    }
    let f = d.samples[0].x.len();
    let k = d.class_counts.len();
    for s in &d.samples {
        if s.x.len() != f {
            return Err(ClassifierError::DimensionMismatch { expected: f, found: s.x.len() });
        }
        if s.t.len() != k {
            return Err(ClassifierError::DimensionMismatch { expected: k, found: s.t.len() });
        }
    }
    let normalizer = Normalizer::fit(&d.samples);
    let n = d.samples.len();
    let mut x = Vec::with_capacity(n * f);
    let mut labels = Vec::with_capacity(n);
    for s in &d.samples {
        x.extend(normalizer.transform(&s.x));
        labels.push(s.label());
    }
    Ok((normalizer, TrainData { x, labels, n, f, k }))
}

/// Trains a classifier of the requested method on `d_train`.
///
/// Feature normalization is fitted here and stored in the model. Iterative
/// methods that hit their step limit without converging still return a model,
/// with a warning flag readable via [`Model::convergence`].
pub fn train(
    method: Method,
    params: &Hyperparams,
    d_train: &Dictionary,
    seed: u64,
) -> Result<Model, ClassifierError> {
    let (normalizer, data) = prepare(d_train)?;
    Ok(match method {
        Method::Logistic => Model::Logistic(logistic::fit(&data, &params.logistic, normalizer)?),
        Method::Tree => Model::Tree(tree::fit(&data, &params.tree, normalizer)),
        Method::Forest => Model::Forest(forest::fit(&data, &params.forest, normalizer, seed)),
        Method::GBoost => Model::GBoost(gboost::fit(&data, &params.gboost, normalizer)),
        Method::Svm => Model::Svm(svm::fit(&data, &params.svm, normalizer)),
        Method::Mlp => Model::Mlp(mlp::fit(&data, &params.mlp, normalizer, seed)),
    })
}

impl Model {
    pub fn method(&self) -> Method {
        match self {
            Model::Logistic(_) => Method::Logistic,
            Model::Tree(_) => Method::Tree,
            Model::Forest(_) => Method::Forest,
            Model::GBoost(_) => Method::GBoost,
            Model::Svm(_) => Method::Svm,
            Model::Mlp(_) => Method::Mlp,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Logistic(m) => m.k,
            Model::Tree(m) => m.k,
            Model::Forest(m) => m.k,
            Model::GBoost(m) => m.k,
            Model::Svm(m) => m.k,
            Model::Mlp(m) => m.k,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Logistic(m) => m.f,
            Model::Tree(m) => m.f,
            Model::Forest(m) => m.f,
            Model::GBoost(m) => m.f,
            Model::Svm(m) => m.f,
            Model::Mlp(m) => m.f,
        }
    }

    /// False for the vote-counting SVM, whose output is a vote frequency
    /// rather than a posterior estimate.
    pub fn is_probabilistic(&self) -> bool {
        !matches!(self, Model::Svm(_))
    }

    /// `(converged, final loss)` for the iterative optimizers, `None` for
    /// methods without a convergence notion.
    pub fn convergence(&self) -> Option<(bool, f64)> {
        match self {
            Model::Logistic(m) => Some((m.converged, m.final_loss)),
            Model::Mlp(m) => Some((m.converged, m.final_loss)),
            Model::GBoost(m) => Some((true, *m.training_loss.last().unwrap_or(&f64::NAN))),
            _ => None,
        }
    }

    /// Per-class probability estimates, non-negative and summing to 1.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if x.len() != self.n_features() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(match self {
            Model::Logistic(m) => m.proba(x),
            Model::Tree(m) => m.proba(x),
            Model::Forest(m) => m.proba(x),
            Model::GBoost(m) => m.proba(x),
            Model::Svm(m) => m.proba(x),
            Model::Mlp(m) => m.proba(x),
        })
    }

    /// MAP decision: 1-based class index, ties to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        let gamma = self.predict_proba(x)?;
        Ok(argmax(&gamma) + 1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let saved = SavedModel { format_version: MODEL_FORMAT_VERSION, model: self.clone() };
        let json = serde_json::to_string_pretty(&saved)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, ClassifierError> {
        let text = std::fs::read_to_string(path)?;
        let saved: SavedModel = serde_json::from_str(&text)?;
        if saved.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::UnsupportedVersion {
                found: saved.format_version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        Ok(saved.model)
    }
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    format_version: u32,
    model: Model,
}

/// Index of the largest entry; the first one on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Adam optimizer over a flat parameter vector.
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
