//! Metrics, cross validation, and uncertainty quantification.
//!
//! Confusion matrices follow the rows-are-true, columns-are-predicted
//! convention. Percentiles use rank `y/100 * n + 0.5` (1-based) with linear
//! interpolation between order statistics, clamped to the observed range;
//! the same convention aggregates kappa scores across Monte Carlo cross
//! validation iterations.

use crate::classify::{self, Hyperparams, Method, Model};
use crate::dictionary::{subset, split_indices, Dictionary, DictionaryError};
use crate::rng::{self, tags};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("random accuracy is 1; kappa is undefined on a single-class test set")]
    DegenerateChance,
    #[error("model emits vote frequencies, not probabilities; no percentile summary")]
    NonProbabilisticModel,
    #[error("no test samples with true class {class_id}")]
    EmptySubset { class_id: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Classifier(#[from] classify::ClassifierError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// K x K counts; entry (i, j) is the number of test samples of true class
/// i+1 predicted as class j+1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    /// Row-major counts.
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> ConfusionMatrix {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.k + predicted]
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.k + predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        self.row_sum(c) - self.get(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        self.col_sum(c) - self.get(c, c)
    }

    pub fn true_negatives(&self, c: usize) -> u64 {
        // Grouped so the unsigned arithmetic never dips negative.
        (self.total() + self.get(c, c)) - (self.row_sum(c) + self.col_sum(c))
    }

    /// Entries divided by the grand total; sums to 1.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// Applies the model's MAP decision to every test sample and tallies
/// (true, predicted) pairs.
pub fn confusion_matrix(model: &Model, d_test: &Dictionary) -> Result<ConfusionMatrix, EvalError> {
    if d_test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let k = d_test.n_classes().max(model.n_classes());
    let mut c = ConfusionMatrix::zeros(k);
    for s in &d_test.samples {
        let predicted = model.predict(&s.x)?;
        c.record(s.label(), predicted - 1);
    }
    Ok(c)
}

/// Per-class precision, sensitivity and specificity. `None` marks a 0/0
/// case (e.g. a class that was never predicted), which is reported as
/// undefined rather than silently zeroed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

pub fn class_metrics(c: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..c.k)
        .map(|k| {
            let tp = c.true_positives(k);
            let fp = c.false_positives(k);
            let fn_ = c.false_negatives(k);
            let tn = c.true_negatives(k);
            ClassMetrics {
                precision: ratio(tp, tp + fp),
                sensitivity: ratio(tp, tp + fn_),
                specificity: ratio(tn, tn + fp),
            }
        })
        .collect()
}

/// Chance-corrected accuracy (accuracy - random accuracy)/(1 - random
/// accuracy), where random accuracy is the sum over classes of the product
/// of row and column marginals divided by the squared total.
pub fn kappa(c: &ConfusionMatrix) -> Result<f64, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyTestSet);
    }
    let n = total as f64;
    let accuracy = (0..c.k).map(|k| c.true_positives(k)).sum::<u64>() as f64 / n;
    let random_accuracy = (0..c.k)
        .map(|k| (c.row_sum(k) as f64) * (c.col_sum(k) as f64))
        .sum::<f64>()
        / (n * n);
    if random_accuracy >= 1.0 {
        return Err(EvalError::DegenerateChance);
    }
    Ok((accuracy - random_accuracy) / (1.0 - random_accuracy))
}

/// The y-th percentile of ascending `sorted` values: rank `y/100 * n + 0.5`
/// (1-based), linearly interpolated between neighbouring order statistics
/// and clamped to the observed extremes.
pub fn percentile(sorted: &[f64], y: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty set");
    let n = sorted.len() as f64;
    let rank = (y / 100.0) * n + 0.5;
    if rank <= 1.0 {
        return sorted[0];
    }
    if rank >= n {
        return sorted[sorted.len() - 1];
    }
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

/// Five-number posterior summary for one output class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub p5: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub p95: f64,
}

fn summarize(mut values: Vec<f64>) -> UncertaintySummary {
    values.sort_by(f64::total_cmp);
    UncertaintySummary {
        p5: percentile(&values, 5.0),
        q1: percentile(&values, 25.0),
        median: percentile(&values, 50.0),
        q3: percentile(&values, 75.0),
        p95: percentile(&values, 95.0),
    }
}

/// Distribution of the model's posterior estimates over the test samples of
/// one true class: for each output class k, percentiles of gamma_k(x_i).
/// `class_id` is 1-based.
pub fn uncertainty_summary(
    model: &Model,
    d_test: &Dictionary,
    class_id: usize,
) -> Result<Vec<UncertaintySummary>, EvalError> {
    if !model.is_probabilistic() {
        return Err(EvalError::NonProbabilisticModel);
    }
    let subset: Vec<&crate::dictionary::LabeledSample> = d_test
        .samples
        .iter()
        .filter(|s| s.label() + 1 == class_id)
        .collect();
    if subset.is_empty() {
        return Err(EvalError::EmptySubset { class_id });
    }
    let k = model.n_classes();
    let mut per_class: Vec<Vec<f64>> = vec![Vec::with_capacity(subset.len()); k];
    for s in &subset {
        let gamma = model.predict_proba(&s.x)?;
        for (bucket, g) in per_class.iter_mut().zip(gamma) {
            bucket.push(g);
        }
    }
    Ok(per_class.into_iter().map(summarize).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCvIteration {
    pub kappa: f64,
    pub confusion: ConfusionMatrix,
    pub class_metrics: Vec<ClassMetrics>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaSummary {
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl KappaSummary {
    pub fn of(values: &[f64]) -> KappaSummary {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        KappaSummary {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            min: sorted[0],
            q1: percentile(&sorted, 25.0),
            median: percentile(&sorted, 50.0),
            q3: percentile(&sorted, 75.0),
            max: sorted[sorted.len() - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCvReport {
    pub iterations: Vec<McCvIteration>,
    pub kappa_summary: KappaSummary,
}

/// Monte Carlo cross validation: `iterations` independent stratified splits,
/// each trained and scored from scratch. Iterations run in parallel with
/// per-iteration derived seeds, so the report does not depend on thread
/// scheduling.
pub fn mccv(
    method: Method,
    params: &Hyperparams,
    d: &Dictionary,
    iterations: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<McCvReport, EvalError> {
    mccv_paired(method, params, d, d, iterations, test_fraction, seed)
}

/// MCCV over paired renderings of the same sample set: models train on
/// `d_train_view` rows and are scored on the matching `d_test_view` rows,
/// which lets training and testing carry different noise levels while the
/// underlying objects and splits stay aligned.
pub fn mccv_paired(
    method: Method,
    params: &Hyperparams,
    d_train_view: &Dictionary,
    d_test_view: &Dictionary,
    iterations: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<McCvReport, EvalError> {
    assert_eq!(
        d_train_view.class_counts, d_test_view.class_counts,
        "paired renderings must describe the same samples"
    );
    assert!(iterations >= 1, "at least one iteration");
    let runs: Vec<McCvIteration> = (0..iterations)
        .into_par_iter()
        .map(|it| {
            let it_seed = rng::mix(seed, tags::MCCV, it as u64);
            let (train_idx, test_idx) = split_indices(
                &d_train_view.class_counts,
                |i| d_train_view.samples[i].label(),
                d_train_view.len(),
                test_fraction,
                it_seed,
            )?;
            let d_train = subset(d_train_view, &train_idx);
            let d_test = subset(d_test_view, &test_idx);
            let model = classify::train(method, params, &d_train, it_seed)?;
            let confusion = confusion_matrix(&model, &d_test)?;
            Ok(McCvIteration {
                kappa: kappa(&confusion)?,
                class_metrics: class_metrics(&confusion),
                confusion,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let kappas: Vec<f64> = runs.iter().map(|r| r.kappa).collect();
    Ok(McCvReport { iterations: runs, kappa_summary: KappaSummary::of(&kappas) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub mse: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of E_x sum_k (gamma_k(x) - p(C_k|x))^2 against a
/// pointwise-computable reference posterior, with the standard error of the
/// mean alongside.
pub fn mse_vs_reference(
    gamma: impl Fn(&[f64]) -> Vec<f64>,
    reference: impl Fn(&[f64]) -> Vec<f64>,
    mut sample: impl FnMut() -> Vec<f64>,
    draws: usize,
) -> MseEstimate {
    assert!(draws >= 2, "need at least two draws for a standard error");
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let x = sample();
        let g = gamma(&x);
        let p = reference(&x);
        let d: f64 = g.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += d;
        sum_sq += d * d;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) / (n - 1.0);
    MseEstimate { mse: mean, std_error: var.sqrt() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVariance {
    pub bias: f64,
    pub variance: f64,
}

impl BiasVariance {
    /// The learning error this decomposition reconstructs exactly.
    pub fn learning_error(&self) -> f64 {
        self.bias + self.variance
    }
}

/// Bias/variance decomposition of a family of fitted predictors against the
/// true posterior, averaged over a fixed evaluation grid. The population
/// (1/T) variance estimator is used, so bias + variance reproduces the
/// directly averaged squared error identically.
pub fn bias_variance_of(
    predictors: &[&dyn Fn(&[f64]) -> Vec<f64>],
    reference: impl Fn(&[f64]) -> Vec<f64>,
    eval_grid: &[Vec<f64>],
) -> BiasVariance {
    assert!(!predictors.is_empty() && !eval_grid.is_empty());
    let t = predictors.len() as f64;
    let mut bias_acc = 0.0;
    let mut var_acc = 0.0;
    for x in eval_grid {
        let p = reference(x);
        let k = p.len();
        let outputs: Vec<Vec<f64>> = predictors.iter().map(|f| f(x)).collect();
        let mut mean = vec![0.0; k];
        for o in &outputs {
            for (m, v) in mean.iter_mut().zip(o) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t);
        bias_acc += p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        var_acc += outputs
            .iter()
            .map(|o| o.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            / t;
    }
    let g = eval_grid.len() as f64;
    BiasVariance { bias: bias_acc / g, variance: var_acc / g }
}

/// Trains `n_trainsets` models of one method on freshly generated training
/// sets and decomposes their error against the reference posterior.
pub fn bias_variance(
    method: Method,
    params: &Hyperparams,
    generate: impl Fn(u64) -> Dictionary + Sync,
    reference: impl Fn(&[f64]) -> Vec<f64>,
    eval_grid: &[Vec<f64>],
    n_trainsets: usize,
    seed: u64,
) -> Result<BiasVariance, EvalError> {
    let models: Vec<Model> = (0..n_trainsets)
        .into_par_iter()
        .map(|i| {
            let s = rng::mix(seed, tags::TRAINSET, i as u64);
            classify::train(method, params, &generate(s), s)
        })
        .collect::<Result<_, _>>()?;
    let closures: Vec<Box<dyn Fn(&[f64]) -> Vec<f64>>> = models
        .iter()
        .map(|m| {
            let m = m.clone();
            Box::new(move |x: &[f64]| m.predict_proba(x).unwrap()) as Box<dyn Fn(&[f64]) -> Vec<f64>>
        })
        .collect();
    let refs: Vec<&dyn Fn(&[f64]) -> Vec<f64>> = closures.iter().map(|b| b.as_ref()).collect();
    Ok(bias_variance_of(&refs, reference, eval_grid))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDistributionReport {
    /// `(lower edge, upper edge, count)` per bin over the standardized values.
    pub histogram: Vec<(f64, f64, usize)>,
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator) of the raw feature.
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub zero_variance: bool,
}

/// Standardizes one feature column with Z = (X - mean)/std and reports its
/// histogram plus the standardized third and fourth moments, for eyeballing
/// how close the dictionary's feature distribution is to Gaussian. Needs at
/// least 30 samples; a constant feature is flagged instead of erroring.
pub fn feature_distribution_report(
    d: &Dictionary,
    feature: usize,
    bins: usize,
) -> Result<FeatureDistributionReport, EvalError> {
    const MIN_SAMPLES: usize = 30;
    if d.len() < MIN_SAMPLES {
        return Err(EvalError::TooFewSamples { needed: MIN_SAMPLES, got: d.len() });
    }
    assert!(bins >= 1);
    let values: Vec<f64> = d.samples.iter().map(|s| s.x[feature]).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std = (ss / (n - 1.0)).sqrt();
    if std == 0.0 {
        return Ok(FeatureDistributionReport {
            histogram: vec![(-0.5, 0.5, values.len())],
            mean,
            std,
            skewness: 0.0,
            excess_kurtosis: 0.0,
            zero_variance: true,
        });
    }
    let z: Vec<f64> = values.iter().map(|v| (v - mean) / std).collect();
    let m2 = z.iter().map(|v| v * v).sum::<f64>() / n;
    let m3 = z.iter().map(|v| v.powi(3)).sum::<f64>() / n;
    let m4 = z.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; bins];
    for v in &z {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect();
    Ok(FeatureDistributionReport {
        histogram,
        mean,
        std,
        skewness,
        excess_kurtosis,
        zero_variance: false,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| crate::signature::format_full(x)).unwrap_or_default()
}

/// Full MCCV report as JSON.
pub fn write_mccv_json(report: &McCvReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Per-iteration kappa table.
pub fn write_kappa_csv(report: &McCvReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut out = String::from("iteration,kappa\n");
    for (i, it) in report.iterations.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, crate::signature::format_full(it.kappa));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Confusion matrix as CSV; `normalized` divides by the grand total for
/// plot-ready heatmap input.
pub fn write_confusion_csv(
    c: &ConfusionMatrix,
    path: impl AsRef<Path>,
    normalized: bool,
) -> Result<(), EvalError> {
    let mut out = String::from("true_class");
    for j in 1..=c.k {
        let _ = write!(out, ",predicted_{j}");
    }
    out.push('\n');
    let total = c.total() as f64;
    for i in 0..c.k {
        let _ = write!(out, "{}", i + 1);
        for j in 0..c.k {
            if normalized {
                let _ = write!(
                    out,
                    ",{}",
                    crate::signature::format_full(c.get(i, j) as f64 / total)
                );
            } else {
                let _ = write!(out, ",{}", c.get(i, j));
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Per-class metric table; undefined (0/0) entries are left empty.
pub fn write_class_metrics_csv(
    metrics: &[ClassMetrics],
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    let mut out = String::from("class,precision,sensitivity,specificity\n");
    for (i, m) in metrics.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            fmt_opt(m.precision),
            fmt_opt(m.sensitivity),
            fmt_opt(m.specificity)
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}
