//! Labelled sample dictionaries built from base spectral signatures.
//!
//! A class is described by one or more base signatures (its geometries) plus
//! Gaussian size/conductivity variation parameters. Samples are drawn per
//! geometry, realized by frequency scaling of the base signature, corrupted
//! with SNR-controlled additive noise, and reduced to rotation-invariant
//! feature vectors. The module also performs stratified train/test splits and
//! leave-one-geometry-out splits for unseen-object studies.

use crate::rng::{self, tags};
use crate::signature::{SignatureError, SpectralSignature};
use crate::tensor::ComplexTensor3;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DictionaryError {
    /// A class specification that cannot produce samples (non-positive means,
    /// negative spreads, empty geometry list, bad class numbering, ...).
    #[error("degenerate class specification: {0}")]
    DegenerateSpec(String),
    /// A class with fewer than four samples cannot be split 3:1.
    #[error("class {class_id} has only {count} samples, too few to split")]
    ClassTooSmall { class_id: usize, count: usize },
    #[error("class {class_id} has no geometry labelled {geometry_id:?}")]
    GeometryNotFound { class_id: usize, geometry_id: String },
    #[error("cannot hold out {geometry_id:?}: class {class_id} has no other geometry")]
    LastGeometry { class_id: usize, geometry_id: String },
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sampling recipe for one class: base geometries plus the Gaussian
/// distributions of object size and conductivity.
#[derive(Clone, Debug)]
pub struct ClassSpec {
    /// 1-based class label.
    pub class_id: usize,
    /// Base signatures; one entry per geometry (or geometry/material combination).
    pub geometries: Vec<SpectralSignature>,
    /// Mean and spread of the size draw, in m.
    pub m_alpha: f64,
    pub s_alpha: f64,
    /// Mean and spread of the conductivity draw, in S/m.
    pub m_sigma: f64,
    pub s_sigma: f64,
    /// Number of variations drawn per geometry.
    pub v_count: usize,
}

impl ClassSpec {
    fn validate(&self) -> Result<(), DictionaryError> {
        let fail = |m: String| Err(DictionaryError::DegenerateSpec(m));
        if !(self.m_alpha > 0.0) || !(self.m_sigma > 0.0) {
            return fail(format!(
                "class {}: means must be positive (m_alpha={}, m_sigma={})",
                self.class_id, self.m_alpha, self.m_sigma
            ));
        }
        if self.s_alpha < 0.0 || self.s_sigma < 0.0 {
            return fail(format!("class {}: spreads must be non-negative", self.class_id));
        }
        if self.geometries.is_empty() {
            return fail(format!("class {}: no geometries", self.class_id));
        }
        if self.v_count == 0 {
            return fail(format!("class {}: v_count must be at least 1", self.class_id));
        }
        for g in &self.geometries {
            g.validate()?;
        }
        Ok(())
    }

    /// Samples generated for this class: geometries x variations.
    pub fn samples_per_class(&self) -> usize {
        self.geometries.len() * self.v_count
    }
}

/// Which scalar reduction of each tensor part enters the feature vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// The three principal invariants (trace, second invariant, determinant).
    Invariants,
    /// The three eigenvalues in ascending order.
    Eigenvalues,
}

/// One labelled training/test example.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    /// Feature vector of length `6 M`.
    pub x: Vec<f64>,
    /// 1-of-K target vector.
    pub t: Vec<f64>,
}

impl LabeledSample {
    /// 0-based index of the active class in `t`.
    pub fn label(&self) -> usize {
        self.t
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// A set of labelled feature vectors with bookkeeping about how it was built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    pub samples: Vec<LabeledSample>,
    /// Per-class sample counts `P^(k)`, indexed by 0-based class.
    pub class_counts: Vec<usize>,
    /// Frequencies the features were evaluated at, in rad/s.
    pub eval_freqs: Vec<f64>,
    pub kind: FeatureKind,
}

impl Dictionary {
    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn n_features(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Train/test partition of a dictionary.
#[derive(Clone, Debug)]
pub struct SplitDictionary {
    pub train: Dictionary,
    pub test: Dictionary,
}

fn draw_positive(mean: f64, spread: f64, rng: &mut impl Rng) -> f64 {
    loop {
        let v = mean + spread * rng.sample::<f64, _>(StandardNormal);
        if v > 0.0 {
            return v;
        }
    }
}

/// Draws `spec.v_count` `(alpha, sigma)` pairs from the class's Gaussian
/// variation distributions. Non-positive draws are rejected and redrawn, so
/// every returned pair is physical.
pub fn sample_variations(spec: &ClassSpec, seed: u64) -> Result<Vec<(f64, f64)>, DictionaryError> {
    spec.validate()?;
    Ok((0..spec.v_count)
        .map(|i| {
            let mut rng = rng::stream(seed, tags::VARIATION, i as u64);
            let alpha = draw_positive(spec.m_alpha, spec.s_alpha, &mut rng);
            let sigma = draw_positive(spec.m_sigma, spec.s_sigma, &mut rng);
            (alpha, sigma)
        })
        .collect())
}

/// Evaluates the signature a base would have at new size and conductivity,
/// tabulated on `out_freqs`.
///
/// The tensor depends on frequency, conductivity and size only through
/// `omega sigma alpha^2` and an overall `alpha^3` volume factor, so each
/// output frequency pulls the base value at
/// `omega' = omega (sigma_new alpha_new^2) / (sigma_base alpha_base^2)`
/// (log-frequency interpolation) and scales it by `(alpha_new/alpha_base)^3`.
/// Relative permeability is carried over unchanged. Mapped frequencies
/// outside the base grid are an error; nothing is extrapolated.
pub fn scale_signature_to(
    base: &SpectralSignature,
    alpha_new: f64,
    sigma_new: f64,
    out_freqs: &[f64],
) -> Result<SpectralSignature, DictionaryError> {
    base.validate()?;
    if !(alpha_new > 0.0) || !(sigma_new > 0.0) {
        return Err(DictionaryError::DegenerateSpec(format!(
            "scaling target must be positive (alpha={alpha_new}, sigma={sigma_new})"
        )));
    }
    let shift = (sigma_new * alpha_new * alpha_new) / (base.sigma * base.alpha * base.alpha);
    let volume = (alpha_new / base.alpha).powi(3);
    let coefficients = out_freqs
        .iter()
        .map(|&w| Ok(base.evaluate_at(w * shift)?.scaled(volume)))
        .collect::<Result<Vec<_>, DictionaryError>>()?;
    Ok(SpectralSignature::new(
        out_freqs.to_vec(),
        coefficients,
        alpha_new,
        sigma_new,
        base.mu_r,
        base.geometry_id.clone(),
        base.class_id,
    )?)
}

/// Like [`scale_signature_to`], but keeps the part of the base grid whose
/// mapped frequencies stay inside the grid (the overlapping grid). Errors
/// only if no base frequency survives.
pub fn scale_signature(
    base: &SpectralSignature,
    alpha_new: f64,
    sigma_new: f64,
) -> Result<SpectralSignature, DictionaryError> {
    base.validate()?;
    if !(alpha_new > 0.0) || !(sigma_new > 0.0) {
        return Err(DictionaryError::DegenerateSpec(format!(
            "scaling target must be positive (alpha={alpha_new}, sigma={sigma_new})"
        )));
    }
    let shift = (sigma_new * alpha_new * alpha_new) / (base.sigma * base.alpha * base.alpha);
    let lo = base.frequencies[0];
    let hi = *base.frequencies.last().unwrap();
    let keep: Vec<f64> = base
        .frequencies
        .iter()
        .copied()
        .filter(|&w| w * shift >= lo * (1.0 - 1e-9) && w * shift <= hi * (1.0 + 1e-9))
        .collect();
    if keep.is_empty() {
        return Err(SignatureError::OutOfGrid {
            omega: base.frequencies[0] * shift,
            lo,
            hi,
        }
        .into());
    }
    scale_signature_to(base, alpha_new, sigma_new, &keep)
}

fn noisy_tensors(
    coefficients: &[ComplexTensor3],
    snr_db: f64,
    rng: &mut impl Rng,
) -> Vec<ComplexTensor3> {
    if snr_db.is_infinite() {
        return coefficients.to_vec();
    }
    let power_ratio = 10f64.powf(-snr_db / 10.0);
    coefficients
        .iter()
        .map(|c| {
            let entries = c.entries().map(|v| {
                let noise = (v.conj() * v).re * power_ratio;
                let amp = (noise / 2.0).sqrt();
                let u: f64 = rng.sample(StandardNormal);
                let w: f64 = rng.sample(StandardNormal);
                v + amp * Complex64::new(u, w)
            });
            ComplexTensor3::from_entries(entries)
        })
        .collect()
}

/// Adds complex Gaussian noise to every tensor entry at every frequency.
///
/// For an entry `v`, the noise power is `|v|^2 / 10^(snr_db/10)` and the
/// perturbation is `sqrt(noise/2) (u + i w)` with `u, w` standard normal, so
/// the expected power ratio of perturbation to entry matches the requested
/// SNR. Passing `snr_db = f64::INFINITY` returns the signature unchanged
/// without consuming random draws.
pub fn add_noise(sig: &SpectralSignature, snr_db: f64, rng: &mut impl Rng) -> SpectralSignature {
    let mut out = sig.clone();
    out.coefficients = noisy_tensors(&sig.coefficients, snr_db, rng);
    out
}

/// Empirical calibration of the noise model at one SNR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub snr_db: f64,
    pub draws: usize,
    /// Root mean square of |e|/|v| over the draws.
    pub rms_amplitude_ratio: f64,
    /// Mean of |e|^2/|v|^2 over the draws.
    pub mean_power_ratio: f64,
    /// 10^(-snr/20), what `rms_amplitude_ratio` estimates.
    pub expected_amplitude_ratio: f64,
    /// 10^(-snr/10), what `mean_power_ratio` estimates.
    pub expected_power_ratio: f64,
}

/// Measures the perturbation-to-entry ratio the noise model actually
/// produces. The ratio e/v is scale free (the noise amplitude is
/// proportional to |v|), so one representative unit entry represents every
/// tensor entry at every frequency.
pub fn calibrate_noise(snr_db: f64, draws: usize, seed: u64) -> NoiseCalibration {
    assert!(draws >= 1);
    let expected_power_ratio = if snr_db.is_infinite() { 0.0 } else { 10f64.powf(-snr_db / 10.0) };
    let mut rng = rng::stream(seed, tags::SIGNATURE_NOISE, 0);
    let amp = (expected_power_ratio / 2.0).sqrt();
    let mut power_sum = 0.0;
    for _ in 0..draws {
        let u: f64 = rng.sample(StandardNormal);
        let w: f64 = rng.sample(StandardNormal);
        power_sum += amp * amp * (u * u + w * w);
    }
    let mean_power_ratio = power_sum / draws as f64;
    NoiseCalibration {
        snr_db,
        draws,
        rms_amplitude_ratio: mean_power_ratio.sqrt(),
        mean_power_ratio,
        expected_amplitude_ratio: expected_power_ratio.sqrt(),
        expected_power_ratio,
    }
}

fn reduce(part: crate::tensor::RealTensor3, kind: FeatureKind) -> [f64; 3] {
    match kind {
        FeatureKind::Invariants => {
            let inv = part.principal_invariants();
            [inv.i1, inv.i2, inv.i3]
        }
        FeatureKind::Eigenvalues => part.eigenvalues(),
    }
}

fn features_of_tensors(tensors: &[ComplexTensor3], kind: FeatureKind) -> Vec<f64> {
    let m = tensors.len();
    let mut x = vec![0.0; 6 * m];
    for (i, c) in tensors.iter().enumerate() {
        let re = reduce(c.real_part(), kind);
        let im = reduce(c.imag_part(), kind);
        for j in 0..3 {
            x[3 * i + j] = re[j];
            x[3 * m + 3 * i + j] = im[j];
        }
    }
    x
}

/// Rotation-invariant feature vector of a signature at `eval_freqs`.
///
/// Layout: first all real-part reductions, frequency-major
/// (`x[3 m + j]`, `j = 0..3` for frequency `m`), then the imaginary-part
/// block in the same order, `6 M` entries in total. Frequencies not on the
/// signature grid are interpolated; frequencies outside it are an error.
pub fn build_features(
    sig: &SpectralSignature,
    eval_freqs: &[f64],
    kind: FeatureKind,
) -> Result<Vec<f64>, DictionaryError> {
    let tensors = eval_freqs
        .iter()
        .map(|&w| sig.evaluate_at(w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(features_of_tensors(&tensors, kind))
}

/// Noise-free realization of every sample of an experiment: the scaled
/// tensors are kept so the same draw can be rendered at several noise levels.
#[derive(Clone, Debug)]
pub struct SampleSet {
    entries: Vec<SampleEntry>,
    class_counts: Vec<usize>,
    eval_freqs: Vec<f64>,
}

#[derive(Clone, Debug)]
struct SampleEntry {
    class_idx: usize,
    /// Global sample index; keys the per-sample noise streams.
    sample_id: u64,
    tensors: Vec<ComplexTensor3>,
    geometry_id: String,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }
}

fn validate_specs(specs: &[ClassSpec]) -> Result<(), DictionaryError> {
    if specs.is_empty() {
        return Err(DictionaryError::DegenerateSpec("no classes given".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    let mut ids: Vec<usize> = specs.iter().map(|s| s.class_id).collect();
    ids.sort_unstable();
    let expect: Vec<usize> = (1..=specs.len()).collect();
    if ids != expect {
        return Err(DictionaryError::DegenerateSpec(format!(
            "class ids must be 1..={} without gaps, got {ids:?}",
            specs.len()
        )));
    }
    Ok(())
}

/// Draws every sample of the experiment and realizes its noise-free tensors
/// at `eval_freqs`.
///
/// Classes are processed in class-id order, cycling through each class's
/// geometries and drawing `v_count` variations per geometry. The size and
/// conductivity draws act as relative factors `draw / mean` on each base
/// signature, so geometries of different base size keep their identity while
/// single-geometry classes reproduce the plain `N(m, s)` draw. Each sample
/// owns a derived random stream, making the result independent of thread
/// scheduling.
pub fn generate_samples(
    specs: &[ClassSpec],
    eval_freqs: &[f64],
    seed: u64,
) -> Result<SampleSet, DictionaryError> {
    validate_specs(specs)?;
    let mut order: Vec<&ClassSpec> = specs.iter().collect();
    order.sort_by_key(|s| s.class_id);

    struct Job<'a> {
        spec: &'a ClassSpec,
        base: &'a SpectralSignature,
        sample_id: u64,
    }
    let mut jobs = Vec::new();
    let mut class_counts = vec![0usize; order.len()];
    for spec in &order {
        for base in &spec.geometries {
            for _ in 0..spec.v_count {
                jobs.push(Job { spec, base, sample_id: jobs.len() as u64 });
                class_counts[spec.class_id - 1] += 1;
            }
        }
    }

    let entries = jobs
        .par_iter()
        .map(|job| {
            let mut rng = rng::stream(seed, tags::SAMPLE, job.sample_id);
            let alpha_draw = draw_positive(job.spec.m_alpha, job.spec.s_alpha, &mut rng);
            let sigma_draw = draw_positive(job.spec.m_sigma, job.spec.s_sigma, &mut rng);
            let alpha = job.base.alpha * (alpha_draw / job.spec.m_alpha);
            let sigma = job.base.sigma * (sigma_draw / job.spec.m_sigma);
            let scaled = scale_signature_to(job.base, alpha, sigma, eval_freqs)?;
            Ok(SampleEntry {
                class_idx: job.spec.class_id - 1,
                sample_id: job.sample_id,
                tensors: scaled.coefficients,
                geometry_id: job.base.geometry_id.clone(),
            })
        })
        .collect::<Result<Vec<_>, DictionaryError>>()?;

    Ok(SampleSet { entries, class_counts, eval_freqs: eval_freqs.to_vec() })
}

fn one_hot(k: usize, idx: usize) -> Vec<f64> {
    let mut t = vec![0.0; k];
    t[idx] = 1.0;
    t
}

/// Renders a sample set into feature vectors at one noise level. `noise_tag`
/// selects the random stream family (train or test rendering).
pub fn render_samples(
    set: &SampleSet,
    snr_db: f64,
    kind: FeatureKind,
    seed: u64,
    noise_tag: u64,
) -> Dictionary {
    let k = set.class_counts.len();
    let samples = set
        .entries
        .par_iter()
        .map(|e| {
            let mut rng = rng::stream(seed, noise_tag, e.sample_id);
            let noisy = noisy_tensors(&e.tensors, snr_db, &mut rng);
            LabeledSample { x: features_of_tensors(&noisy, kind), t: one_hot(k, e.class_idx) }
        })
        .collect();
    Dictionary {
        samples,
        class_counts: set.class_counts.clone(),
        eval_freqs: set.eval_freqs.clone(),
        kind,
    }
}

/// Builds the full labelled dictionary in one pass: draw variations, scale
/// the base signatures, add noise at `snr_db`, extract features.
pub fn build_dictionary(
    specs: &[ClassSpec],
    eval_freqs: &[f64],
    snr_db: f64,
    kind: FeatureKind,
    seed: u64,
) -> Result<Dictionary, DictionaryError> {
    let set = generate_samples(specs, eval_freqs, seed)?;
    Ok(render_samples(&set, snr_db, kind, seed, tags::NOISE_TRAIN))
}

/// Train and test renderings of one sample set at (possibly) different noise
/// levels. With equal SNRs both views share one rendering, matching the
/// usual protocol of splitting a single noisy dictionary.
pub fn build_renderings(
    specs: &[ClassSpec],
    eval_freqs: &[f64],
    snr_train_db: f64,
    snr_test_db: f64,
    kind: FeatureKind,
    seed: u64,
) -> Result<(Dictionary, Dictionary), DictionaryError> {
    let set = generate_samples(specs, eval_freqs, seed)?;
    let train = render_samples(&set, snr_train_db, kind, seed, tags::NOISE_TRAIN);
    let test = if snr_test_db == snr_train_db {
        train.clone()
    } else {
        render_samples(&set, snr_test_db, kind, seed, tags::NOISE_TEST)
    };
    Ok((train, test))
}

/// Per-class index partition used by [`split`]; exposed so paired renderings
/// can be split consistently.
pub fn split_indices(
    class_counts: &[usize],
    labels: impl Fn(usize) -> usize,
    total: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DictionaryError> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_counts.len()];
    for i in 0..total {
        by_class[labels(i)].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            // Nothing of this class present (e.g. it is being held out and
            // split elsewhere); there is nothing to partition.
            continue;
        }
        if idx.len() < 4 {
            return Err(DictionaryError::ClassTooSmall { class_id: k + 1, count: idx.len() });
        }
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        let mut rng = rng::stream(seed, tags::SPLIT, k as u64);
        // Fisher-Yates partial shuffle: pick the test subset.
        for i in 0..n_test {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Dictionary restricted to the given sample indices (in index order).
pub fn subset(d: &Dictionary, indices: &[usize]) -> Dictionary {
    let mut class_counts = vec![0usize; d.n_classes()];
    let samples: Vec<LabeledSample> = indices
        .iter()
        .map(|&i| {
            class_counts[d.samples[i].label()] += 1;
            d.samples[i].clone()
        })
        .collect();
    Dictionary {
        samples,
        class_counts,
        eval_freqs: d.eval_freqs.clone(),
        kind: d.kind,
    }
}

/// Stratified split: for each class, `round(test_fraction * P^(k))` samples
/// are chosen (without replacement, seed-deterministic) for the test set and
/// the rest train. Every input sample lands in exactly one side.
pub fn split(
    d: &Dictionary,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitDictionary, DictionaryError> {
    if let Some(k) = d.class_counts.iter().position(|&c| c == 0) {
        return Err(DictionaryError::ClassTooSmall { class_id: k + 1, count: 0 });
    }
    let (train_idx, test_idx) = split_indices(
        &d.class_counts,
        |i| d.samples[i].label(),
        d.len(),
        test_fraction,
        seed,
    )?;
    Ok(SplitDictionary { train: subset(d, &train_idx), test: subset(d, &test_idx) })
}

/// Leave-one-geometry-out split.
///
/// For the class owning `held_out`, every sample of that geometry goes to the
/// test set and the remaining geometries' samples all train; other classes
/// are split 3:1 as usual (their training rendering at `snr_train_db`, test
/// rendering at `snr_test_db`).
pub fn build_loo_dictionary(
    specs: &[ClassSpec],
    held_out: (usize, &str),
    eval_freqs: &[f64],
    kind: FeatureKind,
    snr_train_db: f64,
    snr_test_db: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitDictionary, DictionaryError> {
    validate_specs(specs)?;
    let (class_id, geometry_id) = held_out;
    let spec = specs.iter().find(|s| s.class_id == class_id).ok_or_else(|| {
        DictionaryError::GeometryNotFound { class_id, geometry_id: geometry_id.into() }
    })?;
    if !spec.geometries.iter().any(|g| g.geometry_id == geometry_id) {
        return Err(DictionaryError::GeometryNotFound {
            class_id,
            geometry_id: geometry_id.into(),
        });
    }
    if !spec.geometries.iter().any(|g| g.geometry_id != geometry_id) {
        return Err(DictionaryError::LastGeometry { class_id, geometry_id: geometry_id.into() });
    }

    let set = generate_samples(specs, eval_freqs, seed)?;
    let train_view = render_samples(&set, snr_train_db, kind, seed, tags::NOISE_TRAIN);
    let test_view = if snr_test_db == snr_train_db {
        train_view.clone()
    } else {
        render_samples(&set, snr_test_db, kind, seed, tags::NOISE_TEST)
    };

    // Split the other classes 3:1 over their sample positions.
    let held_class = class_id - 1;
    let mut other_counts = set.class_counts.clone();
    other_counts[held_class] = 0;
    let mut other_positions = Vec::new();
    for (pos, e) in set.entries.iter().enumerate() {
        if e.class_idx != held_class {
            other_positions.push(pos);
        }
    }
    let (rest_train, rest_test) = split_indices(
        &other_counts,
        |i| set.entries[other_positions[i]].class_idx,
        other_positions.len(),
        test_fraction,
        seed,
    )?;

    let mut train_idx: Vec<usize> = rest_train.iter().map(|&i| other_positions[i]).collect();
    let mut test_idx: Vec<usize> = rest_test.iter().map(|&i| other_positions[i]).collect();
    for (pos, e) in set.entries.iter().enumerate() {
        if e.class_idx == held_class {
            if e.geometry_id == geometry_id {
                test_idx.push(pos);
            } else {
                train_idx.push(pos);
            }
        }
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(SplitDictionary {
        train: subset(&train_view, &train_idx),
        test: subset(&test_view, &test_idx),
    })
}

/// Metadata written alongside an exported dictionary.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DictionarySidecar {
    pub eval_freqs_radps: Vec<f64>,
    pub feature_kind: FeatureKind,
    /// `None` means noise-free.
    pub snr_train_db: Option<f64>,
    pub snr_test_db: Option<f64>,
    pub seed: u64,
    pub class_counts: Vec<usize>,
}

/// Writes `class_id, t_1..t_K, x_1..x_F` rows with full float precision.
pub fn write_dictionary_csv(d: &Dictionary, path: impl AsRef<Path>) -> Result<(), DictionaryError> {
    let k = d.n_classes();
    let f = d.n_features();
    let mut out = String::new();
    let mut header = String::from("class_id");
    for i in 1..=k {
        let _ = write!(header, ",t_{i}");
    }
    for i in 1..=f {
        let _ = write!(header, ",x_{i}");
    }
    let _ = writeln!(out, "{header}");
    for s in &d.samples {
        let _ = write!(out, "{}", s.label() + 1);
        for v in &s.t {
            let _ = write!(out, ",{}", crate::signature::format_full(*v));
        }
        for v in &s.x {
            let _ = write!(out, ",{}", crate::signature::format_full(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a dictionary back from [`write_dictionary_csv`] output. The sidecar
/// supplies grid and provenance information; pass the frequencies and kind in.
pub fn read_dictionary_csv(
    path: impl AsRef<Path>,
    eval_freqs: Vec<f64>,
    kind: FeatureKind,
) -> Result<Dictionary, DictionaryError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DictionaryError::Parse {
        line: 1,
        message: "empty dictionary file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let k = cols.iter().filter(|c| c.starts_with("t_")).count();
    let f = cols.iter().filter(|c| c.starts_with("x_")).count();
    if k == 0 || cols.len() != 1 + k + f {
        return Err(DictionaryError::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut samples = Vec::new();
    let mut class_counts = vec![0usize; k];
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + k + f {
            return Err(DictionaryError::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", 1 + k + f, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, DictionaryError> {
            s.trim().parse().map_err(|_| DictionaryError::Parse {
                line: line_no,
                message: format!("not a number: {s:?}"),
            })
        };
        let t = fields[1..1 + k].iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?;
        let x = fields[1 + k..].iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?;
        let sample = LabeledSample { x, t };
        class_counts[sample.label()] += 1;
        samples.push(sample);
    }
    Ok(Dictionary { samples, class_counts, eval_freqs, kind })
}
