//! The experiment verbs. Every command reads one config, writes its outputs
//! under the run directory, and finishes by recording a manifest with the
//! config hash and the hashes of everything written, so reruns can be
//! checked byte for byte.

use crate::config::{apply_hyper, ExperimentConfig, HyperAxis};
use anyhow::{bail, Context, Result};
use mpt_classify::classify::{self, Method};
use mpt_classify::dictionary::{
    build_loo_dictionary, build_renderings, calibrate_noise, split_indices, subset, ClassSpec,
    Dictionary, DictionarySidecar, NoiseCalibration,
};
use mpt_classify::eval::{
    self, class_metrics, confusion_matrix, kappa, mccv_paired, uncertainty_summary, KappaSummary,
    UncertaintySummary,
};
use mpt_classify::signature::format_full;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Output directory plus the list of files written into it this run.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<OutputDir> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("cannot create output dir {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    /// Registers a relative file name and returns its absolute path.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.root.join(name)
    }

    /// Writes `manifest.json`: the config hash and the name + hash of every
    /// output, sorted by name. No timestamps, so identical runs produce
    /// identical manifests.
    pub fn write_manifest(mut self, config_raw: &[u8]) -> Result<()> {
        #[derive(Serialize)]
        struct Entry {
            path: String,
            sha256: String,
        }
        #[derive(Serialize)]
        struct Manifest {
            config_sha256: String,
            files: Vec<Entry>,
        }
        self.files.sort();
        self.files.dedup();
        let files = self
            .files
            .iter()
            .map(|name| {
                let bytes = std::fs::read(self.root.join(name))
                    .with_context(|| format!("output {name} missing at manifest time"))?;
                Ok(Entry { path: name.clone(), sha256: sha256_hex(&bytes) })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest { config_sha256: sha256_hex(config_raw), files };
        std::fs::write(self.root.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// `None` when the level means noise-free; keeps sidecars honest about
/// `inf` configs as well as omitted ones.
fn snr_option(snr: f64) -> Option<f64> {
    snr.is_finite().then_some(snr)
}

fn log_class_counts(cfg: &ExperimentConfig, specs: &[ClassSpec]) {
    for spec in specs {
        println!(
            "class {} ({}): {} samples ({} geometries x {} variations)",
            spec.class_id,
            cfg.class_name(spec.class_id),
            spec.samples_per_class(),
            spec.geometries.len(),
            spec.v_count
        );
    }
}

/// Splits paired train/test renderings with one stratified index partition.
fn paired_split(
    train_view: &Dictionary,
    test_view: &Dictionary,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dictionary, Dictionary)> {
    let (train_idx, test_idx) = split_indices(
        &train_view.class_counts,
        |i| train_view.samples[i].label(),
        train_view.len(),
        test_fraction,
        seed,
    )?;
    Ok((subset(train_view, &train_idx), subset(test_view, &test_idx)))
}

/// Builds dictionaries for every entry of the P schedule and exports them as
/// CSV plus sidecar metadata.
pub fn cmd_build(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<()> {
    let freqs = cfg.eval_grid(cfg.frequencies.count);
    let kind = cfg.features.kind;
    let snr_train = cfg.noise.snr_train();
    let snr_test = cfg.noise.snr_test();
    let schedule: Vec<Option<usize>> = if cfg.dictionary.p_schedule.is_empty() {
        vec![None]
    } else {
        cfg.dictionary.p_schedule.iter().map(|&p| Some(p)).collect()
    };

    for p in schedule {
        let specs = cfg.class_specs(p)?;
        let stem = match p {
            Some(p) => format!("dictionary_p{p}"),
            None => "dictionary".to_string(),
        };
        println!("building {stem} at SNR {snr_train} dB (train) / {snr_test} dB (test)");
        log_class_counts(cfg, &specs);
        let (train_view, test_view) =
            build_renderings(&specs, &freqs, snr_train, snr_test, kind, seed)?;
        mpt_classify::dictionary::write_dictionary_csv(
            &train_view,
            out.file(&format!("{stem}.csv")),
        )?;
        if snr_test != snr_train {
            mpt_classify::dictionary::write_dictionary_csv(
                &test_view,
                out.file(&format!("{stem}_test.csv")),
            )?;
        }
        let sidecar = DictionarySidecar {
            eval_freqs_radps: freqs.clone(),
            feature_kind: kind,
            snr_train_db: snr_option(snr_train),
            snr_test_db: snr_option(snr_test),
            seed,
            class_counts: train_view.class_counts.clone(),
        };
        write_json(&out.file(&format!("{stem}.sidecar.json")), &sidecar)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainedMethodReport {
    method: String,
    test_kappa: f64,
    converged: Option<bool>,
    final_loss: Option<f64>,
}

fn prepare_single_split(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(Dictionary, Dictionary)> {
    let freqs = cfg.eval_grid(cfg.frequencies.count);
    let specs = cfg.class_specs(None)?;
    log_class_counts(cfg, &specs);
    let (train_view, test_view) = build_renderings(
        &specs,
        &freqs,
        cfg.noise.snr_train(),
        cfg.noise.snr_test(),
        cfg.features.kind,
        seed,
    )?;
    paired_split(&train_view, &test_view, cfg.split.test_fraction, seed)
}

/// Trains every configured method on one stratified split and saves the
/// models plus a small report of test kappa and convergence state.
pub fn cmd_train(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<()> {
    let methods = cfg.methods()?;
    let (d_train, d_test) = prepare_single_split(cfg, seed)?;
    let mut report = Vec::new();
    for method in methods {
        let model = classify::train(method, &cfg.hyper, &d_train, seed)?;
        model.save(out.file(&format!("model_{}.json", method.name())))?;
        let k = kappa(&confusion_matrix(&model, &d_test)?)?;
        let (converged, final_loss) = match model.convergence() {
            Some((c, l)) => (Some(c), Some(l)),
            None => (None, None),
        };
        println!("trained {}: test kappa {k:.4}", method.name());
        report.push(TrainedMethodReport {
            method: method.name().to_string(),
            test_kappa: k,
            converged,
            final_loss,
        });
    }
    write_json(&out.file("training_report.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluatedMethod {
    method: String,
    kappa: f64,
    class_metrics: Vec<eval::ClassMetrics>,
}

#[derive(Serialize)]
struct ClassUncertainty {
    true_class: usize,
    summaries: Vec<UncertaintySummary>,
}

/// Evaluates every configured method on one stratified split: confusion
/// matrices (counts and normalized), per-class metrics, kappa, and posterior
/// percentile summaries for the probabilistic methods.
pub fn cmd_evaluate(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<()> {
    let methods = cfg.methods()?;
    let (d_train, d_test) = prepare_single_split(cfg, seed)?;
    let k_classes = d_train.n_classes();
    let mut evaluated = Vec::new();
    for method in methods {
        let name = method.name();
        let model = classify::train(method, &cfg.hyper, &d_train, seed)?;
        let confusion = confusion_matrix(&model, &d_test)?;
        let k = kappa(&confusion)?;
        let metrics = class_metrics(&confusion);
        eval::write_confusion_csv(&confusion, out.file(&format!("confusion_{name}.csv")), false)?;
        eval::write_confusion_csv(
            &confusion,
            out.file(&format!("confusion_{name}_normalized.csv")),
            true,
        )?;
        eval::write_class_metrics_csv(&metrics, out.file(&format!("metrics_{name}.csv")))?;
        if model.is_probabilistic() {
            let per_class = (1..=k_classes)
                .map(|c| {
                    Ok(ClassUncertainty {
                        true_class: c,
                        summaries: uncertainty_summary(&model, &d_test, c)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_json(&out.file(&format!("uncertainty_{name}.json")), &per_class)?;
        } else {
            println!("{name}: vote frequencies only, skipping percentile summaries");
        }
        println!("evaluated {name}: kappa {k:.4}");
        evaluated.push(EvaluatedMethod { method: name.to_string(), kappa: k, class_metrics: metrics });
    }
    write_json(&out.file("evaluation.json"), &evaluated)?;
    Ok(())
}

fn kappa_columns(s: &KappaSummary) -> String {
    format!(
        "{},{},{},{},{},{}",
        format_full(s.mean),
        format_full(s.min),
        format_full(s.q1),
        format_full(s.median),
        format_full(s.q3),
        format_full(s.max)
    )
}

const KAPPA_HEADER: &str = "kappa_mean,kappa_min,kappa_q1,kappa_median,kappa_q3,kappa_max";

/// Kappa-versus-P table: for every per-class sample count in the schedule
/// and every method, an MCCV row of kappa statistics.
pub fn cmd_compare(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<()> {
    let methods = cfg.methods()?;
    let schedule: Vec<Option<usize>> = if cfg.dictionary.p_schedule.is_empty() {
        vec![None]
    } else {
        cfg.dictionary.p_schedule.iter().map(|&p| Some(p)).collect()
    };
    let freqs = cfg.eval_grid(cfg.frequencies.count);
    let snr_train = cfg.noise.snr_train();
    let snr_test = cfg.noise.snr_test();

    let mut csv = format!("method,p_per_class,snr_train_db,snr_test_db,{KAPPA_HEADER}\n");
    for p in schedule {
        let specs = cfg.class_specs(p)?;
        let p_actual = specs.iter().map(ClassSpec::samples_per_class).max().unwrap_or(0);
        let (train_view, test_view) =
            build_renderings(&specs, &freqs, snr_train, snr_test, cfg.features.kind, seed)?;
        for &method in &methods {
            let report = mccv_paired(
                method,
                &cfg.hyper,
                &train_view,
                &test_view,
                cfg.split.mccv_iterations,
                cfg.split.test_fraction,
                seed,
            )?;
            println!(
                "compare {} P={}: median kappa {:.4}",
                method.name(),
                p_actual,
                report.kappa_summary.median
            );
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                method.name(),
                p_actual,
                snr_train,
                snr_test,
                kappa_columns(&report.kappa_summary)
            );
        }
    }
    std::fs::write(out.file("compare.csv"), csv)?;
    Ok(())
}

fn axes_for<'a>(axes: &'a [HyperAxis], method: Method) -> Vec<&'a HyperAxis> {
    axes.iter().filter(|a| a.method == method.name()).collect()
}

/// Axis value combinations for one method: none, one axis, or the cartesian
/// product of two.
fn hyper_combos(axes: &[&HyperAxis]) -> Result<Vec<Vec<(String, f64)>>> {
    match axes {
        [] => Ok(vec![Vec::new()]),
        [a] => Ok(a.values.iter().map(|&v| vec![(a.key.clone(), v)]).collect()),
        [a, b] => {
            let mut combos = Vec::new();
            for &va in &a.values {
                for &vb in &b.values {
                    combos.push(vec![(a.key.clone(), va), (b.key.clone(), vb)]);
                }
            }
            Ok(combos)
        }
        more => bail!("at most two hyper axes per method, got {}", more.len()),
    }
}

/// Full-factorial sweep over frequency count, SNR, per-method hyperparameter
/// axes, and seeds. Each cell rebuilds its dictionary and runs MCCV.
pub fn cmd_sweep(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<()> {
    let methods = cfg.methods()?;
    let ms: Vec<usize> = if cfg.sweep.m_values.is_empty() {
        vec![cfg.frequencies.count]
    } else {
        cfg.sweep.m_values.clone()
    };
    // `None` keeps the base noise config; a value sets train and test SNR.
    let snrs: Vec<Option<f64>> = if cfg.sweep.snr_values_db.is_empty() {
        vec![None]
    } else {
        cfg.sweep.snr_values_db.iter().map(|&s| Some(s)).collect()
    };
    let seeds: Vec<u64> = if cfg.sweep.seeds.is_empty() {
        vec![seed]
    } else {
        cfg.sweep.seeds.clone()
    };
    let specs = cfg.class_specs(None)?;

    let mut csv = format!(
        "method,m,snr_train_db,snr_test_db,axis1_key,axis1_value,axis2_key,axis2_value,seed,{KAPPA_HEADER}\n"
    );
    let mut cells = 0usize;
    for &m in &ms {
        let freqs = cfg.eval_grid(m);
        for &snr in &snrs {
            let (snr_train, snr_test) = match snr {
                Some(s) => (s, s),
                None => (cfg.noise.snr_train(), cfg.noise.snr_test()),
            };
            for &cell_seed in &seeds {
                let (train_view, test_view) = build_renderings(
                    &specs,
                    &freqs,
                    snr_train,
                    snr_test,
                    cfg.features.kind,
                    cell_seed,
                )?;
                for &method in &methods {
                    let axes = axes_for(&cfg.sweep.hyper_axes, method);
                    for combo in hyper_combos(&axes)? {
                        let mut params = cfg.hyper.clone();
                        for (key, value) in &combo {
                            apply_hyper(&mut params, method, key, *value)?;
                        }
                        let report = mccv_paired(
                            method,
                            &params,
                            &train_view,
                            &test_view,
                            cfg.split.mccv_iterations,
                            cfg.split.test_fraction,
                            cell_seed,
                        )?;
                        let axis_cell = |i: usize| {
                            combo
                                .get(i)
                                .map(|(k, v)| (k.clone(), v.to_string()))
                                .unwrap_or_default()
                        };
                        let (k1, v1) = axis_cell(0);
                        let (k2, v2) = axis_cell(1);
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{},{},{},{},{},{}",
                            method.name(),
                            m,
                            snr_train,
                            snr_test,
                            k1,
                            v1,
                            k2,
                            v2,
                            cell_seed,
                            kappa_columns(&report.kappa_summary)
                        );
                        cells += 1;
                    }
                }
            }
        }
    }
    println!("sweep finished: {cells} cells");
    std::fs::write(out.file("sweep.csv"), csv)?;
    Ok(())
}

#[derive(Serialize)]
struct LooReport {
    method: String,
    class_id: usize,
    geometry_id: String,
    kappa: f64,
    /// Percentile summaries of the held-out samples' posteriors, one entry
    /// per output class; absent for non-probabilistic methods.
    summaries: Option<Vec<UncertaintySummary>>,
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Leave-one-geometry-out study: trains without each held-out geometry and
/// reports kappa plus the posterior distribution over its unseen samples.
pub fn cmd_loo(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<()> {
    if cfg.loo.held_out.is_empty() {
        bail!("loo requires at least one [[loo.held_out]] entry");
    }
    let methods = cfg.methods()?;
    let specs = cfg.class_specs(None)?;
    let freqs = cfg.eval_grid(cfg.frequencies.count);

    let mut csv = String::from(
        "method,class_id,geometry_id,kappa,gamma_p5,gamma_q1,gamma_median,gamma_q3,gamma_p95\n",
    );
    for held in &cfg.loo.held_out {
        let sd = build_loo_dictionary(
            &specs,
            (held.class, &held.geometry),
            &freqs,
            cfg.features.kind,
            cfg.noise.snr_train(),
            cfg.noise.snr_test(),
            cfg.split.test_fraction,
            seed,
        )?;
        for &method in &methods {
            let model = classify::train(method, &cfg.hyper, &sd.train, seed)?;
            let k = kappa(&confusion_matrix(&model, &sd.test)?)?;
            let summaries = if model.is_probabilistic() {
                Some(uncertainty_summary(&model, &sd.test, held.class)?)
            } else {
                None
            };
            let gamma_cells = match &summaries {
                Some(s) => {
                    let t = &s[held.class - 1];
                    format!(
                        "{},{},{},{},{}",
                        format_full(t.p5),
                        format_full(t.q1),
                        format_full(t.median),
                        format_full(t.q3),
                        format_full(t.p95)
                    )
                }
                None => ",,,,".to_string(),
            };
            println!(
                "loo {} class {} geometry {}: kappa {:.4}",
                method.name(),
                held.class,
                held.geometry,
                k
            );
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                method.name(),
                held.class,
                held.geometry,
                format_full(k),
                gamma_cells
            );
            let report = LooReport {
                method: method.name().to_string(),
                class_id: held.class,
                geometry_id: held.geometry.clone(),
                kappa: k,
                summaries,
            };
            write_json(
                &out.file(&format!(
                    "loo_{}_{}_{}.json",
                    method.name(),
                    held.class,
                    sanitize(&held.geometry)
                )),
                &report,
            )?;
        }
    }
    std::fs::write(out.file("loo.csv"), csv)?;
    Ok(())
}

/// Measures the calibration of the noise model at each requested SNR.
pub fn cmd_noise_check(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<()> {
    let checks: Vec<NoiseCalibration> = cfg
        .noise_check
        .snr_values_db
        .iter()
        .map(|&snr| calibrate_noise(snr, cfg.noise_check.draws, seed))
        .collect();
    let mut csv = String::from(
        "snr_db,draws,rms_amplitude_ratio,expected_amplitude_ratio,mean_power_ratio,expected_power_ratio\n",
    );
    for c in &checks {
        println!(
            "SNR {} dB: rms amplitude ratio {:.5} (expected {:.5})",
            c.snr_db, c.rms_amplitude_ratio, c.expected_amplitude_ratio
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.snr_db,
            c.draws,
            format_full(c.rms_amplitude_ratio),
            format_full(c.expected_amplitude_ratio),
            format_full(c.mean_power_ratio),
            format_full(c.expected_power_ratio)
        );
    }
    std::fs::write(out.file("noise_check.csv"), csv)?;
    write_json(&out.file("noise_check.json"), &checks)?;
    Ok(())
}
