//! Experiment configuration: TOML schema, validation, and materialization
//! into the library's class specifications.
//!
//! Physical quantities carry unit suffixes in their key names (`_radps`,
//! `_m`, `_spm`, `_db`) so a config file can be audited at a glance.

use anyhow::{bail, Context, Result};
use mpt_classify::classify::{Hyperparams, Method};
use mpt_classify::dictionary::{ClassSpec, FeatureKind};
use mpt_classify::signature::{
    linear_grid, log_grid, load_signatures, sphere_signature, SignatureFormat, SpectralSignature,
};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; `--seed` on the command line takes precedence.
    pub seed: Option<u64>,
    /// Output directory; `--out` takes precedence.
    pub out_dir: Option<PathBuf>,
    pub frequencies: FrequencyConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(rename = "class")]
    pub classes: Vec<ClassConfig>,
    #[serde(default)]
    pub methods: MethodsConfig,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub base_grid: BaseGridConfig,
    #[serde(default)]
    pub dictionary: DictionaryConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub noise_check: NoiseCheckConfig,
    #[serde(default)]
    pub loo: LooConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    pub lo_radps: f64,
    pub hi_radps: f64,
    /// Number of evaluation frequencies M.
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(default = "default_kind")]
    pub kind: FeatureKind,
}

fn default_kind() -> FeatureKind {
    FeatureKind::Invariants
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { kind: default_kind() }
    }
}

/// Omitted SNR means noise-free; an omitted test SNR follows the train SNR.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_train_db: Option<f64>,
    pub snr_test_db: Option<f64>,
}

impl NoiseConfig {
    pub fn snr_train(&self) -> f64 {
        self.snr_train_db.unwrap_or(f64::INFINITY)
    }

    pub fn snr_test(&self) -> f64 {
        self.snr_test_db.unwrap_or_else(|| self.snr_train())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_mccv_iterations")]
    pub mccv_iterations: usize,
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_mccv_iterations() -> usize {
    20
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: default_test_fraction(),
            mccv_iterations: default_mccv_iterations(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    /// 1-based class id; ids must cover 1..=K without gaps.
    pub id: usize,
    #[serde(default)]
    pub name: Option<String>,
    /// Mean and spread of the size draw, in m.
    pub m_alpha_m: f64,
    #[serde(default)]
    pub s_alpha_m: f64,
    /// Mean and spread of the conductivity draw, in S/m.
    pub m_sigma_spm: f64,
    #[serde(default)]
    pub s_sigma_spm: f64,
    /// Variations drawn per geometry.
    #[serde(default = "default_variations")]
    pub variations: usize,
    #[serde(rename = "geometry")]
    pub geometries: Vec<GeometryConfig>,
}

fn default_variations() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    /// Analytic conducting permeable sphere, synthesized on the padded base grid.
    Sphere {
        alpha_m: f64,
        sigma_spm: f64,
        #[serde(default = "default_mu_r")]
        mu_r: f64,
        #[serde(default)]
        id: Option<String>,
    },
    /// Signatures read from disk; `path` may hold several.
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<FileFormat>,
    },
}

fn default_mu_r() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Csv,
    Json,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodsConfig {
    #[serde(default = "all_method_names")]
    pub list: Vec<String>,
}

fn all_method_names() -> Vec<String> {
    Method::ALL.iter().map(|m| m.name().to_string()).collect()
}

impl Default for MethodsConfig {
    fn default() -> Self {
        MethodsConfig { list: all_method_names() }
    }
}

/// The grid sphere signatures are synthesized on: the evaluation range padded
/// by `pad_decades` on each side so scaled draws stay inside the tabulation.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseGridConfig {
    #[serde(default = "default_pad_decades")]
    pub pad_decades: f64,
    #[serde(default = "default_points_per_decade")]
    pub points_per_decade: f64,
}

fn default_pad_decades() -> f64 {
    8.0
}

fn default_points_per_decade() -> f64 {
    25.0
}

impl Default for BaseGridConfig {
    fn default() -> Self {
        BaseGridConfig {
            pad_decades: default_pad_decades(),
            points_per_decade: default_points_per_decade(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    /// Per-class sample counts to build dictionaries for; empty keeps the
    /// counts implied by each class's `variations`.
    #[serde(default)]
    pub p_schedule: Vec<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Frequency counts M; empty means the base `frequencies.count`.
    #[serde(default)]
    pub m_values: Vec<usize>,
    /// SNR applied to both train and test; empty means the base noise config.
    #[serde(default)]
    pub snr_values_db: Vec<f64>,
    /// Seeds to repeat every cell with; empty means the single resolved seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default, rename = "hyper_axis")]
    pub hyper_axes: Vec<HyperAxis>,
}

/// One hyperparameter axis of a sweep, applied to a single method.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperAxis {
    pub method: String,
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCheckConfig {
    #[serde(default = "default_check_snrs")]
    pub snr_values_db: Vec<f64>,
    #[serde(default = "default_check_draws")]
    pub draws: usize,
}

fn default_check_snrs() -> Vec<f64> {
    vec![40.0, 20.0, 10.0]
}

fn default_check_draws() -> usize {
    10_000
}

impl Default for NoiseCheckConfig {
    fn default() -> Self {
        NoiseCheckConfig { snr_values_db: default_check_snrs(), draws: default_check_draws() }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LooConfig {
    #[serde(default)]
    pub held_out: Vec<HeldOutConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldOutConfig {
    pub class: usize,
    pub geometry: String,
}

impl ExperimentConfig {
    /// Parses and validates a config file. Relative signature paths are
    /// resolved against the config file's directory, and every referenced
    /// file must exist now rather than at first use.
    pub fn load(path: &Path) -> Result<(ExperimentConfig, Vec<u8>)> {
        let raw = std::fs::read(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let text = std::str::from_utf8(&raw).context("config is not UTF-8")?;
        let mut cfg: ExperimentConfig =
            toml::from_str(text).with_context(|| format!("cannot parse {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for class in &mut cfg.classes {
            for g in &mut class.geometries {
                if let GeometryConfig::File { path: p, .. } = g {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                    if !p.exists() {
                        bail!("class {}: signature file {} does not exist", class.id, p.display());
                    }
                }
            }
        }
        cfg.validate()?;
        Ok((cfg, raw))
    }

    fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            bail!("no [[class]] sections");
        }
        let f = &self.frequencies;
        if !(f.lo_radps > 0.0) || !(f.hi_radps > f.lo_radps) || f.count == 0 {
            bail!("frequencies need 0 < lo_radps < hi_radps and count >= 1");
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            bail!("split.test_fraction must lie in (0, 1)");
        }
        if self.split.mccv_iterations == 0 {
            bail!("split.mccv_iterations must be at least 1");
        }
        for name in &self.methods.list {
            self.parse_method(name)?;
        }
        for axis in &self.sweep.hyper_axes {
            self.parse_method(&axis.method)?;
            if axis.values.is_empty() {
                bail!("sweep hyper axis {} has no values", axis.key);
            }
        }
        for class in &self.classes {
            if class.geometries.is_empty() {
                bail!("class {} has no geometries", class.id);
            }
        }
        Ok(())
    }

    fn parse_method(&self, name: &str) -> Result<Method> {
        name.parse::<Method>()
            .map_err(|_| anyhow::anyhow!("unknown method {name:?} (expected one of {})",
                all_method_names().join(", ")))
    }

    /// Methods in config order.
    pub fn methods(&self) -> Result<Vec<Method>> {
        if self.methods.list.is_empty() {
            bail!("method list is empty");
        }
        self.methods.list.iter().map(|n| self.parse_method(n)).collect()
    }

    /// The M-point evaluation grid.
    pub fn eval_grid(&self, m: usize) -> Vec<f64> {
        let f = &self.frequencies;
        match f.spacing {
            Spacing::Log => log_grid(f.lo_radps, f.hi_radps, m),
            Spacing::Linear => linear_grid(f.lo_radps, f.hi_radps, m),
        }
    }

    fn sphere_base_grid(&self) -> Vec<f64> {
        let f = &self.frequencies;
        let pad = 10f64.powf(self.base_grid.pad_decades);
        let lo = f.lo_radps / pad;
        let hi = f.hi_radps * pad;
        let decades = (hi / lo).log10();
        let n = (decades * self.base_grid.points_per_decade).ceil() as usize + 1;
        log_grid(lo, hi, n.max(2))
    }

    /// Builds the class sampling specs: synthesizes sphere signatures on the
    /// padded base grid and loads file signatures. `p_per_class` overrides
    /// every class's per-geometry variation count to hit that total.
    pub fn class_specs(&self, p_per_class: Option<usize>) -> Result<Vec<ClassSpec>> {
        let base_grid = self.sphere_base_grid();
        let mut specs = Vec::with_capacity(self.classes.len());
        for class in &self.classes {
            let mut geometries: Vec<SpectralSignature> = Vec::new();
            for (gi, g) in class.geometries.iter().enumerate() {
                match g {
                    GeometryConfig::Sphere { alpha_m, sigma_spm, mu_r, id } => {
                        let mut sig = sphere_signature(*alpha_m, *sigma_spm, *mu_r, &base_grid)
                            .with_context(|| format!("class {} sphere {}", class.id, gi + 1))?;
                        sig.geometry_id =
                            id.clone().unwrap_or_else(|| format!("sphere_{}", gi + 1));
                        sig.class_id = class.id;
                        geometries.push(sig);
                    }
                    GeometryConfig::File { path, format } => {
                        let fmt = match format {
                            Some(FileFormat::Csv) => SignatureFormat::Csv,
                            Some(FileFormat::Json) => SignatureFormat::Json,
                            None => {
                                if path.extension().is_some_and(|e| e == "json") {
                                    SignatureFormat::Json
                                } else {
                                    SignatureFormat::Csv
                                }
                            }
                        };
                        let mut sigs = load_signatures(path, fmt)
                            .with_context(|| format!("loading {}", path.display()))?;
                        for sig in &mut sigs {
                            sig.class_id = class.id;
                        }
                        geometries.extend(sigs);
                    }
                }
            }
            let variations = match p_per_class {
                Some(p) => {
                    let per = (p as f64 / geometries.len() as f64).round() as usize;
                    per.max(1)
                }
                None => class.variations,
            };
            specs.push(ClassSpec {
                class_id: class.id,
                geometries,
                m_alpha: class.m_alpha_m,
                s_alpha: class.s_alpha_m,
                m_sigma: class.m_sigma_spm,
                s_sigma: class.s_sigma_spm,
                v_count: variations,
            });
        }
        Ok(specs)
    }

    /// Display name for logging.
    pub fn class_name(&self, class_id: usize) -> String {
        self.classes
            .iter()
            .find(|c| c.id == class_id)
            .and_then(|c| c.name.clone())
            .unwrap_or_else(|| format!("class {class_id}"))
    }
}

/// Overrides one hyperparameter by name; numeric values are cast per key and
/// flags interpret nonzero as true.
pub fn apply_hyper(params: &mut Hyperparams, method: Method, key: &str, value: f64) -> Result<()> {
    let as_usize = || value.round() as usize;
    let as_opt = || if value > 0.0 { Some(value.round() as usize) } else { None };
    match (method, key) {
        (Method::Logistic, "learning_rate") => params.logistic.learning_rate = value,
        (Method::Logistic, "l2") => params.logistic.l2 = value,
        (Method::Logistic, "max_iter") => params.logistic.max_iter = as_usize(),
        (Method::Logistic, "tol") => params.logistic.tol = value,
        (Method::Logistic, "generative") => params.logistic.generative = value != 0.0,
        (Method::Tree, "max_depth") => params.tree.max_depth = as_opt(),
        (Method::Tree, "min_samples_leaf") => params.tree.min_samples_leaf = as_usize(),
        (Method::Tree, "ccp_alpha") => params.tree.ccp_alpha = value,
        (Method::Forest, "n_trees") => params.forest.n_trees = as_usize(),
        (Method::Forest, "max_depth") => params.forest.max_depth = as_opt(),
        (Method::Forest, "feature_subset") => params.forest.feature_subset = as_opt(),
        (Method::GBoost, "n_estimators") => params.gboost.n_estimators = as_usize(),
        (Method::GBoost, "learning_rate") => params.gboost.learning_rate = value,
        (Method::GBoost, "max_depth") => params.gboost.max_depth = as_usize(),
        (Method::Svm, "c") => params.svm.c = value,
        (Method::Svm, "tol") => params.svm.tol = value,
        (Method::Svm, "max_sweeps") => params.svm.max_sweeps = as_usize(),
        (Method::Svm, "gamma") => params.svm.gamma = if value > 0.0 { Some(value) } else { None },
        (Method::Mlp, "hidden_layers") => params.mlp.hidden_layers = as_usize(),
        (Method::Mlp, "hidden_units") => params.mlp.hidden_units = as_usize(),
        (Method::Mlp, "learning_rate") => params.mlp.learning_rate = value,
        (Method::Mlp, "max_iter") => params.mlp.max_iter = as_usize(),
        (Method::Mlp, "batch_size") => params.mlp.batch_size = as_usize(),
        (Method::Mlp, "tol") => params.mlp.tol = value,
        (Method::Mlp, "n_iter_no_change") => params.mlp.n_iter_no_change = as_usize(),
        (Method::Mlp, "layer_softmax_hidden") => params.mlp.layer_softmax_hidden = value != 0.0,
        (m, k) => bail!("method {} has no sweepable hyperparameter {k:?}", m.name()),
    }
    Ok(())
}
