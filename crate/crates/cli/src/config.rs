//! Experiment configuration file (TOML). Unknown keys are rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};

use qegm_core::data::{CsvSchema, LabelRule, MixtureSpec};
use qegm_core::metrics::EvaluationOptions;
use qegm_core::model::{LossConfig, Mode, ModelConfig};
use qegm_core::randomness::SourceKind;
use qegm_core::train::TrainConfig;
use qegm_core::vqc::{AnsatzSpec, Encoding};
use qegm_core::{sha256_hex, Error};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    #[serde(default)]
    pub loss: LossConfig,
    pub training: TrainConfig,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory relative paths are resolved against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub seed: u64,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    pub label: LabelRule,
    pub source: SourceSection,
}

fn default_split() -> [f64; 3] {
    [0.70, 0.15, 0.15]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSection {
    Mixture {
        n_samples: usize,
        #[serde(default = "MixtureSpec::benchmark")]
        mixture: MixtureSpec,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        categorical: Vec<qegm_core::data::CategoricalColumn>,
    },
}

impl SourceSection {
    pub fn mixture(&self) -> Option<&MixtureSpec> {
        match self {
            SourceSection::Mixture {
                mixture,
                ..
            } => Some(mixture),
            SourceSection::Csv { .. } => None,
        }
    }

    pub fn csv_schema(&self) -> Option<CsvSchema> {
        match self {
            SourceSection::Csv { categorical, .. } => Some(CsvSchema {
                categorical: categorical.clone(),
            }),
            SourceSection::Mixture { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub mode: Mode,
    pub latent_dim: usize,
    /// Optional cross-check against the qubit count implied by the encoding.
    #[serde(default)]
    pub n_qubits: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_encoding")]
    pub encoding: Encoding,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_true")]
    pub quantum_input_grad: bool,
    #[serde(default = "default_angle_scale")]
    pub init_angle_scale: f64,
    /// Measurement shots for generation; analytic expectations when absent.
    #[serde(default)]
    pub shots: Option<usize>,
    /// Defaults to the simulated QRNG for the quantum model and the seeded
    /// PRNG for the baseline.
    #[serde(default)]
    pub noise_source: Option<SourceKind>,
    #[serde(default)]
    pub entropy_file: Option<PathBuf>,
}

fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_depth() -> usize {
    3
}
fn default_encoding() -> Encoding {
    Encoding::FeatureMap
}
fn default_sigma() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_angle_scale() -> f64 {
    0.1
}

impl ModelSection {
    pub fn model_config(&self, data_dim: usize) -> ModelConfig {
        ModelConfig {
            data_dim,
            latent_dim: self.latent_dim,
            hidden: self.hidden.clone(),
            depth: self.depth,
            encoding: self.encoding,
            mode: self.mode,
            noise_sigma: self.noise_sigma,
            quantum_input_grad: self.quantum_input_grad,
            init_angle_scale: self.init_angle_scale,
        }
    }

    pub fn noise_kind(&self) -> SourceKind {
        self.noise_source.unwrap_or(match self.mode {
            Mode::Quantum => SourceKind::SimulatedQrng,
            Mode::ClassicalBaseline => SourceKind::SeededPrng,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_generated")]
    pub generated_samples: usize,
    #[serde(default = "default_true")]
    pub sample_head: bool,
}

fn default_bins() -> usize {
    qegm_core::metrics::DEFAULT_BINS
}
fn default_smoothing() -> f64 {
    qegm_core::metrics::DEFAULT_SMOOTHING
}
fn default_alphas() -> Vec<f64> {
    vec![0.5, 0.8, 0.9, 0.95]
}
fn default_generated() -> usize {
    10_000
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            bins: default_bins(),
            smoothing: default_smoothing(),
            alphas: default_alphas(),
            generated_samples: default_generated(),
            sample_head: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { seeds: default_seeds() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates a config file. Relative paths inside it are
    /// resolved against the file's directory when used.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Core(Error::Config(e.to_string())))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_relative() {
            self.base_dir.join(path)
        } else {
            path.to_path_buf()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg_err = |m: String| CliError::Core(Error::Config(m));
        let d = &self.dataset;
        if d.split.iter().any(|r| !(*r > 0.0)) || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(cfg_err(format!("dataset.split must be positive and sum to 1, got {:?}", d.split)));
        }
        match &d.source {
            SourceSection::Mixture {
                n_samples,
                mixture,
            } => {
                mixture.validate()?;
                if *n_samples < 10 {
                    return Err(cfg_err(format!("dataset.source.n_samples must be at least 10, got {n_samples}")));
                }
            }
            SourceSection::Csv { .. } => {
                if let LabelRule::Quantile {
                    by_mixture_score: true, ..
                } = d.label
                {
                    return Err(cfg_err("by_mixture_score needs a mixture source".into()));
                }
            }
        }
        match d.label {
            LabelRule::KappaSigma { kappa, .. } if !(kappa > 0.0 && kappa.is_finite()) => {
                return Err(cfg_err(format!("dataset.label.kappa must be positive, got {kappa}")));
            }
            LabelRule::Quantile { level, .. } if !(level > 0.0 && level < 1.0) => {
                return Err(cfg_err(format!("dataset.label.level must be in (0, 1), got {level}")));
            }
            _ => {}
        }

        let m = &self.model;
        // the data dimension is only known later; 1 is enough for shape checks here
        m.model_config(1).validate()?;
        if let Some(n) = m.n_qubits {
            if m.mode == Mode::Quantum {
                let spec = AnsatzSpec::for_latent(m.latent_dim, m.depth, m.encoding)?;
                if spec.n_qubits != n {
                    return Err(cfg_err(format!(
                        "model.n_qubits = {n} but {:?} encoding of latent_dim {} needs {}",
                        m.encoding, m.latent_dim, spec.n_qubits
                    )));
                }
            }
        }
        if m.shots == Some(0) {
            return Err(cfg_err("model.shots must be at least 1".into()));
        }
        match (m.noise_kind(), &m.entropy_file) {
            (SourceKind::EntropyFile, None) => {
                return Err(cfg_err("model.noise_source = \"entropy_file\" needs model.entropy_file".into()))
            }
            (SourceKind::EntropyFile, Some(_)) | (_, None) => {}
            (_, Some(_)) => {
                return Err(cfg_err("model.entropy_file is set but noise_source is not entropy_file".into()))
            }
        }
        self.loss.validate()?;
        self.training.validate()?;
        self.evaluation_options().validate()?;
        if self.compare.seeds.is_empty() {
            return Err(cfg_err("compare.seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn evaluation_options(&self) -> EvaluationOptions {
        EvaluationOptions {
            bins: self.metrics.bins,
            smoothing: self.metrics.smoothing,
            alphas: self.metrics.alphas.clone(),
            generated_samples: self.metrics.generated_samples,
            shots: self.model.shots,
            sample_head: self.metrics.sample_head,
        }
    }

    /// SHA-256 of the canonical JSON form, output section excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
seed = 1
label = { rule = "kappa_sigma", kappa = 2.5 }
source = { kind = "mixture", n_samples = 100 }

[model]
mode = "quantum"
latent_dim = 2

[training]
epochs = 1
seed = 0
"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("latent_dim = 2", "latent_dim = 2\nlambda_2 = 3");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn invalid_weights_rejected() {
        let text = MINIMAL.replace(
            "n_samples = 100 }",
            "n_samples = 100, mixture = { weights = [0.2, 0.7], means = [0, 1], variances = [1, 1] } }",
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output.dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.training.seed = 9;
        assert_ne!(a.hash(), b.hash());
    }
}
