//! Versioned JSON checkpoints of a trained model and its optimizer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{LatentMap, ModelConfig, QegmModel, QuantumPart};
use crate::neural::{AdamState, MlpNetwork};
use crate::randomness::Prng;
use crate::vqc::{AnsatzSpec, QuantumLayer, QuantumParams};

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub encoder: MlpNetwork,
    pub decoder: MlpNetwork,
    pub quantum_angles: Option<Vec<f64>>,
    pub optimizer: AdamState,
    pub config_hash: String,
    pub dataset_manifest_hash: String,
    pub seed: u64,
    pub best_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn capture(
        model: &QegmModel,
        model_config: &ModelConfig,
        optimizer: &AdamState,
        config_hash: &str,
        dataset_manifest_hash: &str,
        seed: u64,
        best_epoch: Option<usize>,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT,
            model_config: model_config.clone(),
            encoder: model.encoder.clone(),
            decoder: model.decoder.clone(),
            quantum_angles: model.quantum_params().map(|p| p.angles().to_vec()),
            optimizer: optimizer.clone(),
            config_hash: config_hash.to_owned(),
            dataset_manifest_hash: dataset_manifest_hash.to_owned(),
            seed,
            best_epoch,
        }
    }

    /// Rebuilds the model and optimizer, checking every shape against the
    /// stored configuration.
    pub fn restore(&self) -> Result<(QegmModel, AdamState)> {
        if self.format_version != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!(
                "unsupported checkpoint format {} (expected {CHECKPOINT_FORMAT})",
                self.format_version
            )));
        }
        let cfg = &self.model_config;
        // shapes only; the random values are discarded
        let template = QegmModel::new(cfg, &mut Prng::new(0))?;
        let rebuild = |net: &MlpNetwork, want: &MlpNetwork, what: &str| -> Result<MlpNetwork> {
            if net.dims() != want.dims() {
                return Err(Error::shape(what, format!("{:?}", want.dims()), format!("{:?}", net.dims())));
            }
            MlpNetwork::from_parts(net.dims().to_vec(), net.weights().to_vec(), net.biases().to_vec())
        };
        let encoder = rebuild(&self.encoder, &template.encoder, "encoder dims")?;
        let decoder = rebuild(&self.decoder, &template.decoder, "decoder dims")?;
        let latent_map = match (&template.latent_map, &self.quantum_angles) {
            (LatentMap::Quantum(part), Some(angles)) => {
                let spec: AnsatzSpec = *part.layer.spec();
                LatentMap::Quantum(QuantumPart {
                    params: QuantumParams::from_angles(&spec, angles.clone())?,
                    layer: QuantumLayer::new(spec)?,
                })
            }
            (LatentMap::Identity, None) => LatentMap::Identity,
            (LatentMap::Quantum(_), None) => {
                return Err(Error::Validation("quantum checkpoint is missing its angles".into()))
            }
            (LatentMap::Identity, Some(_)) => {
                return Err(Error::Validation("baseline checkpoint carries quantum angles".into()))
            }
        };
        let model = QegmModel {
            encoder,
            decoder,
            latent_map,
            noise_sigma: template.noise_sigma,
            quantum_input_grad: template.quantum_input_grad,
        };
        if self.optimizer.sizes() != model.parameter_sizes() {
            return Err(Error::shape(
                "optimizer state",
                format!("{:?}", model.parameter_sizes()),
                format!("{:?}", self.optimizer.sizes()),
            ));
        }
        Ok((model, self.optimizer.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
