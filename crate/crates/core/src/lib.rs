//! Hybrid quantum-classical generative modelling for rare events.
//!
//! A classical encoder maps data to a latent vector, quantum-seeded noise is
//! injected, a variational circuit on a dense statevector simulator reads the
//! latent out as per-qubit `⟨Z⟩` values, and a Gaussian decoder reconstructs
//! the input. Training minimizes a reconstruction NLL plus a tail-weighted
//! term over samples labeled rare.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod randomness;
pub mod sim;
pub mod train;
pub mod vqc;

pub use checkpoint::{sha256_hex, Checkpoint};
pub use data::{LabelRule, LabeledDataset, MixtureSpec, Split, TailDirection, ThresholdMeta};
pub use error::{Error, Result};
pub use metrics::{MetricsReport, Predictor, Recall, TailRegion};
pub use model::{GenerateOptions, LossConfig, LossValues, Mode, ModelConfig, QegmModel};
pub use neural::{AdamState, GaussianHead, MlpNetwork};
pub use randomness::{Entropy, RandomnessSource, SourceKind};
pub use sim::{GateOp, Statevector};
pub use train::{train, TrainConfig, TrainReport};
pub use vqc::{AnsatzSpec, Encoding, QuantumLayer, QuantumParams};
