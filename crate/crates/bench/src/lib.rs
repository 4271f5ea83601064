//! Fixtures shared by the criterion benchmarks.

use qegm_core::data::{LabelRule, LabeledDataset, MixtureSpec, TailDirection};
use qegm_core::model::{Mode, ModelConfig, QegmModel};
use qegm_core::randomness::RandomnessSource;
use qegm_core::sim::{GateOp, Statevector};

/// Benchmark-sized model: one input column, latent 4, depth 3, hidden [32, 32].
pub fn benchmark_model(mode: Mode) -> QegmModel {
    let mut cfg = ModelConfig::new(1, 4, mode);
    cfg.hidden = vec![32, 32];
    cfg.depth = 3;
    cfg.noise_sigma = 0.5;
    QegmModel::new(&cfg, &mut RandomnessSource::seeded(0)).expect("valid benchmark model")
}

/// Labeled, split and standardized mixture sample of size `n`.
pub fn mixture_dataset(n: usize) -> LabeledDataset {
    let spec = MixtureSpec::benchmark();
    let series = spec.sample(n, &mut RandomnessSource::seeded(1)).expect("valid mixture");
    let mut ds = LabeledDataset::from_series("x", series);
    ds.label(
        &LabelRule::Quantile {
            level: 0.05,
            direction: TailDirection::Upper,
            by_mixture_score: true,
        },
        Some(&spec),
    )
    .expect("labels");
    ds.stratify([0.7, 0.15, 0.15], &mut RandomnessSource::seeded(2)).expect("split");
    ds.standardize().expect("scaler");
    ds
}

/// Ry on every qubit followed by a CNOT chain, as one layer of gates.
pub fn layer_gates(n_qubits: usize, angle: f64) -> Vec<GateOp> {
    let mut gates: Vec<GateOp> = (0..n_qubits).map(|q| GateOp::ry(q, angle)).collect();
    gates.extend((0..n_qubits.saturating_sub(1)).map(|q| GateOp::cnot(q, q + 1)));
    gates
}

pub fn zero_state(n_qubits: usize) -> Statevector {
    Statevector::zero(n_qubits).expect("supported qubit count")
}
