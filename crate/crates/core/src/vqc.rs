//! Variational quantum layer: latent encoding, hardware-efficient ansatz,
//! Pauli-Z readout and parameter-shift gradients.
//!
//! Each ansatz layer applies `R_y(θ_{l,i,y})` then `R_z(θ_{l,i,z})` to every
//! qubit, followed by the linear chain `CNOT(0,1), CNOT(1,2), …, CNOT(n-2,n-1)`.
//! A fused `R_y·R_z` pair counts as one rotation slot, so a layer has `n`
//! rotation slots and `n-1` entanglers while carrying `2n` angles.

use std::f64::consts::FRAC_PI_2;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::Entropy;
use crate::sim::{GateOp, Statevector, MAX_QUBITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// One qubit per latent component, `R_y(z_i)|0⟩`.
    FeatureMap,
    /// Latent vector used directly as amplitudes on `⌈log₂ d⌉` qubits.
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub depth: usize,
    pub encoding: Encoding,
}

/// Qubits needed to amplitude-encode a `d`-dimensional vector.
pub fn amplitude_qubits(d: usize) -> usize {
    if d <= 2 {
        1
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as usize
    }
}

impl AnsatzSpec {
    /// Spec sized for a latent of dimension `latent_dim`.
    pub fn for_latent(latent_dim: usize, depth: usize, encoding: Encoding) -> Result<Self> {
        let n_qubits = match encoding {
            Encoding::FeatureMap => latent_dim,
            Encoding::Amplitude => amplitude_qubits(latent_dim),
        };
        let spec = AnsatzSpec {
            n_qubits,
            depth,
            encoding,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {}",
                self.n_qubits
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("ansatz depth must be at least 1".into()));
        }
        Ok(())
    }

    /// Latent dimensions this spec can encode.
    pub fn accepts_latent(&self, d: usize) -> bool {
        match self.encoding {
            Encoding::FeatureMap => d == self.n_qubits,
            Encoding::Amplitude => d >= 1 && amplitude_qubits(d) == self.n_qubits,
        }
    }

    /// Number of trainable angles, `2·L·n`.
    pub fn n_params(&self) -> usize {
        2 * self.depth * self.n_qubits
    }

    /// `(rotation slots, entangling gates)` per forward pass.
    pub fn gate_counts(&self) -> (usize, usize) {
        (self.depth * self.n_qubits, self.depth * (self.n_qubits - 1))
    }
}

/// Angle slot within a fused rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Y = 0,
    Z = 1,
}

/// Trainable angles laid out as `[layer][qubit][slot]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumParams {
    depth: usize,
    n_qubits: usize,
    angles: Vec<f64>,
}

impl QuantumParams {
    pub fn zeros(spec: &AnsatzSpec) -> Self {
        QuantumParams {
            depth: spec.depth,
            n_qubits: spec.n_qubits,
            angles: vec![0.0; spec.n_params()],
        }
    }

    /// Angles drawn uniformly from `[-scale, scale]`.
    pub fn random<E: Entropy + ?Sized>(spec: &AnsatzSpec, scale: f64, src: &mut E) -> Result<Self> {
        let angles = (0..spec.n_params())
            .map(|_| Ok(scale * (2.0 * src.uniform()? - 1.0)))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantumParams {
            depth: spec.depth,
            n_qubits: spec.n_qubits,
            angles,
        })
    }

    pub fn from_angles(spec: &AnsatzSpec, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != spec.n_params() {
            return Err(Error::shape("quantum parameter count", spec.n_params(), angles.len()));
        }
        if let Some(bad) = angles.iter().find(|a| !a.is_finite()) {
            return Err(Error::Validation(format!("quantum angle is not finite: {bad}")));
        }
        Ok(QuantumParams {
            depth: spec.depth,
            n_qubits: spec.n_qubits,
            angles,
        })
    }

    pub fn index(&self, layer: usize, qubit: usize, slot: Slot) -> usize {
        (layer * self.n_qubits + qubit) * 2 + slot as usize
    }

    pub fn get(&self, layer: usize, qubit: usize, slot: Slot) -> f64 {
        self.angles[self.index(layer, qubit, slot)]
    }

    pub fn set(&mut self, layer: usize, qubit: usize, slot: Slot, value: f64) {
        let i = self.index(layer, qubit, slot);
        self.angles[i] = value;
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.depth, self.n_qubits, 2)
    }

    fn check(&self, spec: &AnsatzSpec) -> Result<()> {
        if self.depth != spec.depth || self.n_qubits != spec.n_qubits {
            return Err(Error::shape(
                "quantum parameters (L, n, 2)",
                format!("({}, {}, 2)", spec.depth, spec.n_qubits),
                format!("({}, {}, 2)", self.depth, self.n_qubits),
            ));
        }
        Ok(())
    }
}

/// Per-qubit `⟨Z⟩` readout of the variational layer; every entry lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumLatent(pub Vec<f64>);

/// `⊗_i R_y(z_i)|0⟩`.
pub fn encode_feature_map(z: &[f64]) -> Result<Statevector> {
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("latent component is not finite: {bad}")));
    }
    let mut state = Statevector::zero(z.len())?;
    for (q, &angle) in z.iter().enumerate() {
        state.apply(&GateOp::ry(q, angle))?;
    }
    Ok(state)
}

/// `z` zero-padded to `2^⌈log₂ d⌉` entries and L2-normalized.
pub fn encode_amplitude(z: &[f64]) -> Result<Statevector> {
    if z.is_empty() {
        return Err(Error::shape("latent vector", "at least one component", 0));
    }
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::Validation("latent vector has non-finite components".into()));
    }
    if norm == 0.0 {
        return Err(Error::Degenerate(
            "cannot amplitude-encode an all-zero latent vector".into(),
        ));
    }
    let len = 1usize << amplitude_qubits(z.len());
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); len];
    for (a, &v) in amplitudes.iter_mut().zip(z) {
        *a = Complex64::new(v / norm, 0.0);
    }
    Statevector::from_amplitudes(amplitudes)
}

/// Applies every ansatz layer to `state` in place.
pub fn apply_ansatz(state: &mut Statevector, params: &QuantumParams) -> Result<()> {
    if state.n_qubits() != params.n_qubits {
        return Err(Error::shape("ansatz width", params.n_qubits, state.n_qubits()));
    }
    let n = params.n_qubits;
    for l in 0..params.depth {
        for q in 0..n {
            state.apply(&GateOp::ry(q, params.get(l, q, Slot::Y)))?;
            state.apply(&GateOp::rz(q, params.get(l, q, Slot::Z)))?;
        }
        for q in 0..n.saturating_sub(1) {
            state.apply(&GateOp::cnot(q, q + 1))?;
        }
    }
    Ok(())
}

/// The variational layer together with a running count of circuit evaluations.
#[derive(Debug)]
pub struct QuantumLayer {
    spec: AnsatzSpec,
    evaluations: AtomicU64,
}

impl Clone for QuantumLayer {
    fn clone(&self) -> Self {
        QuantumLayer {
            spec: self.spec,
            evaluations: AtomicU64::new(self.evaluations()),
        }
    }
}

impl QuantumLayer {
    pub fn new(spec: AnsatzSpec) -> Result<Self> {
        spec.validate()?;
        Ok(QuantumLayer {
            spec,
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    /// Circuit evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    pub fn encode(&self, z: &[f64]) -> Result<Statevector> {
        if !self.spec.accepts_latent(z.len()) {
            return Err(Error::shape(
                format!("latent dimension for {:?} encoding on {} qubits", self.spec.encoding, self.spec.n_qubits),
                self.spec.n_qubits,
                z.len(),
            ));
        }
        match self.spec.encoding {
            Encoding::FeatureMap => encode_feature_map(z),
            Encoding::Amplitude => encode_amplitude(z),
        }
    }

    /// Encode then run the ansatz; one circuit evaluation.
    pub fn state(&self, z: &[f64], params: &QuantumParams) -> Result<Statevector> {
        params.check(&self.spec)?;
        let mut state = self.encode(z)?;
        apply_ansatz(&mut state, params)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        Ok(state)
    }

    /// Analytic `(⟨Z_1⟩, …, ⟨Z_n⟩)` of the layer output.
    pub fn forward(&self, z: &[f64], params: &QuantumParams) -> Result<QuantumLatent> {
        Ok(QuantumLatent(self.state(z, params)?.expectation_z_all()))
    }

    /// Shot-estimated `⟨Z_i⟩ = mean(1 - 2·bit_i)` from `shots` measurements.
    pub fn forward_shots<E: Entropy + ?Sized>(
        &self,
        z: &[f64],
        params: &QuantumParams,
        shots: usize,
        src: &mut E,
    ) -> Result<QuantumLatent> {
        let state = self.state(z, params)?;
        let draws = state.sample_bitstrings(shots, src)?;
        let n = self.spec.n_qubits;
        let mut sums = vec![0.0; n];
        for b in &draws {
            for (q, s) in sums.iter_mut().enumerate() {
                *s += 1.0 - 2.0 * f64::from(b.bit(q));
            }
        }
        Ok(QuantumLatent(sums.into_iter().map(|s| s / shots as f64).collect()))
    }

    fn check_upstream(&self, upstream: &[f64]) -> Result<()> {
        if upstream.len() != self.spec.n_qubits {
            return Err(Error::shape("upstream gradient", self.spec.n_qubits, upstream.len()));
        }
        Ok(())
    }

    /// `Σ_i upstream_i · ½[⟨Z_i⟩(θ_k+π/2) − ⟨Z_i⟩(θ_k−π/2)]` for every angle `θ_k`.
    ///
    /// Exactly two circuit evaluations per angle.
    pub fn parameter_shift_grad(
        &self,
        z: &[f64],
        params: &QuantumParams,
        upstream: &[f64],
    ) -> Result<Vec<f64>> {
        params.check(&self.spec)?;
        self.check_upstream(upstream)?;
        let mut shifted = params.clone();
        let mut grad = vec![0.0; params.angles.len()];
        for (k, g) in grad.iter_mut().enumerate() {
            let base = params.angles[k];
            shifted.angles[k] = base + FRAC_PI_2;
            let plus = self.forward(z, &shifted)?;
            shifted.angles[k] = base - FRAC_PI_2;
            let minus = self.forward(z, &shifted)?;
            shifted.angles[k] = base;
            *g = upstream
                .iter()
                .zip(plus.0.iter().zip(&minus.0))
                .map(|(u, (p, m))| u * 0.5 * (p - m))
                .sum();
        }
        Ok(grad)
    }

    /// Gradient with respect to the latent input, by shifting the encoding
    /// angles. Only feature-map encoding makes the inputs rotation angles.
    pub fn input_shift_grad(
        &self,
        z: &[f64],
        params: &QuantumParams,
        upstream: &[f64],
    ) -> Result<Vec<f64>> {
        if self.spec.encoding != Encoding::FeatureMap {
            return Err(Error::Config(
                "input gradients through the quantum layer require feature-map encoding".into(),
            ));
        }
        self.check_upstream(upstream)?;
        let mut shifted = z.to_vec();
        let mut grad = vec![0.0; z.len()];
        for (k, g) in grad.iter_mut().enumerate() {
            shifted[k] = z[k] + FRAC_PI_2;
            let plus = self.forward(&shifted, params)?;
            shifted[k] = z[k] - FRAC_PI_2;
            let minus = self.forward(&shifted, params)?;
            shifted[k] = z[k];
            *g = upstream
                .iter()
                .zip(plus.0.iter().zip(&minus.0))
                .map(|(u, (p, m))| u * 0.5 * (p - m))
                .sum();
        }
        Ok(grad)
    }
}
