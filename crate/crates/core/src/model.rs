//! The hybrid generative model: encoder, noise injection, variational layer,
//! Gaussian decoder and the tail-weighted loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Predictor;
use crate::neural::{GaussianHead, MlpGrads, MlpNetwork, Trace};
use crate::randomness::{draw_noise, standard_normal, Entropy, NoiseDraw};
use crate::vqc::{AnsatzSpec, Encoding, QuantumLayer, QuantumParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Quantum,
    ClassicalBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub data_dim: usize,
    pub latent_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_encoding")]
    pub encoding: Encoding,
    pub mode: Mode,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// Propagate gradients into the encoder through the quantum layer.
    #[serde(default = "default_true")]
    pub quantum_input_grad: bool,
    #[serde(default = "default_angle_scale")]
    pub init_angle_scale: f64,
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

impl ModelConfig {
    pub fn new(data_dim: usize, latent_dim: usize, mode: Mode) -> Self {
        ModelConfig {
            data_dim,
            latent_dim,
            hidden: default_hidden(),
            depth: default_depth(),
            encoding: default_encoding(),
            mode,
            noise_sigma: default_sigma(),
            quantum_input_grad: true,
            init_angle_scale: default_angle_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.latent_dim == 0 {
            return Err(Error::Config("data and latent dimensions must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if self.mode == Mode::Quantum {
            AnsatzSpec::for_latent(self.latent_dim, self.depth, self.encoding)?;
            if self.quantum_input_grad && self.encoding != Encoding::FeatureMap {
                return Err(Error::Config(
                    "quantum_input_grad requires feature_map encoding; disable it for amplitude encoding".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QuantumPart {
    pub layer: QuantumLayer,
    pub params: QuantumParams,
}

/// Map from the noisy latent `z̃` to the decoder input.
#[derive(Debug, Clone)]
pub enum LatentMap {
    Quantum(QuantumPart),
    Identity,
}

#[derive(Debug, Clone)]
pub struct QegmModel {
    pub encoder: MlpNetwork,
    pub decoder: MlpNetwork,
    pub latent_map: LatentMap,
    pub noise_sigma: f64,
    pub quantum_input_grad: bool,
}

/// Everything a backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub noisy_latent: Vec<f64>,
    pub decoder_input: Vec<f64>,
    pub head: GaussianHead,
    encoder_trace: Trace,
    decoder_trace: Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_rec: f64,
    pub lambda_tail: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_rec: 1.0,
            lambda_tail: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.lambda_rec) || !ok(self.lambda_tail) || self.lambda_rec + self.lambda_tail <= 0.0 {
            return Err(Error::Config(format!(
                "loss weights must be >= 0 with a positive sum, got ({}, {})",
                self.lambda_rec, self.lambda_tail
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub hybrid: f64,
    pub rec: f64,
    pub tail: f64,
}

impl LossValues {
    pub fn from_parts(rec: f64, tail: f64, cfg: &LossConfig) -> Self {
        LossValues {
            hybrid: cfg.lambda_rec * rec + cfg.lambda_tail * tail,
            rec,
            tail,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.hybrid.is_finite() && self.rec.is_finite() && self.tail.is_finite()
    }
}

/// `L_rec` is the mean Gaussian NLL over the batch, `L_tail` the mean over
/// rare samples only (zero when the batch has none), and
/// `L_hybrid = λ₁·L_rec + λ₂·L_tail`.
pub fn hybrid_loss<R: AsRef<[f64]>>(
    batch: &[R],
    heads: &[GaussianHead],
    rare_mask: &[bool],
    cfg: &LossConfig,
) -> Result<LossValues> {
    if batch.is_empty() {
        return Err(Error::Validation("loss needs a non-empty batch".into()));
    }
    if heads.len() != batch.len() || rare_mask.len() != batch.len() {
        return Err(Error::shape(
            "loss inputs",
            batch.len(),
            format!("{} heads / {} mask entries", heads.len(), rare_mask.len()),
        ));
    }
    let mut rec = 0.0;
    let mut tail = 0.0;
    let mut n_rare = 0usize;
    for ((x, head), &rare) in batch.iter().zip(heads).zip(rare_mask) {
        let x = x.as_ref();
        if x.len() != head.dim() {
            return Err(Error::shape("reconstruction target", head.dim(), x.len()));
        }
        let nll = head.nll(x);
        rec += nll;
        if rare {
            tail += nll;
            n_rare += 1;
        }
    }
    rec /= batch.len() as f64;
    let tail = if n_rare > 0 { tail / n_rare as f64 } else { 0.0 };
    Ok(LossValues::from_parts(rec, tail, cfg))
}

/// Per-sample loss weight so that `Σ_i w_i·nll_i = L_hybrid`.
fn sample_weights(rare_mask: &[bool], cfg: &LossConfig) -> Vec<f64> {
    let n = rare_mask.len() as f64;
    let n_rare = rare_mask.iter().filter(|&&r| r).count();
    rare_mask
        .iter()
        .map(|&r| {
            let mut w = cfg.lambda_rec / n;
            if r {
                w += cfg.lambda_tail / n_rare as f64;
            }
            w
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
    pub quantum: Option<Vec<f64>>,
}

impl ModelGrads {
    fn zeros_like(model: &QegmModel) -> Self {
        ModelGrads {
            encoder: MlpGrads::zeros_like(&model.encoder),
            decoder: MlpGrads::zeros_like(&model.decoder),
            quantum: model.quantum_params().map(|p| vec![0.0; p.angles().len()]),
        }
    }

    fn add_assign(&mut self, other: &ModelGrads) {
        self.encoder.add_assign(&other.encoder);
        self.decoder.add_assign(&other.decoder);
        if let (Some(a), Some(b)) = (&mut self.quantum, &other.quantum) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// Slices in the order of [`QegmModel::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.slices();
        out.extend(self.decoder.slices());
        if let Some(q) = &self.quantum {
            out.push(q);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Options for [`QegmModel::generate`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateOptions {
    /// Estimate the quantum readout from this many shots instead of analytically.
    #[serde(default)]
    pub shots: Option<usize>,
    /// Draw from the Gaussian head instead of returning its mean.
    #[serde(default)]
    pub sample_head: bool,
}

impl QegmModel {
    /// Initializes encoder, then decoder, then quantum angles from `src`, so
    /// quantum and baseline models built from equal seeds share their networks.
    pub fn new<E: Entropy + ?Sized>(cfg: &ModelConfig, src: &mut E) -> Result<Self> {
        cfg.validate()?;
        let spec = match cfg.mode {
            Mode::Quantum => Some(AnsatzSpec::for_latent(cfg.latent_dim, cfg.depth, cfg.encoding)?),
            Mode::ClassicalBaseline => None,
        };
        let decoder_in = spec.map_or(cfg.latent_dim, |s| s.n_qubits);
        let mut enc_dims = vec![cfg.data_dim];
        enc_dims.extend(&cfg.hidden);
        enc_dims.push(cfg.latent_dim);
        let mut dec_dims = vec![decoder_in];
        dec_dims.extend(&cfg.hidden);
        dec_dims.push(2 * cfg.data_dim);
        let encoder = MlpNetwork::random(&enc_dims, src)?;
        let decoder = MlpNetwork::random(&dec_dims, src)?;
        let latent_map = match spec {
            Some(spec) => LatentMap::Quantum(QuantumPart {
                params: QuantumParams::random(&spec, cfg.init_angle_scale, src)?,
                layer: QuantumLayer::new(spec)?,
            }),
            None => LatentMap::Identity,
        };
        Ok(QegmModel {
            encoder,
            decoder,
            latent_map,
            noise_sigma: cfg.noise_sigma,
            quantum_input_grad: cfg.quantum_input_grad && cfg.mode == Mode::Quantum,
        })
    }

    pub fn mode(&self) -> Mode {
        match self.latent_map {
            LatentMap::Quantum(_) => Mode::Quantum,
            LatentMap::Identity => Mode::ClassicalBaseline,
        }
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn quantum(&self) -> Option<&QuantumPart> {
        match &self.latent_map {
            LatentMap::Quantum(q) => Some(q),
            LatentMap::Identity => None,
        }
    }

    pub fn quantum_params(&self) -> Option<&QuantumParams> {
        self.quantum().map(|q| &q.params)
    }

    /// Circuit evaluations performed by the quantum layer so far (0 for the baseline).
    pub fn circuit_evaluations(&self) -> u64 {
        self.quantum().map_or(0, |q| q.layer.evaluations())
    }

    /// Circuit evaluations spent per training sample:
    /// one forward pass, two per angle, and two per latent input when input
    /// gradients are enabled.
    pub fn circuit_evaluations_per_sample(&self) -> u64 {
        match self.quantum() {
            None => 0,
            Some(q) => {
                let mut n = 1 + 2 * q.params.angles().len() as u64;
                if self.quantum_input_grad {
                    n += 2 * self.latent_dim() as u64;
                }
                n
            }
        }
    }

    /// Trainable tensors: encoder, decoder, then quantum angles.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.parameters_mut();
        out.extend(self.decoder.parameters_mut());
        if let LatentMap::Quantum(q) = &mut self.latent_map {
            out.push(q.params.angles_mut());
        }
        out
    }

    pub fn parameter_sizes(&self) -> Vec<usize> {
        let mut out = self.encoder.parameter_sizes();
        out.extend(self.decoder.parameter_sizes());
        if let Some(p) = self.quantum_params() {
            out.push(p.angles().len());
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        self.encoder.check_finite()?;
        self.decoder.check_finite()?;
        if let Some(p) = self.quantum_params() {
            if p.angles().iter().any(|a| !a.is_finite()) {
                return Err(Error::Validation("quantum angles are not finite".into()));
            }
        }
        Ok(())
    }

    fn map_latent(&self, z: &[f64]) -> Result<Vec<f64>> {
        match &self.latent_map {
            LatentMap::Quantum(q) => Ok(q.layer.forward(z, &q.params)?.0),
            LatentMap::Identity => Ok(z.to_vec()),
        }
    }

    /// Forward pass with an explicit noise draw.
    pub fn forward_with_noise(&self, x: &[f64], noise: &NoiseDraw) -> Result<ForwardPass> {
        let (noisy_latent, encoder_trace) = self.encoder.encode(x, noise)?;
        let decoder_input = self.map_latent(&noisy_latent)?;
        let (head, decoder_trace) = self.decoder.decode(&decoder_input)?;
        Ok(ForwardPass {
            noisy_latent,
            decoder_input,
            head,
            encoder_trace,
            decoder_trace,
        })
    }

    /// Forward pass drawing `ε ~ N(0, σ² r)` from `src`.
    pub fn forward<E: Entropy + ?Sized>(&self, x: &[f64], src: &mut E) -> Result<ForwardPass> {
        let noise = draw_noise(src, self.latent_dim(), self.noise_sigma)?;
        self.forward_with_noise(x, &noise)
    }

    /// Noise-free prediction, used for reconstruction metrics.
    pub fn reconstruct(&self, x: &[f64]) -> Result<GaussianHead> {
        Ok(self.forward_with_noise(x, &NoiseDraw::zeros(self.latent_dim()))?.head)
    }

    fn sample_grads(&self, x: &[f64], noise: &NoiseDraw, weight: f64) -> Result<(f64, ModelGrads)> {
        let pass = self.forward_with_noise(x, noise)?;
        let nll = pass.head.nll(x);
        let g_raw = pass.head.nll_grad_raw(pass.decoder_trace.output(), x, weight);
        let (decoder, g_decoder_in) = self.decoder.backward(&pass.decoder_trace, &g_raw)?;
        let (g_latent, quantum) = match &self.latent_map {
            LatentMap::Identity => (g_decoder_in, None),
            LatentMap::Quantum(q) => {
                let g_theta = q.layer.parameter_shift_grad(&pass.noisy_latent, &q.params, &g_decoder_in)?;
                let g_z = if self.quantum_input_grad {
                    q.layer.input_shift_grad(&pass.noisy_latent, &q.params, &g_decoder_in)?
                } else {
                    vec![0.0; pass.noisy_latent.len()]
                };
                (g_z, Some(g_theta))
            }
        };
        let (encoder, _) = self.encoder.backward(&pass.encoder_trace, &g_latent)?;
        Ok((
            nll,
            ModelGrads {
                encoder,
                decoder,
                quantum,
            },
        ))
    }

    /// Hybrid loss of a batch and its gradient with respect to every parameter.
    ///
    /// Samples are processed in parallel; per-sample results are summed in
    /// batch order so the outcome does not depend on scheduling.
    pub fn loss_and_grads<R: AsRef<[f64]> + Sync>(
        &self,
        batch: &[R],
        rare_mask: &[bool],
        noise: &[NoiseDraw],
        cfg: &LossConfig,
    ) -> Result<(LossValues, ModelGrads)> {
        if batch.is_empty() {
            return Err(Error::Validation("loss needs a non-empty batch".into()));
        }
        if rare_mask.len() != batch.len() || noise.len() != batch.len() {
            return Err(Error::shape(
                "batch inputs",
                batch.len(),
                format!("{} mask entries / {} noise draws", rare_mask.len(), noise.len()),
            ));
        }
        let weights = sample_weights(rare_mask, cfg);
        let per_sample: Vec<(f64, ModelGrads)> = batch
            .par_iter()
            .zip(noise.par_iter())
            .zip(weights.par_iter())
            .map(|((x, n), &w)| self.sample_grads(x.as_ref(), n, w))
            .collect::<Result<_>>()?;
        let mut total = ModelGrads::zeros_like(self);
        let (mut rec, mut tail, mut n_rare) = (0.0, 0.0, 0usize);
        for ((nll, g), &rare) in per_sample.iter().zip(rare_mask) {
            total.add_assign(g);
            rec += nll;
            if rare {
                tail += nll;
                n_rare += 1;
            }
        }
        rec /= batch.len() as f64;
        let tail = if n_rare > 0 { tail / n_rare as f64 } else { 0.0 };
        Ok((LossValues::from_parts(rec, tail, cfg), total))
    }

    /// Draws `count` synthetic samples: latent prior `N(0, I)`, noise
    /// injection, the latent map, then the decoder.
    pub fn generate<E: Entropy + ?Sized>(
        &self,
        count: usize,
        src: &mut E,
        opts: &GenerateOptions,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_finite()?;
        if opts.shots == Some(0) {
            return Err(Error::Validation("shots must be at least 1".into()));
        }
        let d = self.latent_dim();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let prior = (0..d).map(|_| standard_normal(src)).collect::<Result<Vec<_>>>()?;
            let noise = draw_noise(src, d, self.noise_sigma)?;
            let z: Vec<f64> = prior.iter().zip(&noise.epsilon).map(|(a, b)| a + b).collect();
            let latent = match (&self.latent_map, opts.shots) {
                (LatentMap::Quantum(q), Some(shots)) => q.layer.forward_shots(&z, &q.params, shots, src)?.0,
                _ => self.map_latent(&z)?,
            };
            let (head, _) = self.decoder.decode(&latent)?;
            let row = if opts.sample_head {
                head.mean
                    .iter()
                    .zip(head.std_dev())
                    .map(|(m, s)| Ok(m + s * standard_normal(src)?))
                    .collect::<Result<Vec<_>>>()?
            } else {
                head.mean
            };
            out.push(row);
        }
        Ok(out)
    }
}

impl Predictor for QegmModel {
    fn predict(&self, x: &[f64]) -> Result<GaussianHead> {
        self.reconstruct(x)
    }
}
