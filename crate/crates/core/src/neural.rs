//! Fully connected networks with hand-written reverse mode and an Adam optimizer.
//!
//! Hidden layers use `tanh`, the output layer is linear. Weights of layer `j`
//! are stored row-major with shape `(dims[j+1], dims[j])`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::{Entropy, NoiseDraw};

/// Log-variance outputs are clamped to this range.
pub const LOG_VARIANCE_BOUND: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Activations recorded by a forward pass: `layers[0]` is the input and
/// `layers[k]` the output of layer `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Gradients shaped like an [`MlpNetwork`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        MlpGrads {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(other.biases.iter()))
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Slices in the same order as [`MlpNetwork::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

impl MlpNetwork {
    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!(
                "network needs at least two non-zero layer sizes, got {dims:?}"
            )));
        }
        Ok(())
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(MlpNetwork {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<E: Entropy + ?Sized>(dims: &[usize], src: &mut E) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for (j, w) in net.weights.iter_mut().enumerate() {
            let limit = (6.0 / (dims[j] + dims[j + 1]) as f64).sqrt();
            for v in w.iter_mut() {
                *v = limit * (2.0 * src.uniform()? - 1.0);
            }
        }
        Ok(net)
    }

    pub fn from_parts(dims: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        Self::check_dims(&dims)?;
        let n_layers = dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::shape("layer count", n_layers, weights.len().min(biases.len())));
        }
        for j in 0..n_layers {
            if weights[j].len() != dims[j] * dims[j + 1] {
                return Err(Error::shape(
                    format!("weights[{j}]"),
                    format!("{}x{}", dims[j + 1], dims[j]),
                    format!("{} entries", weights[j].len()),
                ));
            }
            if biases[j].len() != dims[j + 1] {
                return Err(Error::shape(format!("biases[{j}]"), dims[j + 1], biases[j].len()));
            }
        }
        let net = MlpNetwork {
            dims,
            weights,
            biases,
        };
        net.check_finite()?;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Mutable parameter slices ordered `w0, b0, w1, b1, …`.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    /// Parameter tensor sizes in [`MlpNetwork::parameters_mut`] order.
    pub fn parameter_sizes(&self) -> Vec<usize> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.len(), b.len()])
            .collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (j, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite parameter in layer {j}")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), x.len()));
        }
        let n_layers = self.weights.len();
        let mut layers = Vec::with_capacity(n_layers + 1);
        layers.push(x.to_vec());
        for j in 0..n_layers {
            let input = &layers[j];
            let (fan_in, fan_out) = (self.dims[j], self.dims[j + 1]);
            let w = &self.weights[j];
            let mut out = self.biases[j].clone();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &w[r * fan_in..(r + 1) * fan_in];
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if j + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite activation in layer {j}")));
            }
            debug_assert_eq!(out.len(), fan_out);
            layers.push(out);
        }
        Ok(Trace { layers })
    }

    /// Reverse pass: parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        if trace.is_empty() {
            return Err(Error::State("backward called without a recorded forward pass".into()));
        }
        if trace.layers.len() != self.dims.len()
            || trace.layers.iter().zip(&self.dims).any(|(a, &d)| a.len() != d)
        {
            return Err(Error::State("trace was recorded by a network of different shape".into()));
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::shape("output gradient", self.output_dim(), grad_output.len()));
        }
        let n_layers = self.weights.len();
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = grad_output.to_vec();
        for j in (0..n_layers).rev() {
            if j + 1 < n_layers {
                for (d, a) in delta.iter_mut().zip(&trace.layers[j + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let fan_in = self.dims[j];
            let input = &trace.layers[j];
            let gw = &mut grads.weights[j];
            for (r, d) in delta.iter().enumerate() {
                for (c, a) in input.iter().enumerate() {
                    gw[r * fan_in + c] = d * a;
                }
            }
            grads.biases[j].copy_from_slice(&delta);
            let w = &self.weights[j];
            let mut prev = vec![0.0; fan_in];
            for (r, d) in delta.iter().enumerate() {
                for (c, p) in prev.iter_mut().enumerate() {
                    *p += w[r * fan_in + c] * d;
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// Encoder pass `z = f(x) + ε`.
    pub fn encode(&self, x: &[f64], noise: &NoiseDraw) -> Result<(Vec<f64>, Trace)> {
        let trace = self.forward(x)?;
        if noise.epsilon.len() != self.output_dim() {
            return Err(Error::shape("latent noise", self.output_dim(), noise.epsilon.len()));
        }
        let z = trace.output().iter().zip(&noise.epsilon).map(|(a, e)| a + e).collect();
        Ok((z, trace))
    }

    /// Decoder pass; the output is split into mean and log-variance heads.
    pub fn decode(&self, latent: &[f64]) -> Result<(GaussianHead, Trace)> {
        if self.output_dim() % 2 != 0 {
            return Err(Error::Config(format!(
                "decoder output must hold mean and log-variance heads, got width {}",
                self.output_dim()
            )));
        }
        let trace = self.forward(latent)?;
        Ok((GaussianHead::from_raw(trace.output()), trace))
    }
}

/// Diagonal Gaussian predictive head.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl GaussianHead {
    /// Splits a raw decoder output `[mean | log-variance]`, clamping the latter.
    pub fn from_raw(raw: &[f64]) -> Self {
        let d = raw.len() / 2;
        GaussianHead {
            mean: raw[..d].to_vec(),
            log_variance: raw[d..]
                .iter()
                .map(|v| v.clamp(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    /// Negative log-likelihood of `x`, summed over dimensions.
    pub fn nll(&self, x: &[f64]) -> f64 {
        const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7;
        self.mean
            .iter()
            .zip(&self.log_variance)
            .zip(x)
            .map(|((m, lv), x)| HALF_LN_TAU + 0.5 * lv + 0.5 * (x - m).powi(2) * (-lv).exp())
            .sum()
    }

    /// Gradient of `weight · nll(x)` with respect to the raw decoder output.
    /// Clamped log-variance entries receive zero gradient.
    pub fn nll_grad_raw(&self, raw: &[f64], x: &[f64], weight: f64) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; 2 * d];
        for j in 0..d {
            let inv_var = (-self.log_variance[j]).exp();
            let r = x[j] - self.mean[j];
            g[j] = -weight * r * inv_var;
            let raw_lv = raw[d + j];
            if raw_lv > -LOG_VARIANCE_BOUND && raw_lv < LOG_VARIANCE_BOUND {
                g[d + j] = weight * (0.5 - 0.5 * r * r * inv_var);
            }
        }
        g
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(learning_rate: f64, sizes: &[usize]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.first_moment.iter().map(Vec::len).collect()
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "optimizer parameter groups",
                self.first_moment.len(),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            let n = self.first_moment[k].len();
            if p.len() != n || g.len() != n {
                return Err(Error::shape(format!("optimizer group {k}"), n, format!("{}/{}", p.len(), g.len())));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                if !p[i].is_finite() {
                    return Err(Error::Numeric(format!("parameter group {k} became non-finite")));
                }
            }
        }
        Ok(())
    }
}
