//! Hybrid training loop: backpropagation for the networks, parameter-shift
//! gradients for the quantum angles, one joint Adam step per batch.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{LossConfig, LossValues, QegmModel};
use crate::neural::AdamState;
use crate::randomness::{derive_seed, draw_noise, Entropy, NoiseDraw, Prng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Stop after this many epochs without a validation improvement.
    #[serde(default = "default_patience")]
    pub patience: usize,
    pub seed: u64,
}

fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    20
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: default_batch(),
            learning_rate: default_lr(),
            patience: default_patience(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossValues,
    pub val: LossValues,
    /// Circuit evaluations spent on training batches this epoch (validation excluded).
    pub train_circuit_evaluations: u64,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// All circuit evaluations, training and validation.
    pub circuit_evaluations: u64,
    pub circuit_evaluations_per_sample: u64,
    /// Kept out of the serialized report so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

/// Aggregate losses of `model` on `indices` with noise disabled.
pub fn evaluate_loss(
    model: &QegmModel,
    dataset: &LabeledDataset,
    indices: &[usize],
    cfg: &LossConfig,
) -> Result<LossValues> {
    let mut acc = LossAccumulator::default();
    for &i in indices {
        let x = &dataset.samples[i];
        acc.add(model.reconstruct(x)?.nll(x), dataset.rare_mask[i]);
    }
    Ok(acc.finish(cfg))
}

#[derive(Default)]
struct LossAccumulator {
    sum: f64,
    n: usize,
    sum_rare: f64,
    n_rare: usize,
}

impl LossAccumulator {
    fn add(&mut self, nll: f64, rare: bool) {
        self.sum += nll;
        self.n += 1;
        if rare {
            self.sum_rare += nll;
            self.n_rare += 1;
        }
    }

    fn finish(&self, cfg: &LossConfig) -> LossValues {
        let rec = if self.n > 0 { self.sum / self.n as f64 } else { 0.0 };
        let tail = if self.n_rare > 0 {
            self.sum_rare / self.n_rare as f64
        } else {
            0.0
        };
        LossValues::from_parts(rec, tail, cfg)
    }
}

/// Trains `model` in place.
///
/// Epoch training losses aggregate the per-sample NLLs seen during the epoch
/// (before each batch's update); validation losses are noise-free. On early
/// stop or completion the parameters from the best validation epoch are kept.
/// A non-finite loss aborts with [`Error::NonFiniteLoss`] and leaves the
/// model at its last good parameters.
pub fn train<E: Entropy + ?Sized>(
    model: &mut QegmModel,
    adam: &mut AdamState,
    dataset: &LabeledDataset,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    noise_src: &mut E,
) -> Result<TrainReport> {
    cfg.validate()?;
    loss_cfg.validate()?;
    let split = dataset.split()?;
    if dataset.samples.len() != dataset.len() {
        return Err(Error::State("dataset must be standardized before training".into()));
    }
    if dataset.dim() != model.data_dim() {
        return Err(Error::shape("dataset dimension", model.data_dim(), dataset.dim()));
    }
    if split.train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    if adam.sizes() != model.parameter_sizes() {
        return Err(Error::shape(
            "optimizer state",
            format!("{:?}", model.parameter_sizes()),
            format!("{:?}", adam.sizes()),
        ));
    }
    adam.learning_rate = cfg.learning_rate;

    let started = Instant::now();
    let mut shuffler = Prng::new(derive_seed(cfg.seed, 0x5348_5546));
    let mut total_evaluations = 0u64;
    let mut order = split.train.clone();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, QegmModel, AdamState)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = ((shuffler.uniform()? * (i + 1) as f64) as usize).min(i);
            order.swap(i, j);
        }
        let evals_before = model.circuit_evaluations();
        let mut acc = LossAccumulator::default();
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| dataset.samples[i].as_slice()).collect();
            let rare: Vec<bool> = chunk.iter().map(|&i| dataset.rare_mask[i]).collect();
            let noise = chunk
                .iter()
                .map(|_| draw_noise(noise_src, model.latent_dim(), model.noise_sigma))
                .collect::<Result<Vec<NoiseDraw>>>()?;
            let (loss, grads) = model.loss_and_grads(&xs, &rare, &noise, loss_cfg)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            acc.sum += loss.rec * xs.len() as f64;
            acc.n += xs.len();
            let n_rare = rare.iter().filter(|&&r| r).count();
            acc.sum_rare += loss.tail * n_rare as f64;
            acc.n_rare += n_rare;

            let snapshot = (model.clone(), adam.clone());
            let step = {
                let mut params = model.parameters_mut();
                adam.step(&mut params, &grads.slices())
            };
            if let Err(e) = step {
                *model = snapshot.0;
                *adam = snapshot.1;
                return match e {
                    Error::Numeric(_) => Err(Error::NonFiniteLoss { epoch, batch: b }),
                    other => Err(other),
                };
            }
            batches += 1;
        }
        let train_circuit_evaluations = model.circuit_evaluations() - evals_before;
        let val = evaluate_loss(model, dataset, &split.val, loss_cfg)?;
        total_evaluations += model.circuit_evaluations() - evals_before;
        if !val.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: batches });
        }
        records.push(EpochRecord {
            epoch,
            train: acc.finish(loss_cfg),
            val,
            train_circuit_evaluations,
            batches,
        });
        let improved = best.as_ref().is_none_or(|(v, ..)| val.hybrid < *v);
        if improved {
            best = Some((val.hybrid, epoch, model.clone(), adam.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let best_epoch = best.as_ref().map(|b| b.1);
    if let Some((_, _, m, a)) = best {
        *model = m;
        *adam = a;
    }
    Ok(TrainReport {
        seed: cfg.seed,
        epochs: records,
        best_epoch,
        stopped_early,
        circuit_evaluations: total_evaluations,
        circuit_evaluations_per_sample: model.circuit_evaluations_per_sample(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        checkpoint: None,
    })
}
