//! Randomness sources and latent noise injection.
//!
//! Three interchangeable sources produce uniform doubles in `[0, 1)`:
//!
//! * [`RandomnessSource::SeededPrng`]: a ChaCha8 stream keyed by a 64-bit seed.
//! * [`RandomnessSource::SimulatedQrng`]: bits obtained by Born-rule sampling of
//!   an 8-qubit register prepared with `R_y(π/2)` on every qubit. The sampling
//!   itself is driven by a seeded PRNG, so this source carries no physical
//!   entropy guarantee. It only mimics how a hardware QRNG produces bits.
//! * [`RandomnessSource::EntropyFile`]: raw bytes read from disk, e.g. bytes
//!   collected from a hardware device. Each uniform consumes 8 bytes read as a
//!   little-endian `u64`; the top 53 bits become the mantissa:
//!   `u = (word >> 11) * 2^-53`. Running out of bytes is an error.
//!
//! Latent noise follows `ε ~ N(0, σ² r)` with a single modulating draw `r`
//! per call to [`draw_noise`].

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{GateOp, Statevector};

const MANTISSA_SCALE: f64 = 1.0 / (1u64 << 53) as f64;
const QRNG_REGISTER_QUBITS: usize = 8;

/// Anything that yields uniform doubles in `[0, 1)`.
pub trait Entropy {
    fn uniform(&mut self) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    SeededPrng,
    SimulatedQrng,
    EntropyFile,
}

/// Seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct Prng(ChaCha8Rng);

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Entropy for Prng {
    fn uniform(&mut self) -> Result<f64> {
        Ok(self.0.random::<f64>())
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedQrng {
    register: Statevector,
    sampler: Prng,
}

impl SimulatedQrng {
    pub fn new(seed: u64) -> Self {
        let mut register = Statevector::zero(QRNG_REGISTER_QUBITS).expect("register size is valid");
        for q in 0..QRNG_REGISTER_QUBITS {
            register.apply(&GateOp::ry(q, FRAC_PI_2)).expect("valid gate");
        }
        SimulatedQrng {
            register,
            sampler: Prng::new(seed),
        }
    }
}

impl Entropy for SimulatedQrng {
    fn uniform(&mut self) -> Result<f64> {
        // 7 shots of 8 bits give 56 bits; keep the top 53.
        let shots = self.register.sample_bitstrings(7, &mut self.sampler)?;
        let word = shots
            .iter()
            .fold(0u64, |acc, b| (acc << QRNG_REGISTER_QUBITS) | b.index as u64);
        Ok((word >> 3) as f64 * MANTISSA_SCALE)
    }
}

#[derive(Debug, Clone)]
pub struct EntropyFile {
    path: PathBuf,
    bytes: Vec<u8>,
    pos: usize,
}

impl EntropyFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let bytes = std::fs::read(&path)?;
        Ok(EntropyFile {
            path,
            bytes,
            pos: 0,
        })
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        EntropyFile {
            path: PathBuf::from("<memory>"),
            bytes,
            pos: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

impl Entropy for EntropyFile {
    fn uniform(&mut self) -> Result<f64> {
        if self.remaining() < 8 {
            return Err(Error::EntropyExhausted {
                path: self.path.clone(),
                needed: 8,
                available: self.remaining(),
            });
        }
        let mut word = [0u8; 8];
        word.copy_from_slice(&self.bytes[self.pos..self.pos + 8]);
        self.pos += 8;
        Ok((u64::from_le_bytes(word) >> 11) as f64 * MANTISSA_SCALE)
    }
}

#[derive(Debug, Clone)]
pub enum RandomnessSource {
    SeededPrng { seed: u64, stream: Prng },
    SimulatedQrng { seed: u64, stream: SimulatedQrng },
    EntropyFile(EntropyFile),
}

impl RandomnessSource {
    pub fn seeded(seed: u64) -> Self {
        RandomnessSource::SeededPrng {
            seed,
            stream: Prng::new(seed),
        }
    }

    pub fn simulated_qrng(seed: u64) -> Self {
        RandomnessSource::SimulatedQrng {
            seed,
            stream: SimulatedQrng::new(seed),
        }
    }

    pub fn entropy_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(RandomnessSource::EntropyFile(EntropyFile::open(path)?))
    }

    pub fn new(kind: SourceKind, seed: u64, path: Option<&Path>) -> Result<Self> {
        match kind {
            SourceKind::SeededPrng => Ok(Self::seeded(seed)),
            SourceKind::SimulatedQrng => Ok(Self::simulated_qrng(seed)),
            SourceKind::EntropyFile => {
                let path = path.ok_or_else(|| {
                    Error::Config("entropy_file source requires a file path".into())
                })?;
                Self::entropy_file(path)
            }
        }
    }

    pub fn kind(&self) -> SourceKind {
        match self {
            RandomnessSource::SeededPrng { .. } => SourceKind::SeededPrng,
            RandomnessSource::SimulatedQrng { .. } => SourceKind::SimulatedQrng,
            RandomnessSource::EntropyFile(_) => SourceKind::EntropyFile,
        }
    }

    /// Independent source for worker or stream `stream`, derived from the seed.
    ///
    /// File-backed sources cannot be split.
    pub fn derive(&self, stream: u64) -> Result<Self> {
        match self {
            RandomnessSource::SeededPrng { seed, .. } => Ok(Self::seeded(derive_seed(*seed, stream))),
            RandomnessSource::SimulatedQrng { seed, .. } => {
                Ok(Self::simulated_qrng(derive_seed(*seed, stream)))
            }
            RandomnessSource::EntropyFile(_) => Err(Error::Config(
                "an entropy file stream cannot be split into derived streams".into(),
            )),
        }
    }
}

impl Entropy for RandomnessSource {
    fn uniform(&mut self) -> Result<f64> {
        match self {
            RandomnessSource::SeededPrng { stream, .. } => stream.uniform(),
            RandomnessSource::SimulatedQrng { stream, .. } => stream.uniform(),
            RandomnessSource::EntropyFile(f) => f.uniform(),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a base seed with a stream id.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// One standard normal draw via Box-Muller (the sine branch is discarded).
pub fn standard_normal<E: Entropy + ?Sized>(src: &mut E) -> Result<f64> {
    let u1 = 1.0 - src.uniform()?;
    let u2 = src.uniform()?;
    Ok((-2.0 * u1.ln()).sqrt() * (TAU * u2).cos())
}

/// Additive latent perturbation `ε ~ N(0, σ² r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub epsilon: Vec<f64>,
    pub r_value: f64,
    pub sigma: f64,
}

impl NoiseDraw {
    pub fn zeros(dim: usize) -> Self {
        NoiseDraw {
            epsilon: vec![0.0; dim],
            r_value: 0.0,
            sigma: 0.0,
        }
    }
}

/// Draws `r` once, then `dim` Gaussians with standard deviation `σ·√r`.
///
/// Randomness is consumed identically whatever `sigma` is, so runs that differ
/// only in `sigma` share the same stream positions.
pub fn draw_noise<E: Entropy + ?Sized>(src: &mut E, dim: usize, sigma: f64) -> Result<NoiseDraw> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Validation(format!(
            "noise sigma must be finite and >= 0, got {sigma}"
        )));
    }
    let r_value = src.uniform()?;
    let std = sigma * r_value.sqrt();
    let epsilon = (0..dim)
        .map(|_| {
            let g = standard_normal(src)?;
            Ok(if std == 0.0 { 0.0 } else { std * g })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseDraw {
        epsilon,
        r_value,
        sigma,
    })
}
