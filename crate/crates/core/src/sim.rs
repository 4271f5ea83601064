//! Dense statevector simulator.
//!
//! Supports exactly the gates the variational layer needs: `R_y`, `R_z` and
//! `CNOT`. Qubit 0 is the most significant bit of a basis index, so the label
//! `|10⟩` on two qubits is basis index 2.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::Entropy;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    RotY,
    RotZ,
    Cnot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: f64,
}

impl GateOp {
    pub fn ry(target: usize, angle: f64) -> Self {
        GateOp {
            kind: GateKind::RotY,
            target,
            control: None,
            angle,
        }
    }

    pub fn rz(target: usize, angle: f64) -> Self {
        GateOp {
            kind: GateKind::RotZ,
            target,
            control: None,
            angle,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        GateOp {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            angle: 0.0,
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target >= n_qubits {
            return Err(Error::Index {
                what: "gate target",
                index: self.target,
                limit: n_qubits,
            });
        }
        match self.kind {
            GateKind::Cnot => {
                let control = self
                    .control
                    .ok_or_else(|| Error::Validation("CNOT requires a control qubit".into()))?;
                if control >= n_qubits {
                    return Err(Error::Index {
                        what: "gate control",
                        index: control,
                        limit: n_qubits,
                    });
                }
                if control == self.target {
                    return Err(Error::Validation(format!(
                        "CNOT control and target are both qubit {control}"
                    )));
                }
            }
            GateKind::RotY | GateKind::RotZ => {
                if !self.angle.is_finite() {
                    return Err(Error::Validation(format!(
                        "rotation angle must be finite, got {}",
                        self.angle
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A computational-basis measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bitstring {
    pub index: usize,
    pub n_qubits: usize,
}

impl Bitstring {
    /// Value of `qubit` in this outcome.
    pub fn bit(&self, qubit: usize) -> u8 {
        ((self.index >> (self.n_qubits - 1 - qubit)) & 1) as u8
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n_qubits {
            write!(f, "{}", self.bit(q))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

fn check_qubits(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Config(format!(
            "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    Ok(())
}

impl Statevector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Statevector {
            n_qubits,
            amplitudes,
        })
    }

    /// Builds a state from raw amplitudes, which must already be normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::shape("amplitude vector length", "a power of two >= 2", len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!(
                "amplitudes must be normalized, squared norm is {norm}"
            )));
        }
        Ok(Statevector {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Born-rule probabilities `|α_i|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    #[inline]
    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &GateOp) -> Result<()> {
        gate.validate(self.n_qubits)?;
        let t = self.mask(gate.target);
        match gate.kind {
            GateKind::RotY => {
                let (s, c) = (gate.angle * 0.5).sin_cos();
                for i in 0..self.amplitudes.len() {
                    if i & t == 0 {
                        let a0 = self.amplitudes[i];
                        let a1 = self.amplitudes[i | t];
                        self.amplitudes[i] = a0 * c - a1 * s;
                        self.amplitudes[i | t] = a0 * s + a1 * c;
                    }
                }
            }
            GateKind::RotZ => {
                let (s, c) = (gate.angle * 0.5).sin_cos();
                let phase0 = Complex64::new(c, -s);
                let phase1 = Complex64::new(c, s);
                for (i, a) in self.amplitudes.iter_mut().enumerate() {
                    *a *= if i & t == 0 { phase0 } else { phase1 };
                }
            }
            GateKind::Cnot => {
                let ctl = self.mask(gate.control.expect("validated"));
                for i in 0..self.amplitudes.len() {
                    if i & ctl != 0 && i & t == 0 {
                        self.amplitudes.swap(i, i | t);
                    }
                }
            }
        }
        Ok(())
    }

    /// Consuming variant of [`Statevector::apply`].
    pub fn applied(mut self, gate: &GateOp) -> Result<Self> {
        self.apply(gate)?;
        Ok(self)
    }

    /// `⟨Z⟩` on one qubit, computed exactly from the amplitudes.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::Index {
                what: "qubit",
                index: qubit,
                limit: self.n_qubits,
            });
        }
        let m = self.mask(qubit);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & m == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// `⟨Z_q⟩` for every qubit in one pass.
    pub fn expectation_z_all(&self) -> Vec<f64> {
        let n = self.n_qubits;
        let mut out = vec![0.0; n];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, e) in out.iter_mut().enumerate() {
                if (i >> (n - 1 - q)) & 1 == 0 {
                    *e += p;
                } else {
                    *e -= p;
                }
            }
        }
        out
    }

    /// Draws `shots` i.i.d. outcomes from the Born distribution.
    pub fn sample_bitstrings<E: Entropy + ?Sized>(
        &self,
        shots: usize,
        src: &mut E,
    ) -> Result<Vec<Bitstring>> {
        if shots == 0 {
            return Err(Error::Validation("shots must be at least 1".into()));
        }
        let mut cumulative = Vec::with_capacity(self.amplitudes.len());
        let mut acc = 0.0;
        for a in &self.amplitudes {
            acc += a.norm_sqr();
            cumulative.push(acc);
        }
        let last = cumulative.len() - 1;
        (0..shots)
            .map(|_| {
                let u = src.uniform()? * acc;
                // first index whose cumulative mass exceeds u; skips zero-probability outcomes
                let index = cumulative.partition_point(|&c| c <= u).min(last);
                Ok(Bitstring {
                    index,
                    n_qubits: self.n_qubits,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    use super::*;
    use crate::randomness::RandomnessSource;

    fn close(a: Complex64, re: f64, im: f64) -> bool {
        (a.re - re).abs() < 1e-12 && (a.im - im).abs() < 1e-12
    }

    #[test]
    fn zero_state_is_basis_zero() {
        for n in [1, 2, 4] {
            let s = Statevector::zero(n).unwrap();
            assert_eq!(s.amplitudes().len(), 1 << n);
            assert!(close(s.amplitudes()[0], 1.0, 0.0));
            assert!(s.amplitudes()[1..].iter().all(|a| a.norm_sqr() == 0.0));
        }
    }

    #[test]
    fn zero_state_rejects_bad_sizes() {
        let err = Statevector::zero(0).unwrap_err().to_string();
        assert!(err.contains("12"), "{err}");
        assert!(Statevector::zero(13).is_err());
    }

    #[test]
    fn ry_half_turn_flips() {
        let s = Statevector::zero(1).unwrap().applied(&GateOp::ry(0, PI)).unwrap();
        assert!(close(s.amplitudes()[0], 0.0, 0.0));
        assert!(close(s.amplitudes()[1], 1.0, 0.0));
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        // |10⟩
        let s = Statevector::zero(2)
            .unwrap()
            .applied(&GateOp::ry(0, PI))
            .unwrap()
            .applied(&GateOp::cnot(0, 1))
            .unwrap();
        assert!((s.probabilities()[0b11] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rz_on_basis_state_is_phase_only() {
        for theta in [0.0, 0.3, 1.7, PI, -2.5] {
            let s = Statevector::zero(1).unwrap().applied(&GateOp::rz(0, theta)).unwrap();
            assert!((s.probabilities()[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn expectation_z_matches_cos() {
        let one = Statevector::zero(1).unwrap().applied(&GateOp::ry(0, PI)).unwrap();
        assert_eq!(Statevector::zero(1).unwrap().expectation_z(0).unwrap(), 1.0);
        assert!((one.expectation_z(0).unwrap() + 1.0).abs() < 1e-15);
        for theta in [0.0, FRAC_PI_4, FRAC_PI_2, PI] {
            let s = Statevector::zero(1).unwrap().applied(&GateOp::ry(0, theta)).unwrap();
            assert!((s.expectation_z(0).unwrap() - theta.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn bad_indices_and_angles_rejected() {
        let mut s = Statevector::zero(2).unwrap();
        assert!(matches!(s.apply(&GateOp::ry(2, 0.1)), Err(Error::Index { .. })));
        assert!(matches!(s.apply(&GateOp::cnot(1, 1)), Err(Error::Validation(_))));
        assert!(matches!(s.apply(&GateOp::cnot(5, 1)), Err(Error::Index { .. })));
        assert!(matches!(s.apply(&GateOp::rz(0, f64::NAN)), Err(Error::Validation(_))));
        assert!(matches!(s.expectation_z(2), Err(Error::Index { .. })));
    }

    #[test]
    fn sampling_deterministic_outcomes() {
        let mut src = RandomnessSource::seeded(7);
        let zero = Statevector::zero(3).unwrap();
        let draws = zero.sample_bitstrings(100, &mut src).unwrap();
        assert!(draws.iter().all(|b| b.to_string() == "000"));

        let eleven = Statevector::zero(2)
            .unwrap()
            .applied(&GateOp::ry(0, PI))
            .unwrap()
            .applied(&GateOp::ry(1, PI))
            .unwrap();
        let draws = eleven.sample_bitstrings(100, &mut src).unwrap();
        assert!(draws.iter().all(|b| b.to_string() == "11"));
        assert!(zero.sample_bitstrings(0, &mut src).is_err());
    }

    #[test]
    fn uniform_superposition_frequency_within_binomial_bounds() {
        let mut src = RandomnessSource::seeded(11);
        let s = Statevector::zero(1).unwrap().applied(&GateOp::ry(0, FRAC_PI_2)).unwrap();
        let shots = 100_000;
        let ones = s
            .sample_bitstrings(shots, &mut src)
            .unwrap()
            .iter()
            .filter(|b| b.index == 1)
            .count();
        let freq = ones as f64 / shots as f64;
        assert!((0.494..=0.506).contains(&freq), "{freq}");
    }

    #[test]
    fn from_amplitudes_checks_norm() {
        let bad = vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!(Statevector::from_amplitudes(bad).is_err());
        let bad_len = vec![Complex64::new(1.0, 0.0); 3];
        assert!(Statevector::from_amplitudes(bad_len).is_err());
    }
}
