//! Dense statevector over at most [`MAX_QUBITS`] qubits. Qubit `q` is bit `q`
//! of the basis-state index.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 20;

/// Single-qubit Pauli codes: 0 = I, 1 = X, 2 = Y, 3 = Z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_code(c: u8) -> Self {
        match c & 3 {
            0 => Pauli::I,
            1 => Pauli::X,
            2 => Pauli::Y,
            _ => Pauli::Z,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::ResourceLimit(format!("statevector limited to {MAX_QUBITS} qubits, got {n}")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    fn pairs(&mut self, q: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let bit = 1usize << q;
        for block in self.amps.chunks_exact_mut(2 * bit) {
            let (lo, hi) = block.split_at_mut(bit);
            for (a, b) in lo.iter_mut().zip(hi) {
                f(a, b);
            }
        }
    }

    pub fn h(&mut self, q: usize) {
        self.pairs(q, |a, b| {
            let (x, y) = (*a, *b);
            *a = (x + y) * FRAC_1_SQRT_2;
            *b = (x - y) * FRAC_1_SQRT_2;
        });
    }

    pub fn pauli(&mut self, q: usize, p: Pauli) {
        let i = Complex64::i();
        match p {
            Pauli::I => {}
            Pauli::X => self.pairs(q, std::mem::swap),
            Pauli::Y => self.pairs(q, |a, b| {
                let (x, y) = (*a, *b);
                *a = -i * y;
                *b = i * x;
            }),
            Pauli::Z => self.pairs(q, |_, b| *b = -*b),
        }
    }

    pub fn rz(&mut self, q: usize, theta: f64) {
        let lo = Complex64::from_polar(1.0, -theta / 2.0);
        let hi = Complex64::from_polar(1.0, theta / 2.0);
        self.pairs(q, |a, b| {
            *a *= lo;
            *b *= hi;
        });
    }

    pub fn ry(&mut self, q: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        self.pairs(q, |a, b| {
            let (x, y) = (*a, *b);
            *a = x * c - y * s;
            *b = x * s + y * c;
        });
    }

    pub fn cnot(&mut self, control: usize, target: usize) {
        let (cb, tb) = (1usize << control, 1usize << target);
        for (n, block) in self.amps.chunks_exact_mut(2 * tb).enumerate() {
            let base = n * 2 * tb;
            let (lo, hi) = block.split_at_mut(tb);
            if cb > tb {
                if base & cb != 0 {
                    lo.swap_with_slice(hi);
                }
            } else {
                for (j, (a, b)) in lo.iter_mut().zip(hi).enumerate() {
                    if j & cb != 0 {
                        std::mem::swap(a, b);
                    }
                }
            }
        }
    }

    /// Applies a unitary gate; measurements are ignored here.
    pub fn apply(&mut self, g: &Gate) {
        match g.kind {
            GateKind::H => self.h(g.qubits[0]),
            GateKind::X => self.pauli(g.qubits[0], Pauli::X),
            GateKind::Rz => self.rz(g.qubits[0], g.angle.unwrap_or(0.0)),
            GateKind::Ry => self.ry(g.qubits[0], g.angle.unwrap_or(0.0)),
            GateKind::Cnot => self.cnot(g.qubits[0], g.qubits[1]),
            GateKind::MeasureZ => {}
        }
    }

    /// Born probabilities marginalized onto `qubits`; outcome index bit `k`
    /// is the value of `qubits[k]`.
    pub fn marginal_probabilities(&self, qubits: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; 1 << qubits.len()];
        if qubits.len() == self.n_qubits() && qubits.iter().enumerate().all(|(k, &q)| k == q) {
            for (o, a) in out.iter_mut().zip(&self.amps) {
                *o = a.norm_sqr();
            }
            return out;
        }
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let mut key = 0usize;
            for (k, &q) in qubits.iter().enumerate() {
                key |= ((i >> q) & 1) << k;
            }
            out[key] += p;
        }
        out
    }

    /// Maximum amplitude deviation after removing the relative global phase.
    pub fn distance_up_to_phase(&self, other: &StateVector) -> f64 {
        let overlap: Complex64 = self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum();
        let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { Complex64::new(1.0, 0.0) };
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a * phase - b).norm()).fold(0.0, f64::max)
    }
}

/// Noiseless evolution of all unitary gates in `circuit` from `|0…0⟩`.
pub fn simulate_statevector(circuit: &Circuit) -> Result<StateVector> {
    let mut psi = StateVector::zero(circuit.n_qubits())?;
    for g in circuit.gates() {
        psi.apply(g);
    }
    Ok(psi)
}
