//! Readout error mitigation for the tensored single-qubit confusion model.
//!
//! Only two quantities feed the fidelity: the population of `0ⁿ` and `1ⁿ`,
//! and the parity expectation. Both are corrected without materializing the
//! `2ⁿ × 2ⁿ` inverse: the population from two rows of `(A⁻¹)^{⊗n}` evaluated
//! on the observed bitstrings, the parity by the scale factor `(1 − 2p)ⁿ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::simulate::CountsTable;

/// Corrections smaller than this scale factor are refused.
pub const MIN_PARITY_SCALE: f64 = 1e-6;

/// Per-qubit readout confusion: `p01 = P(read 1 | 0)`, `p10 = P(read 0 | 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ConfusionModel<F = f64> {
    pub p01: F,
    pub p10: F,
}

impl<F: Real> ConfusionModel<F> {
    pub fn new(p01: F, p10: F) -> Result<Self> {
        let m = Self { p01, p10 };
        m.validate()?;
        Ok(m)
    }

    pub fn symmetric(p: F) -> Result<Self> {
        Self::new(p, p)
    }

    pub fn validate(&self) -> Result<()> {
        let half = F::lit(0.5);
        for (name, p) in [("p01", self.p01), ("p10", self.p10)] {
            if !(p >= F::zero() && p < half) {
                return Err(Error::NonInvertible(format!("{name} = {p} outside [0, 0.5)")));
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.p01 == self.p10
    }

    /// `A[observed][true]`.
    pub fn matrix(&self) -> [[F; 2]; 2] {
        let one = F::one();
        [[one - self.p01, self.p10], [self.p01, one - self.p10]]
    }

    /// `A⁻¹[true][observed]`.
    pub fn inverse(&self) -> Result<[[F; 2]; 2]> {
        self.validate()?;
        let one = F::one();
        let det = one - self.p01 - self.p10;
        Ok([[(one - self.p10) / det, -self.p10 / det], [-self.p01 / det, (one - self.p01) / det]])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Corrected `P = Σ_s p̂(s) [w(0ⁿ, s) + w(1ⁿ, s)]`, `w(t, s) = Π_i A⁻¹[t_i][s_i]`.
/// May leave `[0, 1]` under shot noise.
pub fn rem_population<F: Real>(counts: &CountsTable, model: &ConfusionModel<F>) -> Result<F> {
    let inv = model.inverse()?;
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyInput("counts table is empty".into()));
    }
    let mut acc = F::zero();
    for (key, &c) in &counts.counts {
        let bytes = key.as_bytes();
        let (mut w0, mut w1) = (F::one(), F::one());
        for &pos in &counts.bit_layout.data {
            let s = usize::from(bytes[pos] == b'1');
            w0 *= inv[0][s];
            w1 *= inv[1][s];
        }
        acc += F::from_u64(c).expect("count fits scalar") * (w0 + w1);
    }
    Ok(acc / F::from_u64(total).expect("count fits scalar"))
}

/// `(1 − 2p)ⁿ`, the attenuation of an `n`-qubit parity under symmetric flips.
pub fn parity_scale<F: Real>(n: usize, model: &ConfusionModel<F>) -> Result<F> {
    model.validate()?;
    if !model.is_symmetric() {
        return Err(Error::AsymmetricModel);
    }
    let factor = (F::one() - F::lit(2.0) * model.p01).powi(n as i32);
    if factor.as_f64() < MIN_PARITY_SCALE {
        return Err(Error::AmplificationOverflow { factor: factor.as_f64() });
    }
    Ok(factor)
}

/// `parity_raw / (1 − 2p)ⁿ`. May leave `[−1, 1]` under shot noise.
pub fn rem_parity<F: Real>(parity_raw: F, n: usize, model: &ConfusionModel<F>) -> Result<F> {
    Ok(parity_raw / parity_scale(n, model)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, entries: &[(&str, u64)]) -> CountsTable {
        let mut t = CountsTable::new(n, 0);
        for &(k, c) in entries {
            t.add(k, c);
        }
        t
    }

    /// Applies the full `(A⁻¹)^{⊗n}` to the dense empirical vector.
    fn dense_population(counts: &CountsTable, model: &ConfusionModel) -> f64 {
        let n = counts.n_bits;
        let inv = model.inverse().unwrap();
        let dim = 1usize << n;
        let mut p = vec![0.0; dim];
        let total = counts.total() as f64;
        for (k, &c) in &counts.counts {
            let idx = k.bytes().enumerate().fold(0, |acc, (i, b)| acc | (usize::from(b == b'1') << i));
            p[idx] += c as f64 / total;
        }
        let mut full = vec![vec![1.0; dim]; dim];
        for (t, row) in full.iter_mut().enumerate() {
            for (s, w) in row.iter_mut().enumerate() {
                for q in 0..n {
                    *w *= inv[t >> q & 1][s >> q & 1];
                }
            }
        }
        let corrected: Vec<f64> = full.iter().map(|row| row.iter().zip(&p).map(|(a, b)| a * b).sum()).collect();
        corrected[0] + corrected[dim - 1]
    }

    #[test]
    fn identity_without_errors() {
        let m = ConfusionModel::<f64>::symmetric(0.0).unwrap();
        let t = table(3, &[("000", 40), ("111", 30), ("010", 30)]);
        assert_eq!(rem_population(&t, &m).unwrap(), 0.7);
        assert_eq!(rem_parity(0.37, 25, &m).unwrap(), 0.37);
    }

    #[test]
    fn single_qubit_inversion() {
        let m = ConfusionModel::<f64>::symmetric(0.1).unwrap();
        let inv = m.inverse().unwrap();
        let obs = [0.9, 0.1];
        let p0 = inv[0][0] * obs[0] + inv[0][1] * obs[1];
        let p1 = inv[1][0] * obs[0] + inv[1][1] * obs[1];
        assert!((p0 - 1.0).abs() < 1e-15 && p1.abs() < 1e-15);
        assert!((rem_parity(0.8, 1, &m).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_inverse() {
        let models = [
            ConfusionModel::symmetric(0.05).unwrap(),
            ConfusionModel::new(0.02, 0.13).unwrap(),
            ConfusionModel::new(0.3, 0.0).unwrap(),
        ];
        let tables = [
            table(1, &[("0", 9), ("1", 1)]),
            table(2, &[("00", 40), ("01", 5), ("10", 7), ("11", 48)]),
            table(3, &[("000", 400), ("111", 350), ("001", 20), ("101", 11), ("110", 3)]),
            table(4, &[("0000", 10), ("1111", 12), ("0101", 1), ("1000", 2), ("0111", 5)]),
        ];
        for m in &models {
            for t in &tables {
                let fast = rem_population(t, m).unwrap();
                assert!((fast - dense_population(t, m)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn validation() {
        assert!(ConfusionModel::symmetric(0.5).is_err());
        assert!(ConfusionModel::new(-0.01, 0.1).is_err());
        let asym = ConfusionModel::new(0.01, 0.02).unwrap();
        assert!(matches!(rem_parity(0.5, 3, &asym), Err(Error::AsymmetricModel)));
        let big = ConfusionModel::symmetric(0.49).unwrap();
        assert!(matches!(rem_parity(0.5, 10, &big), Err(Error::AmplificationOverflow { .. })));
        assert!(ConfusionModel::<f64>::from_json(r#"{"p01": 0.002, "p10": 0.002}"#).unwrap().is_symmetric());
        assert!(ConfusionModel::<f64>::from_json(r#"{"p01": 0.7, "p10": 0.002}"#).is_err());
    }

    #[test]
    fn single_precision() {
        let m = ConfusionModel::<f32>::symmetric(0.1).unwrap();
        let t = table(1, &[("0", 9), ("1", 1)]);
        assert!((rem_population(&t, &m).unwrap() - 1.0).abs() < 1e-6);
    }
}
