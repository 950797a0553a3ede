//! Analytic parity emulator: coherence decays with the gate counts and each
//! angle's even-parity count is a binomial draw.

use rand_distr::{Binomial, Distribution};

use super::{NoiseModel, ParitySample};
use crate::circuit::GateCounts;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// `(1 - p_2q)^{n_cx} (1 - p_1q)^{n_1q}`.
pub fn coherence_decay(counts: GateCounts, noise: &NoiseModel) -> f64 {
    (1.0 - noise.p_2q).powi(counts.n_cx as i32) * (1.0 - noise.p_1q).powi(counts.n_1q as i32)
}

/// One binomial parity estimate per angle, using `noise.phase_offset` as the
/// coherent phase. Symmetric readout flips scale the amplitude by
/// `(1 - 2 p_ro)^n`. Angle `j` draws from stream `j` of `seed`.
pub fn emulate_fast_parity(
    n: usize,
    counts: GateCounts,
    noise: &NoiseModel,
    phis: &[f64],
    shots: u64,
    seed: u64,
) -> Result<Vec<ParitySample>> {
    noise.validate()?;
    if n < 2 {
        return Err(Error::InvalidSize(format!("GHZ size must be >= 2, got {n}")));
    }
    if shots == 0 {
        return Err(Error::InvalidConfig("shots must be at least 1".into()));
    }
    let c_exp = coherence_decay(counts, noise) * (1.0 - 2.0 * noise.p_ro).powi(n as i32);
    phis.iter()
        .enumerate()
        .map(|(j, &phi)| {
            let p_even = 0.5 * (1.0 + c_exp * (n as f64 * phi + noise.phase_offset).cos());
            assert!((-1e-12..=1.0 + 1e-12).contains(&p_even), "even-parity probability {p_even}");
            let dist =
                Binomial::new(shots, p_even.clamp(0.0, 1.0)).map_err(|e| Error::InvalidProbability(e.to_string()))?;
            let n_even = dist.sample(&mut stream_rng(seed, j as u64));
            let parity = (2.0 * n_even as f64 - shots as f64) / shots as f64;
            Ok(ParitySample { phi, parity, shots })
        })
        .collect()
}
