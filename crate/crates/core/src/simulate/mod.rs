//! Measurement simulation: an exact statevector trajectory sampler for small
//! circuits, the analytic parity emulator for large ones, and count
//! post-processing.

pub mod counts;
pub mod emulator;
pub mod statevector;
pub mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use counts::{
    apply_readout_flips, parity_expectation_from_counts, population_from_counts, postselect_flags, BitLayout,
    CountsTable, Postselected,
};
pub use emulator::{coherence_decay, emulate_fast_parity};
pub use statevector::{simulate_statevector, StateVector};
pub use trajectory::{run_statevector_trajectories, trajectory_coherence, CoherenceEstimate};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Depolarizing rate after each single-qubit gate.
    pub p_1q: f64,
    /// Depolarizing rate after each two-qubit gate.
    pub p_2q: f64,
    /// Independent readout bit-flip probability.
    pub p_ro: f64,
    /// Coherent phase offset added to the GHZ relative phase.
    #[serde(default)]
    pub phase_offset: f64,
}

impl NoiseModel {
    pub fn new(p_1q: f64, p_2q: f64, p_ro: f64, phase_offset: f64) -> Result<Self> {
        let m = Self { p_1q, p_2q, p_ro, phase_offset };
        m.validate()?;
        Ok(m)
    }

    pub fn noiseless() -> Self {
        Self { p_1q: 0.0, p_2q: 0.0, p_ro: 0.0, phase_offset: 0.0 }
    }

    pub fn depolarizing(p_1q: f64, p_2q: f64) -> Result<Self> {
        Self::new(p_1q, p_2q, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_1q", self.p_1q), ("p_2q", self.p_2q), ("p_ro", self.p_ro)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability(format!("{name} = {p} outside [0, 1]")));
            }
        }
        let pi = std::f64::consts::PI;
        if !(self.phase_offset > -pi && self.phase_offset <= pi) {
            return Err(Error::InvalidProbability(format!("phase_offset = {} outside (-π, π]", self.phase_offset)));
        }
        Ok(())
    }
}

/// One parity measurement: angle, estimated `⟨𝒫(φ)⟩` and shots used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ParitySample<F = f64> {
    pub phi: F,
    pub parity: F,
    pub shots: u64,
}
