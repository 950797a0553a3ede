//! Log-depth GHZ preparation with flag-qubit parity checks, noisy simulation
//! and fidelity estimation from a logarithmic number of random-angle parity
//! measurements.
//!
//! The estimation modules ([`recover`], [`fidelity`], [`mitigate`]) are
//! generic over [`Real`]; the aliases below fix the scalar type.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod coverage;
pub mod error;
pub mod experiment;
pub mod fidelity;
pub mod io;
pub mod mitigate;
pub mod recover;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use circuit::{
    attach_flag_checks, attach_parity_measurement, attach_z_measurement, build_ghz_tree, circuit_from_tree,
    count_gates, insert_dd, Circuit, Gate, GateCounts, GateKind, PrepTree,
};
pub use coverage::{brute_force_optimal, coverage_set, greedy_flag_placement, lca, CoverageSet, FlagPlan};
pub use error::{Error, Result};
pub use fidelity::{bootstrap_ci, certify_gme, estimate_fidelity, FidelityReport, IntervalSet, Pipeline};
pub use mitigate::{rem_parity, rem_population, ConfusionModel};
pub use recover::{
    build_measurement_matrix, detect_support, fourier_grid, fourier_grid_estimate, lasso_fit, ols_refine,
    recover_coherence, sample_angles, CoefficientVector, MeasurementMatrix, RecoveryConfig, RecoveryResult,
};
pub use scalar::Real;
pub use simulate::{CountsTable, NoiseModel, ParitySample};

pub type RecoveryResult64 = RecoveryResult<f64>;
pub type RecoveryResult32 = RecoveryResult<f32>;
pub type FidelityReport64 = FidelityReport<f64>;
pub type FidelityReport32 = FidelityReport<f32>;
pub type ConfusionModel64 = ConfusionModel<f64>;
pub type ConfusionModel32 = ConfusionModel<f32>;
pub type ParitySample32 = ParitySample<f32>;
