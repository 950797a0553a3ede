//! Experiment pipelines: single runs, and the accuracy, success, flag and
//! mitigation sweeps. Every function is a pure function of its config.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    attach_flag_checks, attach_parity_measurement, attach_z_measurement, build_ghz_tree, count_gates, insert_dd,
    Circuit, Gate, GateCounts,
};
use crate::coverage::{greedy_flag_placement, FlagPlan};
use crate::error::{Error, Result};
use crate::fidelity::{bootstrap_ci, FidelityReport, Mitigation, Pipeline};
use crate::mitigate::ConfusionModel;
use crate::recover::{
    default_n_max, log_sample_count, recover_coherence, sample_angles, RecoveryConfig, RecoveryResult,
};
use crate::rng::derive_seed;
use crate::simulate::{
    coherence_decay, emulate_fast_parity, parity_expectation_from_counts, postselect_flags,
    run_statevector_trajectories, statevector::MAX_QUBITS, trajectory_coherence, CountsTable, NoiseModel, ParitySample,
};

pub const ACCURACY_SCHEMA: &str = "ghzcs.accuracy_sweep.v1";
pub const ACCURACY_SUMMARY_SCHEMA: &str = "ghzcs.accuracy_summary.v1";
pub const SUCCESS_SCHEMA: &str = "ghzcs.success_sweep.v1";
pub const FLAG_SCHEMA: &str = "ghzcs.flag_sweep.v1";
pub const FLAG_SUMMARY_SCHEMA: &str = "ghzcs.flag_summary.v1";
pub const QEM_SCHEMA: &str = "ghzcs.qem_sweep.v1";
pub const QEM_SUMMARY_SCHEMA: &str = "ghzcs.qem_summary.v1";

/// Largest size whose accuracy reference comes from trajectories.
pub const TRAJECTORY_REFERENCE_MAX_N: usize = 10;
pub const SUCCESS_SWEEP_SHOTS: u64 = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Trajectory,
    Emulator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MitigationKind {
    None,
    Rem,
    Dd,
}

/// The enabled mitigation techniques.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mitigations {
    pub rem: bool,
    pub dd: bool,
}

impl Mitigations {
    pub fn from_kinds(kinds: &[MitigationKind]) -> Self {
        Self { rem: kinds.contains(&MitigationKind::Rem), dd: kinds.contains(&MitigationKind::Dd) }
    }

    /// Parses `none`, `rem`, `dd`, `rem+dd` or a comma list.
    pub fn parse(s: &str) -> Result<Self> {
        let mut m = Self::default();
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "none" => {}
                "rem" => m.rem = true,
                "dd" => m.dd = true,
                other => return Err(Error::InvalidConfig(format!("unknown mitigation {other:?}"))),
            }
        }
        Ok(m)
    }

    pub fn label(&self) -> &'static str {
        match (self.rem, self.dd) {
            (false, false) => "none",
            (true, false) => "rem",
            (false, true) => "dd",
            (true, true) => "rem+dd",
        }
    }

    pub fn kinds(&self) -> Vec<MitigationKind> {
        let mut v = Vec::new();
        if self.rem {
            v.push(MitigationKind::Rem);
        }
        if self.dd {
            v.push(MitigationKind::Dd);
        }
        v
    }

    /// The four configurations compared by the mitigation sweep.
    pub fn all() -> [Self; 4] {
        [
            Self { rem: false, dd: false },
            Self { rem: true, dd: false },
            Self { rem: false, dd: true },
            Self { rem: true, dd: true },
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogRule {
    #[serde(rename = "5lnN")]
    FiveLnN,
}

/// Number of random angles: explicit or `⌈5 ln N⌉`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleRule {
    Count(usize),
    Rule(LogRule),
}

impl Default for SampleRule {
    fn default() -> Self {
        Self::Rule(LogRule::FiveLnN)
    }
}

impl SampleRule {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "5lnN" {
            return Ok(Self::Rule(LogRule::FiveLnN));
        }
        s.parse()
            .map(Self::Count)
            .map_err(|_| Error::InvalidConfig(format!("m-samples must be a count or 5lnN, got {s:?}")))
    }

    pub fn resolve(&self, n: usize) -> usize {
        match self {
            Self::Count(m) => *m,
            Self::Rule(LogRule::FiveLnN) => log_sample_count(n).max(2),
        }
    }
}

/// One size or a list of sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    One(usize),
    Many(Vec<usize>),
}

impl Sizes {
    pub fn list(&self) -> Vec<usize> {
        match self {
            Self::One(n) => vec![*n],
            Self::Many(v) => v.clone(),
        }
    }
}

impl Default for Sizes {
    fn default() -> Self {
        Self::One(10)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: Sizes,
    pub flags_k: Vec<usize>,
    pub noise: NoiseModel,
    pub shots: u64,
    pub m_samples: SampleRule,
    pub trials: usize,
    pub seed: u64,
    pub backend: Backend,
    pub mitigation: Vec<MitigationKind>,
    /// Largest candidate frequency; defaults to `N + 8`.
    pub n_max: Option<usize>,
    pub alpha_ratio: f64,
    /// Bootstrap resamples for fidelity intervals; 0 skips the bootstrap.
    pub resamples: usize,
    /// Readout model used by REM; defaults to symmetric `noise.p_ro`.
    pub readout: Option<ConfusionModel>,
    /// Trajectories behind the accuracy reference for small sizes.
    pub reference_trajectories: u64,
    /// Sample counts compared by the success sweep.
    pub m_values: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: Sizes::default(),
            flags_k: vec![0],
            noise: NoiseModel::noiseless(),
            shots: 1000,
            m_samples: SampleRule::default(),
            trials: 1,
            seed: 0,
            backend: Backend::Trajectory,
            mitigation: Vec::new(),
            n_max: None,
            alpha_ratio: 0.1,
            resamples: 0,
            readout: None,
            reference_trajectories: 20_000,
            m_values: vec![4, 8, 12, 15],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn mitigations(&self) -> Mitigations {
        Mitigations::from_kinds(&self.mitigation)
    }

    pub fn n_max_for(&self, n: usize) -> usize {
        self.n_max.unwrap_or_else(|| default_n_max(n))
    }

    pub fn readout_model(&self) -> Result<ConfusionModel> {
        match self.readout {
            Some(m) => {
                m.validate()?;
                Ok(m)
            }
            None => ConfusionModel::symmetric(self.noise.p_ro),
        }
    }

    pub fn pipeline(&self, n: usize, mitigations: Mitigations) -> Result<Pipeline<f64>> {
        Ok(Pipeline {
            recovery: RecoveryConfig { alpha_ratio: self.alpha_ratio, ..Default::default() },
            n_max: self.n_max_for(n),
            readout: if mitigations.rem { Some(self.readout_model()?) } else { None },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        let sizes = self.n.list();
        if sizes.is_empty() || sizes.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig("every GHZ size must be at least 2".into()));
        }
        if self.shots == 0 || self.trials == 0 {
            return Err(Error::InvalidConfig("shots and trials must be positive".into()));
        }
        if let SampleRule::Count(m) = self.m_samples {
            if m < 2 {
                return Err(Error::InvalidConfig("m_samples must be at least 2".into()));
            }
        }
        if !(self.alpha_ratio > 0.0) {
            return Err(Error::InvalidConfig("alpha_ratio must be positive".into()));
        }
        if self.resamples != 0 && self.resamples < crate::fidelity::MIN_RESAMPLES {
            return Err(Error::InvalidConfig(format!(
                "resamples must be 0 or at least {}",
                crate::fidelity::MIN_RESAMPLES
            )));
        }
        if let Some(n_max) = self.n_max {
            if n_max == 0 {
                return Err(Error::InvalidConfig("n_max must be positive".into()));
            }
        }
        if self.mitigations().rem {
            self.readout_model()?;
        }
        let k_max = self.flags_k.iter().copied().max().unwrap_or(0);
        if self.backend == Backend::Trajectory {
            for &n in &sizes {
                if n + k_max > MAX_QUBITS {
                    return Err(Error::ResourceLimit(format!(
                        "trajectory backend needs n + flags <= {MAX_QUBITS}, got {} + {k_max}",
                        n
                    )));
                }
            }
        } else if k_max > 0 {
            return Err(Error::InvalidConfig("the emulator backend does not model flag qubits".into()));
        }
        Ok(())
    }
}

/// Fully resolved parameters of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub n: usize,
    pub k: usize,
    pub noise: NoiseModel,
    pub shots: u64,
    pub m_samples: usize,
    pub seed: u64,
    pub backend: Backend,
    pub mitigations: Mitigations,
}

impl RunSpec {
    /// The run described by a config with a single size and flag count.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let n = match cfg.n.list().as_slice() {
            [n] => *n,
            _ => return Err(Error::InvalidConfig("a single run needs exactly one size".into())),
        };
        let k = match cfg.flags_k.as_slice() {
            [] => 0,
            [k] => *k,
            _ => return Err(Error::InvalidConfig("a single run needs exactly one flag count".into())),
        };
        Ok(Self {
            n,
            k,
            noise: cfg.noise,
            shots: cfg.shots,
            m_samples: cfg.m_samples.resolve(n),
            seed: cfg.seed,
            backend: cfg.backend,
            mitigations: cfg.mitigations(),
        })
    }
}

/// Preparation with greedy flags and, on the trajectory backend, the
/// coherent phase offset applied as `RZ(−θ)` on qubit 0.
pub fn prepare_circuit(n: usize, k: usize, noise: &NoiseModel, backend: Backend) -> Result<(Circuit, FlagPlan)> {
    let (mut circuit, tree) = build_ghz_tree(n)?;
    if backend == Backend::Trajectory && noise.phase_offset != 0.0 {
        circuit.push_layer(vec![Gate::rz(0, -noise.phase_offset)])?;
    }
    let plan = greedy_flag_placement(&tree, k);
    if plan.pairs.len() < k {
        return Err(Error::InvalidConfig(format!(
            "only {} flags add coverage on {n} qubits, {k} requested",
            plan.pairs.len()
        )));
    }
    let circuit = attach_flag_checks(&circuit, &tree, &plan.pairs)?;
    Ok((circuit, plan))
}

fn finish(circuit: Circuit, dd: bool) -> Circuit {
    if dd {
        insert_dd(&circuit)
    } else {
        circuit
    }
}

/// Raw outputs of one run, post-selected but not readout-corrected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub spec: RunSpec,
    pub plan: FlagPlan,
    pub gate_counts: GateCounts,
    pub samples: Vec<ParitySample>,
    /// Post-selected Z-basis counts; the emulator produces none.
    pub population_counts: Option<CountsTable>,
    /// Shots kept over shots taken, across every circuit of the run.
    pub retained_fraction: f64,
}

/// Samples the angles, runs every circuit, post-selects on the flags.
pub fn execute_run(spec: &RunSpec) -> Result<RunOutput> {
    let (base, plan) = prepare_circuit(spec.n, spec.k, &spec.noise, spec.backend)?;
    let phis: Vec<f64> = sample_angles(spec.m_samples, derive_seed(spec.seed, 0))?;
    let gate_counts = count_gates(&finish(attach_parity_measurement(&base, 0.0)?, spec.mitigations.dd));
    match spec.backend {
        Backend::Emulator => {
            let samples =
                emulate_fast_parity(spec.n, gate_counts, &spec.noise, &phis, spec.shots, derive_seed(spec.seed, 1))?;
            Ok(RunOutput {
                spec: spec.clone(),
                plan,
                gate_counts,
                samples,
                population_counts: None,
                retained_fraction: 1.0,
            })
        }
        Backend::Trajectory => {
            let mut circuits: Vec<Circuit> = Vec::with_capacity(phis.len() + 1);
            for &phi in &phis {
                circuits.push(finish(attach_parity_measurement(&base, phi)?, spec.mitigations.dd));
            }
            circuits.push(finish(attach_z_measurement(&base)?, spec.mitigations.dd));
            let tables = circuits
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let counts =
                        run_statevector_trajectories(c, &spec.noise, spec.shots, derive_seed(spec.seed, 2 + i as u64))?;
                    postselect_flags(&counts)
                })
                .collect::<Result<Vec<_>>>()?;
            let kept: u64 = tables.iter().map(|t| t.counts.total()).sum();
            let retained_fraction = kept as f64 / (spec.shots * tables.len() as u64) as f64;
            let mut tables = tables.into_iter();
            let samples = phis
                .iter()
                .zip(tables.by_ref())
                .map(|(&phi, t)| {
                    let (parity, shots) = parity_expectation_from_counts(&t.counts)?;
                    Ok(ParitySample { phi, parity, shots })
                })
                .collect::<Result<Vec<_>>>()?;
            let population = tables.next().expect("z-basis table").counts;
            Ok(RunOutput {
                spec: spec.clone(),
                plan,
                gate_counts,
                samples,
                population_counts: Some(population),
                retained_fraction,
            })
        }
    }
}

/// Fidelity report for a trajectory run, with bootstrap intervals when
/// `resamples > 0`.
pub fn report_for(output: &RunOutput, pipeline: &Pipeline<f64>, resamples: usize) -> Result<FidelityReport> {
    Ok(report_detailed(output, pipeline, resamples)?.0)
}

/// [`report_for`] that also returns the recovery behind the report.
pub fn report_detailed(
    output: &RunOutput,
    pipeline: &Pipeline<f64>,
    resamples: usize,
) -> Result<(FidelityReport, RecoveryResult<f64>)> {
    let counts = output
        .population_counts
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("fidelity needs Z-basis counts; the emulator backend has none".into()))?;
    let (report, recovery) = pipeline.run_detailed(&output.samples, counts)?;
    let mut report = report.with_retained_fraction(output.retained_fraction);
    if resamples > 0 {
        let ci = bootstrap_ci(&output.samples, counts, resamples, derive_seed(output.spec.seed, u64::MAX), pipeline)?;
        report = report.with_intervals(&ci);
    }
    let dd = output.spec.mitigations.dd;
    report.mitigation = match report.mitigation.take() {
        Some(m) => Some(Mitigation { dd, ..m }),
        None if dd => Some(Mitigation { dd, ..Default::default() }),
        None => None,
    };
    Ok((report, recovery))
}

fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        Self {
            count: values.iter().filter(|v| !v.is_nan()).count(),
            median: median(values),
            p5: percentile(values, 0.05),
            p95: percentile(values, 0.95),
        }
    }
}

fn status_of<T>(r: &Result<T>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("error: {e}"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub n: usize,
    pub trial: usize,
    pub m_samples: usize,
    pub n_rec: usize,
    pub c_est: f64,
    pub c_ref: f64,
    pub abs_error: f64,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummaryRow {
    pub n: usize,
    pub c_ref: f64,
    pub trials: usize,
    pub median_abs_error: f64,
    pub p5_abs_error: f64,
    pub p95_abs_error: f64,
    pub success_rate: f64,
}

/// Reference coherence: trajectories for small sizes, the emulator decay
/// formula above [`TRAJECTORY_REFERENCE_MAX_N`].
pub fn reference_coherence(n: usize, noise: &NoiseModel, trajectories: u64, seed: u64) -> Result<f64> {
    let (prep, _) = build_ghz_tree(n)?;
    if n <= TRAJECTORY_REFERENCE_MAX_N {
        Ok(trajectory_coherence(&prep, noise, trajectories, seed)?.coherence)
    } else {
        Ok(coherence_decay(count_gates(&prep), noise))
    }
}

fn emulated_trial(n: usize, m: usize, cfg: &ExperimentConfig, shots: u64, seed: u64) -> Result<(usize, f64)> {
    let (prep, _) = build_ghz_tree(n)?;
    let phis: Vec<f64> = sample_angles(m, derive_seed(seed, 0))?;
    let samples = emulate_fast_parity(n, count_gates(&prep), &cfg.noise, &phis, shots, derive_seed(seed, 1))?;
    let config = RecoveryConfig { alpha_ratio: cfg.alpha_ratio, ..Default::default() };
    let r = recover_coherence(&samples, cfg.n_max_for(n), &config)?;
    Ok((r.n_rec, r.coherence))
}

/// Coherence error of emulated random-angle runs against the reference, for
/// every size and trial.
pub fn accuracy_sweep(cfg: &ExperimentConfig) -> Result<(Vec<AccuracyRow>, Vec<AccuracySummaryRow>)> {
    let cfg = ExperimentConfig { backend: Backend::Emulator, flags_k: vec![], ..cfg.clone() };
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (idx, n) in cfg.n.list().into_iter().enumerate() {
        let c_ref = reference_coherence(
            n,
            &cfg.noise,
            cfg.reference_trajectories,
            derive_seed(cfg.seed, 1 << 32 | idx as u64),
        )?;
        let m = cfg.m_samples.resolve(n);
        let block: Vec<AccuracyRow> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(derive_seed(cfg.seed, n as u64), trial as u64);
                let r = emulated_trial(n, m, &cfg, cfg.shots, seed);
                let status = status_of(&r);
                let (n_rec, c_est) = r.unwrap_or((0, f64::NAN));
                AccuracyRow { n, trial, m_samples: m, n_rec, c_est, c_ref, abs_error: (c_est - c_ref).abs(), status }
            })
            .collect();
        let errors: Vec<f64> = block.iter().map(|r| r.abs_error).collect();
        let s = Summary::of(&errors);
        summary.push(AccuracySummaryRow {
            n,
            c_ref,
            trials: cfg.trials,
            median_abs_error: s.median,
            p5_abs_error: s.p5,
            p95_abs_error: s.p95,
            success_rate: block.iter().filter(|r| r.n_rec == n).count() as f64 / cfg.trials as f64,
        });
        rows.extend(block);
    }
    Ok((rows, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessRow {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub shots: u64,
    pub successes: usize,
    pub success_rate: f64,
    pub median_coherence: f64,
    pub failures: usize,
}

/// Fraction of trials whose recovered frequency equals `N`, for each `M` in
/// `cfg.m_values`, at [`SUCCESS_SWEEP_SHOTS`] shots per angle.
pub fn success_sweep(cfg: &ExperimentConfig) -> Result<Vec<SuccessRow>> {
    let cfg = ExperimentConfig { backend: Backend::Emulator, flags_k: vec![], ..cfg.clone() };
    cfg.validate()?;
    let n = match cfg.n.list().as_slice() {
        [n] => *n,
        _ => return Err(Error::InvalidConfig("success sweep needs exactly one size".into())),
    };
    if cfg.m_values.is_empty() || cfg.m_values.iter().any(|&m| m < 2) {
        return Err(Error::InvalidConfig("m_values must be non-empty and at least 2".into()));
    }
    let rows = cfg
        .m_values
        .iter()
        .map(|&m| {
            let results: Vec<Result<(usize, f64)>> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = derive_seed(derive_seed(cfg.seed, m as u64), trial as u64);
                    emulated_trial(n, m, &cfg, SUCCESS_SWEEP_SHOTS, seed)
                })
                .collect();
            let successes = results.iter().filter(|r| matches!(r, Ok((k, _)) if *k == n)).count();
            let coherences: Vec<f64> = results.iter().filter_map(|r| r.as_ref().ok().map(|x| x.1)).collect();
            SuccessRow {
                n,
                m,
                trials: cfg.trials,
                shots: SUCCESS_SWEEP_SHOTS,
                successes,
                success_rate: successes as f64 / cfg.trials as f64,
                median_coherence: median(&coherences),
                failures: results.iter().filter(|r| r.is_err()).count(),
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagRow {
    pub mitigation: String,
    pub k: usize,
    pub trial: usize,
    pub coverage_ratio: f64,
    pub population: f64,
    pub coherence: f64,
    pub theta: f64,
    pub f_std: f64,
    pub f_rot: f64,
    pub retained_fraction: f64,
    pub n_rec: usize,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagSummaryRow {
    pub mitigation: String,
    pub k: usize,
    pub trials: usize,
    pub median_population: f64,
    pub median_coherence: f64,
    pub median_f_std: f64,
    pub median_f_rot: f64,
    pub p5_f_rot: f64,
    pub p95_f_rot: f64,
    pub median_retained_fraction: f64,
}

fn flag_row(cfg: &ExperimentConfig, n: usize, k: usize, trial: usize, mitigations: Mitigations) -> FlagRow {
    let spec = RunSpec {
        n,
        k,
        noise: cfg.noise,
        shots: cfg.shots,
        m_samples: cfg.m_samples.resolve(n),
        // the same data for every mitigation setting that shares a circuit
        seed: derive_seed(derive_seed(cfg.seed, (k as u64) << 1 | mitigations.dd as u64), trial as u64),
        backend: Backend::Trajectory,
        mitigations,
    };
    let result = (|| {
        let out = execute_run(&spec)?;
        let (report, recovery) = report_detailed(&out, &cfg.pipeline(n, mitigations)?, 0)?;
        Ok((out, report, recovery.n_rec))
    })();
    let status = status_of(&result);
    let coverage_ratio = {
        let tree = build_ghz_tree(n).map(|(_, t)| t);
        tree.map(|t| greedy_flag_placement(&t, k).total_ratio).unwrap_or(f64::NAN)
    };
    match result {
        Ok((out, r, n_rec)) => FlagRow {
            mitigation: mitigations.label().into(),
            k,
            trial,
            coverage_ratio,
            population: r.population,
            coherence: r.coherence,
            theta: r.theta,
            f_std: r.f_standard,
            f_rot: r.f_rotated,
            retained_fraction: out.retained_fraction,
            n_rec,
            status,
        },
        Err(_) => FlagRow {
            mitigation: mitigations.label().into(),
            k,
            trial,
            coverage_ratio,
            population: f64::NAN,
            coherence: f64::NAN,
            theta: f64::NAN,
            f_std: f64::NAN,
            f_rot: f64::NAN,
            retained_fraction: f64::NAN,
            n_rec: 0,
            status,
        },
    }
}

fn summarize_flags(rows: &[FlagRow]) -> Vec<FlagSummaryRow> {
    let mut groups: BTreeMap<(usize, usize), Vec<&FlagRow>> = BTreeMap::new();
    let order: Vec<&str> = Mitigations::all().iter().map(|m| m.label()).collect();
    for r in rows {
        let rank = order.iter().position(|l| *l == r.mitigation).unwrap_or(order.len());
        groups.entry((rank, r.k)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let col = |f: fn(&FlagRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            let f_rot = Summary::of(&col(|r| r.f_rot));
            FlagSummaryRow {
                mitigation: g[0].mitigation.clone(),
                k: g[0].k,
                trials: g.len(),
                median_population: median(&col(|r| r.population)),
                median_coherence: median(&col(|r| r.coherence)),
                median_f_std: median(&col(|r| r.f_std)),
                median_f_rot: f_rot.median,
                p5_f_rot: f_rot.p5,
                p95_f_rot: f_rot.p95,
                median_retained_fraction: median(&col(|r| r.retained_fraction)),
            }
        })
        .collect()
}

fn sweep_flags(cfg: &ExperimentConfig, settings: &[Mitigations]) -> Result<(Vec<FlagRow>, Vec<FlagSummaryRow>)> {
    let cfg = ExperimentConfig { backend: Backend::Trajectory, ..cfg.clone() };
    cfg.validate()?;
    let n = match cfg.n.list().as_slice() {
        [n] => *n,
        _ => return Err(Error::InvalidConfig("flag sweeps need exactly one size".into())),
    };
    let jobs: Vec<(Mitigations, usize, usize)> = settings
        .iter()
        .flat_map(|&m| cfg.flags_k.iter().flat_map(move |&k| (0..cfg.trials).map(move |t| (m, k, t))))
        .collect();
    let rows: Vec<FlagRow> = jobs.par_iter().map(|&(m, k, t)| flag_row(&cfg, n, k, t, m)).collect();
    let summary = summarize_flags(&rows);
    Ok((rows, summary))
}

/// Post-selected fidelity for each flag count in `cfg.flags_k` with the
/// configured mitigation.
pub fn flag_sweep(cfg: &ExperimentConfig) -> Result<(Vec<FlagRow>, Vec<FlagSummaryRow>)> {
    sweep_flags(cfg, &[cfg.mitigations()])
}

/// [`flag_sweep`] under no mitigation, REM, DD and REM with DD.
pub fn qem_sweep(cfg: &ExperimentConfig) -> Result<(Vec<FlagRow>, Vec<FlagSummaryRow>)> {
    sweep_flags(cfg, &Mitigations::all())
}
