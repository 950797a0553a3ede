//! Fidelity estimates, entanglement certification and bootstrap intervals.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mitigate::{parity_scale, rem_population, ConfusionModel};
use crate::recover::{recover_coherence, RecoveryConfig, RecoveryResult};
use crate::rng::{derive_seed, stream_rng};
use crate::scalar::{wrap_angle, Real};
use crate::simulate::{population_from_counts, CountsTable, ParitySample};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Interval<F> {
    pub low: F,
    pub high: F,
}

impl<F: Real> Interval<F> {
    pub fn width(&self) -> F {
        self.high - self.low
    }

    pub fn contains(&self, x: F) -> bool {
        self.low <= x && x <= self.high
    }
}

/// One bound per reported quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Bounds<F> {
    pub population: F,
    pub coherence: F,
    pub theta: F,
    pub f_standard: F,
    pub f_rotated: F,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct IntervalSet<F> {
    pub population: Interval<F>,
    pub coherence: Interval<F>,
    pub theta: Interval<F>,
    pub f_standard: Interval<F>,
    pub f_rotated: Interval<F>,
    pub resamples: usize,
}

impl<F: Real> IntervalSet<F> {
    fn bound(&self, pick: impl Fn(&Interval<F>) -> F) -> Bounds<F> {
        Bounds {
            population: pick(&self.population),
            coherence: pick(&self.coherence),
            theta: pick(&self.theta),
            f_standard: pick(&self.f_standard),
            f_rotated: pick(&self.f_rotated),
        }
    }
}

/// Unclamped values kept when shot noise pushes an estimate out of range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Diagnostics<F> {
    pub raw_f_standard: F,
    pub raw_f_rotated: F,
    pub out_of_range: bool,
    pub low_signal: bool,
}

/// Which corrections produced the reported numbers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Mitigation<F> {
    pub rem: Option<ConfusionModel<F>>,
    pub dd: bool,
    /// Population before readout correction.
    pub raw_population: Option<F>,
    /// Readout-corrected population before clamping to `[0, 1]`.
    pub corrected_population: Option<F>,
    /// Factor the parities were divided by.
    pub parity_scale: Option<F>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct FidelityReport<F = f64> {
    pub population: F,
    pub coherence: F,
    pub theta: F,
    pub f_standard: F,
    pub f_rotated: F,
    pub ci_low: Option<Bounds<F>>,
    pub ci_high: Option<Bounds<F>>,
    pub gme_certified: bool,
    pub retained_fraction: Option<F>,
    pub diagnostics: Diagnostics<F>,
    pub mitigation: Option<Mitigation<F>>,
}

impl<F: Real> FidelityReport<F> {
    pub fn with_intervals(mut self, ci: &IntervalSet<F>) -> Self {
        self.ci_low = Some(ci.bound(|i| i.low));
        self.ci_high = Some(ci.bound(|i| i.high));
        self
    }

    pub fn with_retained_fraction(mut self, fraction: F) -> Self {
        self.retained_fraction = Some(fraction);
        self
    }

    pub fn with_mitigation(mut self, mitigation: Mitigation<F>) -> Self {
        self.mitigation = Some(mitigation);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn clamp_unit<F: Real>(x: F) -> F {
    x.max(F::zero()).min(F::one())
}

/// `f_rot = (P + C)/2`, `f_std = (P + C cos θ)/2`, both clamped to `[0, 1]`.
pub fn estimate_fidelity<F: Real>(population: F, recovery: &RecoveryResult<F>) -> Result<FidelityReport<F>> {
    if !(population >= F::zero() && population <= F::one()) {
        return Err(Error::InvalidProbability(format!("population {population} outside [0, 1]")));
    }
    if !(recovery.coherence >= F::zero()) {
        return Err(Error::InvalidConfig(format!("coherence {} is negative", recovery.coherence)));
    }
    let half = F::lit(0.5);
    let (c, theta) = (recovery.coherence, recovery.theta);
    let raw_rot = half * (population + c);
    let raw_std = half * (population + c * theta.cos());
    let (f_rotated, f_standard) = (clamp_unit(raw_rot), clamp_unit(raw_std));
    let mut report = FidelityReport {
        population,
        coherence: c,
        theta,
        f_standard,
        f_rotated,
        ci_low: None,
        ci_high: None,
        gme_certified: false,
        retained_fraction: None,
        diagnostics: Diagnostics {
            raw_f_standard: raw_std,
            raw_f_rotated: raw_rot,
            out_of_range: c > F::one() || raw_rot != f_rotated || raw_std != f_standard,
            low_signal: recovery.low_signal,
        },
        mitigation: None,
    };
    report.gme_certified = !recovery.low_signal && certify_gme(&report);
    Ok(report)
}

/// Strict `f_rotated > 1/2`.
pub fn certify_gme<F: Real>(report: &FidelityReport<F>) -> bool {
    report.f_rotated > F::lit(0.5)
}

/// Everything the bootstrap reruns per resample.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline<F> {
    pub recovery: RecoveryConfig<F>,
    pub n_max: usize,
    /// Readout model applied to both population and parities.
    pub readout: Option<ConfusionModel<F>>,
}

impl<F: Real> Pipeline<F> {
    pub fn plain(n_max: usize) -> Self {
        Self { recovery: RecoveryConfig::default(), n_max, readout: None }
    }

    pub fn population(&self, counts: &CountsTable) -> Result<F> {
        match &self.readout {
            Some(m) => rem_population(counts, m),
            None => Ok(F::lit(population_from_counts(counts)?)),
        }
    }

    pub fn parities(&self, samples: &[ParitySample<F>], n_data: usize) -> Result<Vec<ParitySample<F>>> {
        match &self.readout {
            Some(m) => {
                let scale = parity_scale(n_data, m)?;
                Ok(samples.iter().map(|s| ParitySample { parity: s.parity / scale, ..*s }).collect())
            }
            None => Ok(samples.to_vec()),
        }
    }

    /// Full estimate from raw parities and population counts.
    pub fn run(&self, samples: &[ParitySample<F>], counts: &CountsTable) -> Result<FidelityReport<F>> {
        Ok(self.run_detailed(samples, counts)?.0)
    }

    /// [`Pipeline::run`] that also returns the underlying recovery.
    pub fn run_detailed(
        &self,
        samples: &[ParitySample<F>],
        counts: &CountsTable,
    ) -> Result<(FidelityReport<F>, RecoveryResult<F>)> {
        let n_data = counts.bit_layout.data.len();
        let population = self.population(counts)?;
        let recovery = recover_coherence(&self.parities(samples, n_data)?, self.n_max, &self.recovery)?;
        let mut report = estimate_fidelity(clamp_unit(population), &recovery)?;
        if let Some(m) = &self.readout {
            report.mitigation = Some(Mitigation {
                rem: Some(*m),
                dd: false,
                raw_population: Some(F::lit(population_from_counts(counts)?)),
                corrected_population: Some(population),
                parity_scale: Some(parity_scale(n_data, m)?),
            });
        }
        Ok((report, recovery))
    }
}

fn binomial_fraction(rng: &mut crate::rng::StreamRng, trials: u64, p: f64) -> Result<f64> {
    let d = Binomial::new(trials, p.clamp(0.0, 1.0)).map_err(|e| Error::InvalidProbability(e.to_string()))?;
    Ok(d.sample(rng) as f64 / trials as f64)
}

/// Multinomial resample of a counts table via sequential conditional binomials.
pub fn resample_counts(counts: &CountsTable, rng: &mut crate::rng::StreamRng) -> Result<CountsTable> {
    let total = counts.total();
    let mut out = CountsTable { counts: Default::default(), ..counts.clone() };
    let mut left_shots = total;
    let mut left_mass = total;
    for (key, &c) in &counts.counts {
        if left_shots == 0 {
            break;
        }
        let draw = if c == left_mass {
            left_shots
        } else {
            Binomial::new(left_shots, c as f64 / left_mass as f64)
                .map_err(|e| Error::InvalidProbability(e.to_string()))?
                .sample(rng)
        };
        out.add(key.clone(), draw);
        left_shots -= draw;
        left_mass -= c;
    }
    Ok(out)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn interval<F: Real>(mut values: Vec<f64>, point: F) -> Interval<F> {
    values.sort_by(|a, b| a.total_cmp(b));
    let p = point.as_f64();
    Interval { low: F::lit(percentile(&values, 0.05).min(p)), high: F::lit(percentile(&values, 0.95).max(p)) }
}

/// Percentile (5th–95th) bootstrap. Each resample redraws every angle's
/// parity from `Binomial(shots, (1 + p̂)/2)` and the population counts
/// multinomially, then reruns `pipeline`. Resample `r` uses its own derived
/// seed, so the result does not depend on scheduling.
pub fn bootstrap_ci<F: Real>(
    samples: &[ParitySample<F>],
    population_counts: &CountsTable,
    resamples: usize,
    seed: u64,
    pipeline: &Pipeline<F>,
) -> Result<IntervalSet<F>> {
    if resamples < MIN_RESAMPLES {
        return Err(Error::InvalidConfig(format!("need at least {MIN_RESAMPLES} resamples, got {resamples}")));
    }
    let point = pipeline.run(samples, population_counts)?;
    let draws: Vec<Option<[f64; 5]>> = (0..resamples)
        .into_par_iter()
        .map(|r| -> Result<Option<[f64; 5]>> {
            let mut rng = stream_rng(derive_seed(seed, r as u64), 0);
            let mut resampled = Vec::with_capacity(samples.len());
            for s in samples {
                let p_even = 0.5 * (1.0 + s.parity.as_f64());
                let parity = 2.0 * binomial_fraction(&mut rng, s.shots.max(1), p_even)? - 1.0;
                resampled.push(ParitySample { phi: s.phi, parity: F::lit(parity), shots: s.shots });
            }
            let counts = resample_counts(population_counts, &mut rng)?;
            match pipeline.run(&resampled, &counts) {
                Ok(rep) => Ok(Some([
                    rep.population.as_f64(),
                    rep.coherence.as_f64(),
                    // unwrap around the point estimate so the interval does not straddle ±π
                    point.theta.as_f64() + wrap_angle(rep.theta - point.theta).as_f64(),
                    rep.f_standard.as_f64(),
                    rep.f_rotated.as_f64(),
                ])),
                Err(Error::DegenerateAngles { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let kept: Vec<[f64; 5]> = draws.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::EmptyInput("every bootstrap resample failed".into()));
    }
    let column = |i: usize| kept.iter().map(|d| d[i]).collect::<Vec<_>>();
    Ok(IntervalSet {
        population: interval(column(0), point.population),
        coherence: interval(column(1), point.coherence),
        theta: interval(column(2), point.theta),
        f_standard: interval(column(3), point.f_standard),
        f_rotated: interval(column(4), point.f_rotated),
        resamples: kept.len(),
    })
}
