//! Monte-Carlo trajectory backend.
//!
//! Each shot samples a depolarizing error pattern, evolves the exact
//! statevector with those Pauli insertions and draws one measurement record.
//! Shots that share an error pattern share a single evolution, which makes
//! low-noise runs cost roughly one simulation per distinct fault.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::counts::CountsTable;
use super::statevector::{Pauli, StateVector, MAX_QUBITS};
use super::NoiseModel;
use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};

/// `(gate index, Pauli code)`; for two-qubit gates the code is `a + 4b` with
/// `a` acting on the first operand and `b` on the second.
type ErrorPattern = Vec<(u32, u8)>;

struct Program<'a> {
    gates: &'a [Gate],
    /// Probability that a non-identity Pauli follows each gate.
    fault_p: Vec<f64>,
    measured: Vec<usize>,
    n_data_measured: usize,
    n_qubits: usize,
}

impl<'a> Program<'a> {
    fn compile(circuit: &'a Circuit, noise: &NoiseModel) -> Result<Self> {
        let n = circuit.n_qubits();
        if n > MAX_QUBITS {
            return Err(Error::ResourceLimit(format!(
                "trajectory backend limited to {MAX_QUBITS} qubits, circuit has {n}"
            )));
        }
        let mut measured_at = vec![None; n];
        for (i, g) in circuit.gates().iter().enumerate() {
            for &q in &g.qubits {
                if measured_at[q].is_some() {
                    return Err(Error::MalformedCircuit(format!("qubit {q} is used after its measurement (gate {i})")));
                }
            }
            if g.is_measurement() {
                measured_at[g.qubits[0]] = Some(i);
            }
        }
        // Depolarizing channel (1 - p) ρ + p I/d: a uniformly random
        // non-identity Pauli with probability p (d² - 1) / d².
        let fault_p = circuit
            .gates()
            .iter()
            .map(|g| {
                if g.is_measurement() {
                    0.0
                } else if g.is_two_qubit() {
                    noise.p_2q * 15.0 / 16.0
                } else {
                    noise.p_1q * 3.0 / 4.0
                }
            })
            .collect();
        let measured = circuit.measured_qubits();
        let n_data_measured = measured.iter().filter(|&&q| q < circuit.n_data()).count();
        Ok(Self { gates: circuit.gates(), fault_p, measured, n_data_measured, n_qubits: n })
    }

    fn sample_pattern(&self, rng: &mut StreamRng) -> ErrorPattern {
        let mut pattern = Vec::new();
        for (i, (&p, g)) in self.fault_p.iter().zip(self.gates).enumerate() {
            if p > 0.0 && rng.random::<f64>() < p {
                let code = if g.is_two_qubit() { rng.random_range(1..16u8) } else { rng.random_range(1..4u8) };
                pattern.push((i as u32, code));
            }
        }
        pattern
    }

    fn first_fault(&self, pattern: &ErrorPattern) -> usize {
        pattern.first().map_or(self.gates.len(), |&(at, _)| at as usize)
    }

    /// Continues `psi`, which has gates `..start` applied, to the end of the
    /// circuit with the faults of `pattern` (all at or after `start`).
    fn evolve_from(&self, mut psi: StateVector, start: usize, pattern: &ErrorPattern) -> StateVector {
        let mut faults = pattern.iter().peekable();
        for (i, g) in self.gates.iter().enumerate().skip(start) {
            psi.apply(g);
            while let Some(&&(at, code)) = faults.peek() {
                if at as usize != i {
                    break;
                }
                psi.pauli(g.qubits[0], Pauli::from_code(code));
                if g.is_two_qubit() {
                    psi.pauli(g.qubits[1], Pauli::from_code(code >> 2));
                }
                faults.next();
            }
        }
        psi
    }

    /// Maps `f` over the final state of every group, in group order.
    ///
    /// Patterns are visited in order of their first fault so the noiseless
    /// prefix is simulated once per chunk rather than once per pattern.
    fn map_evolved<T, R>(&self, groups: &[(ErrorPattern, T)], f: impl Fn(&StateVector, &T) -> R + Sync) -> Vec<R>
    where
        T: Sync,
        R: Send,
    {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by_key(|&i| (self.first_fault(&groups[i].0), i));
        let chunk = order.len().div_ceil(4 * rayon::current_num_threads()).max(1);
        let mut out: Vec<(usize, R)> = order
            .par_chunks(chunk)
            .flat_map_iter(|idx| {
                let mut cursor = StateVector::zero(self.n_qubits).expect("size checked at compile");
                let mut applied = 0;
                idx.iter()
                    .map(|&i| {
                        let (pattern, data) = &groups[i];
                        let start = self.first_fault(pattern);
                        for g in &self.gates[applied..start] {
                            cursor.apply(g);
                        }
                        applied = start;
                        let psi = self.evolve_from(cursor.clone(), start, pattern);
                        (i, f(&psi, data))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        out.sort_by_key(|&(i, _)| i);
        out.into_iter().map(|(_, r)| r).collect()
    }

    /// Groups trajectory indices by their sampled error pattern.
    fn group(&self, count: u64, seed: u64) -> Vec<(ErrorPattern, Vec<u64>)> {
        let mut groups: HashMap<ErrorPattern, Vec<u64>> = HashMap::new();
        for t in 0..count {
            let mut rng = stream_rng(seed, t);
            groups.entry(self.sample_pattern(&mut rng)).or_default().push(t);
        }
        let mut groups: Vec<_> = groups.into_iter().collect();
        groups.sort_by_key(|(_, shots)| shots[0]);
        groups
    }
}

/// Samples `shots` measurement records of `circuit` under `noise`.
///
/// Measurements are deferred to the end of the circuit, so a measured qubit
/// must not be acted on afterwards. Readout bits are flipped independently
/// with probability `noise.p_ro`. Bit positions follow the measured qubits in
/// ascending order (data qubits, then flags).
pub fn run_statevector_trajectories(
    circuit: &Circuit,
    noise: &NoiseModel,
    shots: u64,
    seed: u64,
) -> Result<CountsTable> {
    noise.validate()?;
    if shots == 0 {
        return Err(Error::InvalidConfig("shots must be at least 1".into()));
    }
    let program = Program::compile(circuit, noise)?;
    if program.measured.is_empty() {
        return Err(Error::MalformedCircuit("circuit measures no qubits".into()));
    }
    let n_bits = program.measured.len();
    let empty = CountsTable::new(program.n_data_measured, n_bits - program.n_data_measured);
    let groups = program.group(shots, seed);
    let table = program
        .map_evolved(&groups, |psi, members| {
            let probs = psi.marginal_probabilities(&program.measured);
            let mut cdf = Vec::with_capacity(probs.len());
            let mut acc = 0.0;
            for p in probs {
                acc += p;
                cdf.push(acc);
            }
            let mut local: HashMap<usize, u64> = HashMap::new();
            let mut part = empty.clone();
            for &shot in members {
                let mut rng = stream_rng(seed, shot);
                program.sample_pattern(&mut rng);
                let u = rng.random::<f64>() * acc;
                let mut outcome = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                if noise.p_ro > 0.0 {
                    for k in 0..n_bits {
                        if rng.random::<f64>() < noise.p_ro {
                            outcome ^= 1 << k;
                        }
                    }
                }
                *local.entry(outcome).or_insert(0) += 1;
            }
            for (outcome, c) in local {
                let key: String = (0..n_bits).map(|k| if outcome >> k & 1 == 1 { '1' } else { '0' }).collect();
                part.add(key, c);
            }
            part
        })
        .into_iter()
        .fold(empty.clone(), |mut a, b| {
            a.merge(&b);
            a
        });
    Ok(table)
}

/// Trajectory estimate of the GHZ coherence `2 |⟨0…0|ρ|1…1⟩|` of a
/// preparation circuit (no flags, no measurements).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherenceEstimate {
    pub coherence: f64,
    /// Monte-Carlo standard error of `coherence`.
    pub std_error: f64,
    pub trajectories: u64,
}

pub fn trajectory_coherence(
    circuit: &Circuit,
    noise: &NoiseModel,
    trajectories: u64,
    seed: u64,
) -> Result<CoherenceEstimate> {
    noise.validate()?;
    if circuit.n_flags() > 0 || !circuit.measured_qubits().is_empty() {
        return Err(Error::InvalidConfig(
            "coherence estimation expects an unmeasured preparation circuit without flags".into(),
        ));
    }
    if trajectories < 2 {
        return Err(Error::InvalidConfig("need at least 2 trajectories".into()));
    }
    let program = Program::compile(circuit, noise)?;
    let last = (1usize << circuit.n_data()) - 1;
    let groups = program.group(trajectories, seed);
    let values: Vec<(Complex64, u64)> = program.map_evolved(&groups, |psi, members| {
        let a = psi.amplitudes();
        (2.0 * a[0] * a[last].conj(), members.len() as u64)
    });
    let t = trajectories as f64;
    let mean: Complex64 = values.iter().map(|(v, c)| v * *c as f64).sum::<Complex64>() / t;
    let coherence = mean.norm();
    let dir = if coherence > 0.0 { mean / coherence } else { Complex64::new(1.0, 0.0) };
    let var = values
        .iter()
        .map(|(v, c)| {
            let d = (v * dir.conj()).re - coherence;
            d * d * *c as f64
        })
        .sum::<f64>()
        / (t - 1.0);
    Ok(CoherenceEstimate { coherence, std_error: (var / t).sqrt(), trajectories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{attach_flag_checks, attach_parity_measurement, attach_z_measurement, build_ghz_tree};
    use crate::simulate::counts::parity_expectation_from_counts;

    #[test]
    fn noiseless_ghz_populations() {
        let (c, _) = build_ghz_tree(3).unwrap();
        let c = attach_z_measurement(&c).unwrap();
        let shots = 4000;
        let t = run_statevector_trajectories(&c, &NoiseModel::noiseless(), shots, 11).unwrap();
        assert_eq!(t.total(), shots);
        assert_eq!(t.counts.len(), 2);
        let zeros = t.counts["000"] as f64;
        let sigma = (shots as f64 * 0.25).sqrt();
        assert!((zeros - 2000.0).abs() < 5.0 * sigma);
        assert_eq!(t.counts["000"] + t.counts["111"], shots);
    }

    #[test]
    fn noiseless_parity_follows_cosine() {
        let (c, _) = build_ghz_tree(5).unwrap();
        for (j, phi) in [0.0, 0.13, 0.4, 1.1, 2.9].into_iter().enumerate() {
            let m = attach_parity_measurement(&c, phi).unwrap();
            let shots = 3000;
            let t = run_statevector_trajectories(&m, &NoiseModel::noiseless(), shots, j as u64).unwrap();
            let (parity, _) = parity_expectation_from_counts(&t).unwrap();
            let expect = (5.0 * phi).cos();
            let sigma = ((1.0 - expect * expect) / shots as f64).sqrt().max(1e-9);
            assert!((parity - expect).abs() <= 5.0 * sigma + 1e-12, "phi={phi}: {parity} vs {expect}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (c, t) = build_ghz_tree(4).unwrap();
        let c = attach_flag_checks(&c, &t, &[(2, 3)]).unwrap();
        let c = attach_parity_measurement(&c, 0.7).unwrap();
        let noise = NoiseModel::new(0.01, 0.05, 0.01, 0.0).unwrap();
        let a = run_statevector_trajectories(&c, &noise, 2000, 99).unwrap();
        let b = run_statevector_trajectories(&c, &noise, 2000, 99).unwrap();
        let d = run_statevector_trajectories(&c, &noise, 2000, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
        assert_eq!(a.bit_layout.flags, vec![4]);
    }

    #[test]
    fn flags_stay_silent_without_noise() {
        let (c, t) = build_ghz_tree(6).unwrap();
        let c = attach_flag_checks(&c, &t, &[(3, 5), (1, 4)]).unwrap();
        let c = attach_z_measurement(&c).unwrap();
        let table = run_statevector_trajectories(&c, &NoiseModel::noiseless(), 500, 1).unwrap();
        assert!(table.counts.keys().all(|k| k.ends_with("00")));
    }

    #[test]
    fn rejects_large_and_reused_measurement() {
        let (c, _) = build_ghz_tree(21).unwrap();
        let c = attach_z_measurement(&c).unwrap();
        assert!(matches!(
            run_statevector_trajectories(&c, &NoiseModel::noiseless(), 1, 0),
            Err(Error::ResourceLimit(_))
        ));
        let mut bad = Circuit::new(2);
        bad.push_layer(vec![Gate::measure(0)]).unwrap();
        bad.push_layer(vec![Gate::h(0)]).unwrap();
        assert!(run_statevector_trajectories(&bad, &NoiseModel::noiseless(), 1, 0).is_err());
    }

    #[test]
    fn coherence_of_noiseless_tree_is_one() {
        let (c, _) = build_ghz_tree(6).unwrap();
        let e = trajectory_coherence(&c, &NoiseModel::noiseless(), 10, 0).unwrap();
        assert!((e.coherence - 1.0).abs() < 1e-12);
        assert!(e.std_error < 1e-12);
    }
}
