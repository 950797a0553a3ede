//! Exact density-matrix evolution as an oracle for the trajectory backend.

use ghzcs::circuit::{
    attach_flag_checks, attach_parity_measurement, attach_z_measurement, build_ghz_tree, insert_dd, Circuit, GateKind,
};
use ghzcs::coverage::greedy_flag_placement;
use ghzcs::simulate::{
    parity_expectation_from_counts, population_from_counts, postselect_flags, run_statevector_trajectories, NoiseModel,
};
use num_complex::Complex64 as C;

type Mat2 = [[C; 2]; 2];

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn paulis() -> [Mat2; 4] {
    let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    [[[l, o], [o, l]], [[o, l], [l, o]], [[o, -i], [i, o]], [[l, o], [o, -l]]]
}

struct Density {
    dim: usize,
    rho: Vec<C>,
}

impl Density {
    fn new(n: usize) -> Self {
        let dim = 1 << n;
        let mut rho = vec![c(0.0, 0.0); dim * dim];
        rho[0] = c(1.0, 0.0);
        Self { dim, rho }
    }

    /// `ρ ← U ρ U†` for `U` acting on qubit `q`.
    fn unitary(&mut self, q: usize, u: &Mat2) {
        let (d, bit) = (self.dim, 1 << q);
        for col in 0..d {
            for r in (0..d).filter(|r| r & bit == 0) {
                let (a, b) = (self.rho[r * d + col], self.rho[(r | bit) * d + col]);
                self.rho[r * d + col] = u[0][0] * a + u[0][1] * b;
                self.rho[(r | bit) * d + col] = u[1][0] * a + u[1][1] * b;
            }
        }
        for row in 0..d {
            for s in (0..d).filter(|s| s & bit == 0) {
                let (a, b) = (self.rho[row * d + s], self.rho[row * d + (s | bit)]);
                self.rho[row * d + s] = a * u[0][0].conj() + b * u[0][1].conj();
                self.rho[row * d + (s | bit)] = a * u[1][0].conj() + b * u[1][1].conj();
            }
        }
    }

    fn cnot(&mut self, control: usize, target: usize) {
        let d = self.dim;
        let p = |i: usize| if i >> control & 1 == 1 { i ^ (1 << target) } else { i };
        let old = self.rho.clone();
        for i in 0..d {
            for j in 0..d {
                self.rho[i * d + j] = old[p(i) * d + p(j)];
            }
        }
    }

    /// `(1 − p) ρ + p/4^k Σ_P P ρ P` over all Paulis on `qubits`.
    fn depolarize(&mut self, qubits: &[usize], p: f64) {
        if p == 0.0 {
            return;
        }
        let k = qubits.len();
        let mut acc = vec![c(0.0, 0.0); self.rho.len()];
        for code in 0..(1usize << (2 * k)) {
            let mut term = Density { dim: self.dim, rho: self.rho.clone() };
            for (slot, &q) in qubits.iter().enumerate() {
                term.unitary(q, &paulis()[code >> (2 * slot) & 3]);
            }
            for (a, t) in acc.iter_mut().zip(&term.rho) {
                *a += t;
            }
        }
        let w = p / (1usize << (2 * k)) as f64;
        for (r, a) in self.rho.iter_mut().zip(acc) {
            *r = *r * (1.0 - p) + a * w;
        }
    }

    fn run(circuit: &Circuit, noise: &NoiseModel) -> Self {
        let mut d = Density::new(circuit.n_qubits());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for g in circuit.gates() {
            let q = g.qubits[0];
            match g.kind {
                GateKind::MeasureZ => continue,
                GateKind::Cnot => d.cnot(q, g.qubits[1]),
                GateKind::H => d.unitary(q, &[[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]),
                GateKind::X => d.unitary(q, &paulis()[1]),
                GateKind::Rz => {
                    let t = g.angle.unwrap() / 2.0;
                    d.unitary(q, &[[C::from_polar(1.0, -t), c(0.0, 0.0)], [c(0.0, 0.0), C::from_polar(1.0, t)]]);
                }
                GateKind::Ry => {
                    let (s, co) = (g.angle.unwrap() / 2.0).sin_cos();
                    d.unitary(q, &[[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]);
                }
            }
            let p = if g.qubits.len() == 2 { noise.p_2q } else { noise.p_1q };
            d.depolarize(&g.qubits, p);
        }
        d
    }

    /// Outcome distribution over `measured` (bit `k` = `measured[k]`), with
    /// independent readout flips.
    fn outcomes(&self, measured: &[usize], p_ro: f64) -> Vec<f64> {
        let mut out = vec![0.0; 1 << measured.len()];
        for i in 0..self.dim {
            let o = measured.iter().enumerate().fold(0, |acc, (k, &q)| acc | ((i >> q & 1) << k));
            out[o] += self.rho[i * self.dim + i].re;
        }
        for k in 0..measured.len() {
            let old = out.clone();
            for (o, v) in out.iter_mut().enumerate() {
                *v = (1.0 - p_ro) * old[o] + p_ro * old[o ^ (1 << k)];
            }
        }
        out
    }
}

struct Exact {
    parity: f64,
    population: f64,
    retained: f64,
}

fn exact(circuit: &Circuit, noise: &NoiseModel) -> Exact {
    let measured = circuit.measured_qubits();
    let n_data = measured.iter().filter(|&&q| q < circuit.n_data()).count();
    let probs = Density::run(circuit, noise).outcomes(&measured, noise.p_ro);
    let data_mask = (1usize << n_data) - 1;
    let (mut kept, mut parity, mut population) = (0.0, 0.0, 0.0);
    for (o, &p) in probs.iter().enumerate() {
        if o >> n_data != 0 {
            continue;
        }
        kept += p;
        let data = o & data_mask;
        parity += if data.count_ones().is_multiple_of(2) { p } else { -p };
        if data == 0 || data == data_mask {
            population += p;
        }
    }
    Exact { parity: parity / kept, population: population / kept, retained: kept }
}

fn base(n: usize, k: usize, dd: bool) -> Circuit {
    let (prep, tree) = build_ghz_tree(n).unwrap();
    let plan = greedy_flag_placement(&tree, k);
    let c = attach_flag_checks(&prep, &tree, &plan.pairs).unwrap();
    if dd {
        insert_dd(&c)
    } else {
        c
    }
}

const SHOTS: u64 = 40_000;
/// Bound in standard errors, loose enough for the number of comparisons made.
const Z_MAX: f64 = 4.0;

#[test]
fn oracle_reproduces_ideal_ghz() {
    let c = attach_parity_measurement(&base(4, 0, false), 0.0).unwrap();
    let e = exact(&c, &NoiseModel::noiseless());
    assert!((e.parity - 1.0).abs() < 1e-12 && e.retained == 1.0);
    let c = attach_z_measurement(&base(4, 0, false)).unwrap();
    assert!((exact(&c, &NoiseModel::noiseless()).population - 1.0).abs() < 1e-12);
}

#[test]
fn trajectory_parities_match_density_matrix() {
    let noise = NoiseModel::new(0.01, 0.05, 0.02, 0.0).unwrap();
    let cases = [(3, 1, false), (4, 2, false), (5, 0, false), (4, 1, true)];
    for (case, &(n, k, dd)) in cases.iter().enumerate() {
        for (j, phi) in [0.0, 0.4, 1.3, 2.9].into_iter().enumerate() {
            let circuit = attach_parity_measurement(&base(n, k, dd), phi).unwrap();
            let want = exact(&circuit, &noise);
            let counts =
                run_statevector_trajectories(&circuit, &noise, SHOTS, 1000 + 10 * case as u64 + j as u64).unwrap();
            let post = postselect_flags(&counts).unwrap();
            let (parity, kept) = parity_expectation_from_counts(&post.counts).unwrap();
            let sigma = ((1.0 - want.parity * want.parity) / kept as f64).sqrt();
            assert!(
                (parity - want.parity).abs() <= Z_MAX * sigma,
                "n={n} k={k} dd={dd} phi={phi}: {parity} vs {}",
                want.parity
            );
            let r_sigma = (want.retained * (1.0 - want.retained) / SHOTS as f64).sqrt().max(1e-12);
            assert!((post.retained_fraction - want.retained).abs() <= Z_MAX * r_sigma);
        }
    }
}

#[test]
fn trajectory_population_matches_density_matrix() {
    let noise = NoiseModel::new(0.01, 0.05, 0.02, 0.0).unwrap();
    for (n, k) in [(3, 1), (5, 0), (4, 2)] {
        let circuit = attach_z_measurement(&base(n, k, false)).unwrap();
        let want = exact(&circuit, &noise);
        let counts = run_statevector_trajectories(&circuit, &noise, SHOTS, 77 + n as u64).unwrap();
        let post = postselect_flags(&counts).unwrap();
        let got = population_from_counts(&post.counts).unwrap();
        let sigma = (want.population * (1.0 - want.population) / post.counts.total() as f64).sqrt();
        assert!((got - want.population).abs() <= Z_MAX * sigma, "n={n} k={k}: {got} vs {}", want.population);
    }
}

#[test]
fn flags_raise_postselected_parity() {
    let noise = NoiseModel::depolarizing(0.0, 0.05).unwrap();
    let raw = exact(&attach_parity_measurement(&base(4, 0, false), 0.0).unwrap(), &noise);
    let flagged = exact(&attach_parity_measurement(&base(4, 2, false), 0.0).unwrap(), &noise);
    assert!(flagged.retained < 1.0);
    assert!(flagged.parity > raw.parity, "{} vs {}", flagged.parity, raw.parity);
    assert!(flagged.population > raw.population);
}
