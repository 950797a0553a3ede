use std::collections::BTreeSet;
use std::f64::consts::PI;

use ghzcs::circuit::{
    attach_flag_checks, attach_parity_measurement, attach_z_measurement, build_ghz_tree, insert_dd, Circuit, PrepTree,
};
use ghzcs::coverage::{coverage_set, greedy_flag_placement};
use ghzcs::fidelity::estimate_fidelity;
use ghzcs::mitigate::{rem_parity, rem_population, ConfusionModel};
use ghzcs::recover::{
    alpha_max, build_measurement_matrix, detect_support, lasso_fit, recover_coherence, sample_angles,
    CoefficientVector, RecoveryConfig, RecoveryResult,
};
use ghzcs::simulate::{
    population_from_counts, postselect_flags, run_statevector_trajectories, CountsTable, NoiseModel, ParitySample,
};
use proptest::prelude::*;

fn tree_from(n: usize, seeds: &[u64]) -> PrepTree {
    let parent = (0..n).map(|v| if v == 0 { None } else { Some((seeds[v] % v as u64) as usize) }).collect();
    PrepTree::from_parents(parent).unwrap()
}

fn flagged(n: usize, k: usize) -> Circuit {
    let (prep, tree) = build_ghz_tree(n).unwrap();
    let plan = greedy_flag_placement(&tree, k);
    attach_flag_checks(&prep, &tree, &plan.pairs).unwrap()
}

fn result(c: f64, theta: f64) -> RecoveryResult<f64> {
    RecoveryResult {
        n_rec: 3,
        a: c * theta.cos(),
        b: c * theta.sin(),
        coherence: c,
        theta,
        alpha_used: 0.0,
        m_samples: 10,
        residual_norm: 0.0,
        low_signal: false,
        converged: true,
        sample_mean: 0.0,
        lasso_magnitude: c,
    }
}

fn counts_strategy(n_data: usize, n_flags: usize) -> impl Strategy<Value = CountsTable> {
    let n_bits = n_data + n_flags;
    prop::collection::btree_map(prop::collection::vec(any::<bool>(), n_bits), 1u64..500, 1..12).prop_map(move |m| {
        let mut t = CountsTable::new(n_data, n_flags);
        for (bits, c) in m {
            t.add(bits.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>(), c);
        }
        t
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn attach_is_append_only(n in 2usize..12, k in 0usize..3, phi in 0.0..2.0 * PI) {
        let (prep, tree) = build_ghz_tree(n).unwrap();
        let plan = greedy_flag_placement(&tree, k);
        let f = attach_flag_checks(&prep, &tree, &plan.pairs).unwrap();
        prop_assert_eq!(&f.gates()[..prep.gates().len()], prep.gates());
        for c in [attach_parity_measurement(&f, phi).unwrap(), attach_z_measurement(&f).unwrap()] {
            prop_assert_eq!(&c.gates()[..f.gates().len()], f.gates());
            prop_assert!(c.validate().is_ok());
        }
    }

    #[test]
    fn circuit_json_roundtrip(n in 2usize..16, k in 0usize..3, phi in 0.0..2.0 * PI, dd in any::<bool>()) {
        let mut c = attach_parity_measurement(&flagged(n, k), phi).unwrap();
        if dd {
            c = insert_dd(&c);
        }
        prop_assert_eq!(Circuit::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn coverage_symmetric_and_bounded(n in 2usize..24, seeds in prop::collection::vec(any::<u64>(), 24), x in any::<u64>()) {
        let tree = tree_from(n, &seeds);
        let i = (x % n as u64) as usize;
        let j = ((x >> 16) % n as u64) as usize;
        prop_assume!(i != j);
        let a = coverage_set(&tree, i, j).unwrap();
        let b = coverage_set(&tree, j, i).unwrap();
        prop_assert_eq!(&a.covered, &b.covered);
        prop_assert!(a.ratio <= 1.0 && a.ratio >= 2.0 / n as f64);
    }

    #[test]
    fn greedy_gains_non_increasing(n in 3usize..20, seeds in prop::collection::vec(any::<u64>(), 20), k in 1usize..5) {
        let plan = greedy_flag_placement(&tree_from(n, &seeds), k);
        prop_assert!(plan.marginal_gains.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(plan.marginal_gains.iter().sum::<usize>(), plan.covered_count());
    }

    #[test]
    fn postselection_keeps_data_bits(t in counts_strategy(3, 2)) {
        match postselect_flags(&t) {
            Ok(p) => {
                prop_assert!(p.counts.total() <= t.total());
                let expected: u64 = t.counts.iter().filter(|(k, _)| k.ends_with("00")).map(|(_, c)| c).sum();
                prop_assert_eq!(p.counts.total(), expected);
                for (k, &c) in &p.counts.counts {
                    let src = format!("{k}00");
                    prop_assert_eq!(t.counts.get(&src).copied(), Some(c));
                }
            }
            Err(ghzcs::Error::EmptyPostselection { .. }) => {
                prop_assert!(t.counts.keys().all(|k| !k.ends_with("00")));
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn merge_commutes_and_associates(a in counts_strategy(3, 0), b in counts_strategy(3, 0), c in counts_strategy(3, 0)) {
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        prop_assert_eq!(&ab, &ba);
        let mut ab_c = ab.clone();
        ab_c.merge(&c);
        let mut bc = b.clone();
        bc.merge(&c);
        let mut a_bc = a.clone();
        a_bc.merge(&bc);
        prop_assert_eq!(ab_c, a_bc);
    }

    #[test]
    fn rem_without_errors_is_identity(t in counts_strategy(4, 0), parity in -1.0f64..1.0, n in 1usize..40) {
        let m = ConfusionModel::symmetric(0.0).unwrap();
        prop_assert!((rem_population(&t, &m).unwrap() - population_from_counts(&t).unwrap()).abs() < 1e-12);
        prop_assert_eq!(rem_parity(parity, n, &m).unwrap(), parity);
    }

    #[test]
    fn rem_parity_inverts_flip_attenuation(p in 0.0f64..0.05, n in 1usize..40, parity in -1.0f64..1.0) {
        let m = ConfusionModel::symmetric(p).unwrap();
        let observed = parity * (1.0 - 2.0 * p).powi(n as i32);
        prop_assert!((rem_parity(observed, n, &m).unwrap() - parity).abs() < 1e-12);
    }

    #[test]
    fn lasso_scale_equivariant(m in 6usize..20, n in 2usize..20, c in 0.2f64..1.0, theta in -PI..PI, s in 0.1f64..10.0, seed in 0u64..500) {
        let phis: Vec<f64> = sample_angles(m, seed).unwrap();
        let a = build_measurement_matrix(&phis, n + 4).unwrap();
        let y: Vec<f64> = phis.iter().map(|&p| c * (n as f64 * p + theta).cos()).collect();
        let ys: Vec<f64> = y.iter().map(|v| s * v).collect();
        let alpha = 0.1 * alpha_max(&a, &y);
        let fit = lasso_fit(&a, &y, alpha).unwrap();
        let scaled = lasso_fit(&a, &ys, s * alpha).unwrap();
        prop_assert_eq!(detect_support(&fit.coeffs).unwrap(), detect_support(&scaled.coeffs).unwrap());
        for (u, v) in fit.coeffs.flat().iter().zip(scaled.coeffs.flat()) {
            prop_assert!((s * u - v).abs() < 1e-12 * s.max(1.0));
        }
    }

    #[test]
    fn support_depends_only_on_magnitudes(mags in prop::collection::vec(0.0f64..1.0, 1..30), rot in prop::collection::vec(-PI..PI, 30), shift in 0usize..30) {
        let n = mags.len();
        let pick = |mags: &[f64], rot: &[f64]| {
            let coeffs = CoefficientVector {
                a: mags.iter().zip(rot).map(|(m, r)| m * r.cos()).collect(),
                b: mags.iter().zip(rot).map(|(m, r)| m * r.sin()).collect(),
            };
            detect_support(&coeffs).unwrap()
        };
        let base = pick(&mags, &vec![0.0; n]);
        prop_assert_eq!(pick(&mags, &rot[..n]), base);
        // cyclic relabeling moves the argmax with the labels when it is unique
        let top = mags.iter().cloned().fold(f64::MIN, f64::max);
        if mags.iter().filter(|&&m| m == top).count() == 1 && top >= 1e-12 {
            let rolled: Vec<f64> = (0..n).map(|i| mags[(i + n - shift % n) % n]).collect();
            let moved = pick(&rolled, &vec![0.0; n]);
            prop_assert_eq!(moved.frequency, (base.frequency - 1 + shift % n) % n + 1);
        }
    }

    #[test]
    fn ols_debiases_lasso(m in 15usize..30, n in 2usize..30, c in 0.1f64..1.0, theta in -PI..PI, seed in 0u64..500) {
        let phis: Vec<f64> = sample_angles(m, seed).unwrap();
        let samples: Vec<ParitySample> = phis.iter().map(|&phi| ParitySample { phi, parity: c * (n as f64 * phi + theta).cos(), shots: 1 }).collect();
        let r = recover_coherence(&samples, n + 8, &RecoveryConfig::default()).unwrap();
        prop_assume!(r.n_rec == n);
        prop_assert!(r.lasso_magnitude <= r.coherence + 1e-12);
        prop_assert!((r.coherence - c).abs() < 1e-9);
    }

    #[test]
    fn fidelity_orderings(p in 0.0f64..=1.0, c in 0.0f64..1.0, theta in -PI..PI, dp in 1e-6f64..0.1, dc in 1e-6f64..0.1) {
        let r = estimate_fidelity(p, &result(c, theta)).unwrap();
        prop_assert!(r.diagnostics.raw_f_standard <= r.diagnostics.raw_f_rotated + 1e-15);
        prop_assert!(r.f_standard <= r.f_rotated);
        if c > 1e-3 && theta.abs() > 1e-3 {
            prop_assert!(r.diagnostics.raw_f_standard < r.diagnostics.raw_f_rotated);
        }
        let zero = estimate_fidelity(p, &result(c, 0.0)).unwrap();
        prop_assert_eq!(zero.diagnostics.raw_f_standard, zero.diagnostics.raw_f_rotated);
        // certification ignores theta at fixed P and C
        prop_assert_eq!(r.gme_certified, zero.gme_certified);
        if p + dp <= 1.0 {
            let up = estimate_fidelity(p + dp, &result(c, theta)).unwrap();
            prop_assert!(up.diagnostics.raw_f_rotated > r.diagnostics.raw_f_rotated);
        }
        let up = estimate_fidelity(p, &result(c + dc, theta)).unwrap();
        prop_assert!(up.diagnostics.raw_f_rotated > r.diagnostics.raw_f_rotated);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn trajectories_deterministic(n in 2usize..7, k in 0usize..2, seed in any::<u64>(), phi in 0.0..PI) {
        let c = attach_parity_measurement(&flagged(n, k), phi).unwrap();
        let noise = NoiseModel::new(0.005, 0.03, 0.01, 0.0).unwrap();
        let a = run_statevector_trajectories(&c, &noise, 500, seed).unwrap();
        prop_assert_eq!(&a, &run_statevector_trajectories(&c, &noise, 500, seed).unwrap());
        prop_assert_eq!(a.total(), 500);
        prop_assert!(a.counts.keys().all(|key| key.len() == a.n_bits));
    }
}

#[test]
fn coverage_subsets_are_nested() {
    let (_, tree) = build_ghz_tree(12).unwrap();
    let mut last: BTreeSet<usize> = BTreeSet::new();
    for k in 0..6 {
        let plan = greedy_flag_placement(&tree, k);
        assert!(last.is_subset(&plan.union_covered));
        last = plan.union_covered;
    }
}
