//! Parity-check coverage on the preparation tree and flag-pair selection.
//!
//! The coverage of a check on qubits `(i, j)` is the set of nodes on the tree
//! paths from `i` and from `j` up to their lowest common ancestor, with the
//! ancestor counted once. Selecting `k` checks that maximize the size of the
//! union is a max-coverage problem; [`greedy_flag_placement`] is the standard
//! `(1 - 1/e)` approximation and [`brute_force_optimal`] is the exact
//! optimum for small instances.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::PrepTree;
use crate::error::{Error, Result};

/// Largest tree accepted by [`brute_force_optimal`].
pub const BRUTE_FORCE_MAX_N: usize = 16;
/// Largest check count accepted by [`brute_force_optimal`].
pub const BRUTE_FORCE_MAX_K: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSet {
    pub pair: (usize, usize),
    pub covered: BTreeSet<usize>,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagPlan {
    /// Pairs in selection order.
    pub pairs: Vec<(usize, usize)>,
    #[serde(rename = "covered")]
    pub union_covered: BTreeSet<usize>,
    pub total_ratio: f64,
    /// Newly covered qubit count contributed by each pair.
    pub marginal_gains: Vec<usize>,
}

impl FlagPlan {
    fn empty() -> Self {
        Self { pairs: Vec::new(), union_covered: BTreeSet::new(), total_ratio: 0.0, marginal_gains: Vec::new() }
    }

    pub fn covered_count(&self) -> usize {
        self.union_covered.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

fn check_index(tree: &PrepTree, q: usize) -> Result<()> {
    if q >= tree.n() {
        return Err(Error::InvalidIndex { index: q, count: tree.n() });
    }
    Ok(())
}

pub fn lca(tree: &PrepTree, i: usize, j: usize) -> Result<usize> {
    check_index(tree, i)?;
    check_index(tree, j)?;
    Ok(lca_unchecked(tree, i, j))
}

fn lca_unchecked(tree: &PrepTree, mut i: usize, mut j: usize) -> usize {
    while tree.depth(i) > tree.depth(j) {
        i = tree.parent(i).expect("non-root has a parent");
    }
    while tree.depth(j) > tree.depth(i) {
        j = tree.parent(j).expect("non-root has a parent");
    }
    while i != j {
        i = tree.parent(i).expect("non-root has a parent");
        j = tree.parent(j).expect("non-root has a parent");
    }
    i
}

/// Visits every node on the `i`–`j` path exactly once.
fn for_each_on_path(tree: &PrepTree, i: usize, j: usize, mut visit: impl FnMut(usize)) {
    let top = lca_unchecked(tree, i, j);
    for start in [i, j] {
        let mut v = start;
        while v != top {
            visit(v);
            v = tree.parent(v).expect("path stays below the ancestor");
        }
    }
    visit(top);
}

pub fn coverage_set(tree: &PrepTree, i: usize, j: usize) -> Result<CoverageSet> {
    check_index(tree, i)?;
    check_index(tree, j)?;
    if i == j {
        return Err(Error::InvalidPair(i, j, "qubits must differ".into()));
    }
    let mut covered = BTreeSet::new();
    for_each_on_path(tree, i, j, |v| {
        covered.insert(v);
    });
    let ratio = covered.len() as f64 / tree.n() as f64;
    Ok(CoverageSet { pair: (i, j), covered, ratio })
}

fn gain(tree: &PrepTree, covered: &[bool], i: usize, j: usize) -> usize {
    let mut g = 0;
    for_each_on_path(tree, i, j, |v| {
        if !covered[v] {
            g += 1;
        }
    });
    g
}

/// Larger gain wins; equal gains prefer the lexicographically smaller pair.
fn better(a: (usize, (usize, usize)), b: (usize, (usize, usize))) -> (usize, (usize, usize)) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

fn best_pair(tree: &PrepTree, covered: &[bool]) -> (usize, (usize, usize)) {
    let n = tree.n();
    (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| (gain(tree, covered, i, j), (i, j))).fold((0, (usize::MAX, usize::MAX)), better))
        .reduce(|| (0, (usize::MAX, usize::MAX)), better)
}

/// Greedy max-coverage over all unordered data-qubit pairs. Stops early once
/// no pair adds coverage.
pub fn greedy_flag_placement(tree: &PrepTree, k: usize) -> FlagPlan {
    let mut plan = FlagPlan::empty();
    let mut covered = vec![false; tree.n()];
    for _ in 0..k {
        let (g, (i, j)) = best_pair(tree, &covered);
        if g == 0 {
            break;
        }
        for_each_on_path(tree, i, j, |v| covered[v] = true);
        plan.pairs.push((i, j));
        plan.marginal_gains.push(g);
    }
    plan.union_covered = (0..tree.n()).filter(|&v| covered[v]).collect();
    plan.total_ratio = plan.union_covered.len() as f64 / tree.n() as f64;
    plan
}

/// Exhaustive optimum over all `k`-subsets of pairs. Ties resolve to the
/// lexicographically first subset; the chosen pairs are reported in greedy
/// order so the marginal gains are non-increasing.
pub fn brute_force_optimal(tree: &PrepTree, k: usize) -> Result<FlagPlan> {
    let n = tree.n();
    if n > BRUTE_FORCE_MAX_N || k > BRUTE_FORCE_MAX_K {
        return Err(Error::ResourceLimit(format!(
            "brute force limited to n <= {BRUTE_FORCE_MAX_N}, k <= {BRUTE_FORCE_MAX_K} (got n = {n}, k = {k})"
        )));
    }
    let mut pairs = Vec::new();
    let mut masks = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut m = 0u32;
            for_each_on_path(tree, i, j, |v| m |= 1 << v);
            pairs.push((i, j));
            masks.push(m);
        }
    }
    let k = k.min(pairs.len());
    if k == 0 {
        return Ok(FlagPlan::empty());
    }
    let mut best: Option<(u32, Vec<usize>)> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let union = idx.iter().fold(0u32, |acc, &p| acc | masks[p]);
        if best.as_ref().is_none_or(|(b, _)| union.count_ones() > b.count_ones()) {
            best = Some((union, idx.clone()));
        }
        // next combination in lexicographic order
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == pairs.len() - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        for t in pos..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
    let (union, mut chosen) = best.expect("at least one subset");
    let mut plan = FlagPlan::empty();
    let mut acc = 0u32;
    while !chosen.is_empty() {
        let (pos, _) = chosen
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| {
                let ga = (masks[a] & !acc).count_ones();
                let gb = (masks[b] & !acc).count_ones();
                ga.cmp(&gb).then(b.cmp(&a))
            })
            .expect("non-empty");
        let p = chosen.remove(pos);
        plan.marginal_gains.push((masks[p] & !acc).count_ones() as usize);
        plan.pairs.push(pairs[p]);
        acc |= masks[p];
    }
    debug_assert_eq!(acc, union);
    plan.union_covered = (0..n).filter(|&v| union >> v & 1 == 1).collect();
    plan.total_ratio = plan.union_covered.len() as f64 / n as f64;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::build_ghz_tree;

    fn perfect15() -> PrepTree {
        PrepTree::perfect_binary(4).unwrap()
    }

    #[test]
    fn lca_basics() {
        let t = perfect15();
        assert_eq!(lca(&t, 3, 4).unwrap(), 1);
        assert_eq!(lca(&t, 0, 13).unwrap(), 0);
        assert_eq!(lca(&t, 9, 9).unwrap(), 9);
        assert_eq!(lca(&t, 7, 10).unwrap(), 1);
        assert!(matches!(lca(&t, 0, 15), Err(Error::InvalidIndex { .. })));
    }

    #[test]
    fn fig1_anchor() {
        let t = perfect15();
        // deepest leaves in opposite root subtrees
        let c = coverage_set(&t, 7, 14).unwrap();
        assert_eq!(c.covered.len(), 7);
        assert_eq!(c.covered, BTreeSet::from([7, 3, 1, 0, 2, 6, 14]));
        assert!((c.ratio * 100.0 - 46.67).abs() < 5e-3);
    }

    #[test]
    fn small_paths() {
        let t = perfect15();
        assert_eq!(coverage_set(&t, 7, 8).unwrap().covered, BTreeSet::from([3, 7, 8]));
        assert_eq!(coverage_set(&t, 0, 1).unwrap().covered.len(), 2);
        assert!(matches!(coverage_set(&t, 4, 4), Err(Error::InvalidPair(..))));
    }

    #[test]
    fn greedy_bell_pair() {
        let (_, t) = build_ghz_tree(2).unwrap();
        let p = greedy_flag_placement(&t, 3);
        assert_eq!(p.pairs, vec![(0, 1)]);
        assert_eq!(p.total_ratio, 1.0);
        assert_eq!(p.marginal_gains, vec![2]);
        assert_eq!(brute_force_optimal(&t, 1).unwrap(), p);
    }

    #[test]
    fn greedy_first_pick_on_perfect_tree() {
        let p = greedy_flag_placement(&perfect15(), 1);
        assert_eq!(p.covered_count(), 7);
        assert_eq!(p.pairs, vec![(7, 11)]);
        assert_eq!(brute_force_optimal(&perfect15(), 1).unwrap().covered_count(), 7);
    }

    #[test]
    fn greedy_saturates() {
        for n in 2..=20 {
            let (_, t) = build_ghz_tree(n).unwrap();
            let p = greedy_flag_placement(&t, n);
            assert_eq!(p.total_ratio, 1.0, "n = {n}");
            assert!(p.marginal_gains.iter().all(|&g| g > 0));
            assert!(p.marginal_gains.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn doubling_ten_plan() {
        let (_, t) = build_ghz_tree(10).unwrap();
        let p = greedy_flag_placement(&t, 2);
        assert_eq!(p.pairs.len(), 2);
        assert!(p.marginal_gains[0] >= p.marginal_gains[1]);
        let union: BTreeSet<usize> =
            p.pairs.iter().flat_map(|&(i, j)| coverage_set(&t, i, j).unwrap().covered).collect();
        assert_eq!(union, p.union_covered);
    }

    #[test]
    fn brute_force_limits() {
        let t = PrepTree::perfect_binary(5).unwrap();
        assert!(matches!(brute_force_optimal(&t, 1), Err(Error::ResourceLimit(_))));
        assert!(matches!(brute_force_optimal(&perfect15(), 4), Err(Error::ResourceLimit(_))));
        assert_eq!(brute_force_optimal(&perfect15(), 0).unwrap().pairs.len(), 0);
    }

    #[test]
    fn plan_json_keys() {
        let (_, t) = build_ghz_tree(4).unwrap();
        let v: serde_json::Value = serde_json::from_str(&greedy_flag_placement(&t, 1).to_json()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["pairs", "covered", "total_ratio", "marginal_gains"]);
        assert!(v["pairs"][0].is_array());
    }
}
