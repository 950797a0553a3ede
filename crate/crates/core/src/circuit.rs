//! Circuit intermediate representation and the GHZ preparation tree.
//!
//! A [`Circuit`] is an ordered gate list over `n_data` GHZ qubits followed by
//! `n_flags` flag ancillas, partitioned into layers (time steps). Gate indices
//! in the layer partition always refer to positions in the gate list, and the
//! gate list is the concatenation of the layers in order.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    H,
    X,
    Cnot,
    Rz,
    Ry,
    MeasureZ,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot => 2,
            _ => 1,
        }
    }

    pub fn has_angle(self) -> bool {
        matches!(self, GateKind::Rz | GateKind::Ry)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    /// Qubit operands; `[control, target]` for CNOT.
    pub qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
}

impl Gate {
    pub fn h(q: usize) -> Self {
        Self { kind: GateKind::H, qubits: vec![q], angle: None }
    }

    pub fn x(q: usize) -> Self {
        Self { kind: GateKind::X, qubits: vec![q], angle: None }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self { kind: GateKind::Cnot, qubits: vec![control, target], angle: None }
    }

    pub fn rz(q: usize, angle: f64) -> Self {
        Self { kind: GateKind::Rz, qubits: vec![q], angle: Some(angle) }
    }

    pub fn ry(q: usize, angle: f64) -> Self {
        Self { kind: GateKind::Ry, qubits: vec![q], angle: Some(angle) }
    }

    pub fn measure(q: usize) -> Self {
        Self { kind: GateKind::MeasureZ, qubits: vec![q], angle: None }
    }

    pub fn is_measurement(&self) -> bool {
        self.kind == GateKind::MeasureZ
    }

    pub fn is_two_qubit(&self) -> bool {
        self.kind.arity() == 2
    }

    fn check(&self, n_qubits: usize) -> Result<()> {
        if self.qubits.len() != self.kind.arity() {
            return Err(Error::MalformedCircuit(format!(
                "{:?} gate expects {} qubits, got {}",
                self.kind,
                self.kind.arity(),
                self.qubits.len()
            )));
        }
        for &q in &self.qubits {
            if q >= n_qubits {
                return Err(Error::InvalidIndex { index: q, count: n_qubits });
            }
        }
        if self.qubits.len() == 2 && self.qubits[0] == self.qubits[1] {
            return Err(Error::MalformedCircuit("CNOT control equals target".into()));
        }
        if self.kind.has_angle() != self.angle.is_some() {
            return Err(Error::MalformedCircuit(format!("{:?} gate angle presence mismatch", self.kind)));
        }
        Ok(())
    }
}

/// Single- and two-qubit gate tallies, measurements excluded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub n_1q: usize,
    pub n_cx: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_data: usize,
    n_flags: usize,
    gates: Vec<Gate>,
    layers: Vec<Vec<usize>>,
}

impl Circuit {
    pub fn new(n_data: usize) -> Self {
        Self { n_data, n_flags: 0, gates: Vec::new(), layers: Vec::new() }
    }

    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn n_flags(&self) -> usize {
        self.n_flags
    }

    pub fn n_qubits(&self) -> usize {
        self.n_data + self.n_flags
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn layer_gates(&self, layer: usize) -> impl Iterator<Item = &Gate> {
        self.layers[layer].iter().map(move |&g| &self.gates[g])
    }

    /// Qubits that carry a `MEASURE_Z`, data qubits first then flags, ascending.
    pub fn measured_qubits(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.gates.iter().filter(|g| g.is_measurement()).map(|g| g.qubits[0]).collect();
        set.into_iter().collect()
    }

    pub fn data_measured(&self) -> bool {
        self.gates.iter().any(|g| g.is_measurement() && g.qubits[0] < self.n_data)
    }

    /// Appends one time step. Gates in a layer act on disjoint qubits, except
    /// that an otherwise idle qubit may carry an `X, X` decoupling pair.
    pub fn push_layer(&mut self, layer: Vec<Gate>) -> Result<()> {
        if layer.is_empty() {
            return Ok(());
        }
        let n = self.n_qubits();
        for g in &layer {
            g.check(n)?;
        }
        check_layer_disjoint(&layer)?;
        let start = self.gates.len();
        self.layers.push((start..start + layer.len()).collect());
        self.gates.extend(layer);
        Ok(())
    }

    fn add_flag(&mut self) -> usize {
        self.n_flags += 1;
        self.n_data + self.n_flags - 1
    }

    /// Checks every structural invariant; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.n_data == 0 {
            return Err(Error::InvalidSize("circuit has no data qubits".into()));
        }
        let n = self.n_qubits();
        let mut expected = 0usize;
        for layer in &self.layers {
            for &g in layer {
                if g != expected {
                    return Err(Error::MalformedCircuit("layers must partition the gate list in order".into()));
                }
                expected += 1;
            }
            let gates: Vec<Gate> = layer.iter().map(|&g| self.gates[g].clone()).collect();
            check_layer_disjoint(&gates)?;
        }
        if expected != self.gates.len() {
            return Err(Error::MalformedCircuit(format!("layers cover {expected} of {} gates", self.gates.len())));
        }
        for g in &self.gates {
            g.check(n)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Circuit = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }
}

fn check_layer_disjoint(layer: &[Gate]) -> Result<()> {
    use std::collections::HashMap;
    let mut uses: HashMap<usize, Vec<&Gate>> = HashMap::new();
    for g in layer {
        for &q in &g.qubits {
            uses.entry(q).or_default().push(g);
        }
    }
    for (q, gs) in uses {
        let dd_pair = gs.len() == 2 && gs.iter().all(|g| g.kind == GateKind::X);
        if gs.len() > 1 && !dd_pair {
            return Err(Error::MalformedCircuit(format!("qubit {q} used by {} gates in one layer", gs.len())));
        }
    }
    Ok(())
}

/// Rooted tree recording which CNOT entangled each qubit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepTree {
    n: usize,
    root: usize,
    parent: Vec<Option<usize>>,
    entangling_layer: Vec<usize>,
    depth: Vec<usize>,
}

impl PrepTree {
    /// Builds a tree from a parent array, assigning each node its depth as
    /// entangling layer.
    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Self> {
        let depth = depths(&parent)?;
        Self::with_layers(parent, depth)
    }

    pub fn with_layers(parent: Vec<Option<usize>>, entangling_layer: Vec<usize>) -> Result<Self> {
        let n = parent.len();
        if n < 2 {
            return Err(Error::InvalidSize(format!("tree needs at least 2 nodes, got {n}")));
        }
        if entangling_layer.len() != n {
            return Err(Error::InvalidSize("entangling_layer length mismatch".into()));
        }
        let depth = depths(&parent)?;
        let root = parent.iter().position(|p| p.is_none()).expect("depths found a root");
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if entangling_layer[p] >= entangling_layer[v] {
                    return Err(Error::MalformedCircuit(format!("node {v} entangled no later than its parent {p}")));
                }
            }
        }
        Ok(Self { n, root, parent, entangling_layer, depth })
    }

    /// Perfect binary tree in heap order (children of `i` are `2i+1`, `2i+2`).
    pub fn perfect_binary(levels: u32) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidSize("perfect tree needs at least 2 levels".into()));
        }
        let n = (1usize << levels) - 1;
        let parent = (0..n).map(|i| if i == 0 { None } else { Some((i - 1) / 2) }).collect();
        Self::from_parents(parent)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, q: usize) -> Option<usize> {
        self.parent[q]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn entangling_layer(&self, q: usize) -> usize {
        self.entangling_layer[q]
    }

    pub fn depth(&self, q: usize) -> usize {
        self.depth[q]
    }

    pub fn children(&self, q: usize) -> Vec<usize> {
        (0..self.n).filter(|&c| self.parent[c] == Some(q)).collect()
    }
}

fn depths(parent: &[Option<usize>]) -> Result<Vec<usize>> {
    let n = parent.len();
    let roots = parent.iter().filter(|p| p.is_none()).count();
    if roots != 1 {
        return Err(Error::MalformedCircuit(format!("tree must have one root, found {roots}")));
    }
    let mut depth = vec![usize::MAX; n];
    for start in 0..n {
        let mut chain = Vec::new();
        let mut v = start;
        while depth[v] == usize::MAX {
            if chain.len() > n {
                return Err(Error::MalformedCircuit("parent relation has a cycle".into()));
            }
            chain.push(v);
            match parent[v] {
                None => {
                    depth[v] = 0;
                    chain.pop();
                    break;
                }
                Some(p) if p >= n => return Err(Error::InvalidIndex { index: p, count: n }),
                Some(p) => v = p,
            }
        }
        let mut d = depth[v];
        while let Some(u) = chain.pop() {
            d += 1;
            depth[u] = d;
        }
    }
    Ok(depth)
}

/// Log-depth GHZ preparation: `H(0)` followed by doubling CNOT fan-out layers.
///
/// In each layer every already-entangled qubit, lowest index first, targets
/// the next fresh qubit until all `n` are entangled.
pub fn build_ghz_tree(n: usize) -> Result<(Circuit, PrepTree)> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("GHZ state needs n >= 2, got {n}")));
    }
    let mut circuit = Circuit::new(n);
    let mut parent = vec![None; n];
    let mut layer_of = vec![0usize; n];
    circuit.push_layer(vec![Gate::h(0)])?;
    let mut entangled = vec![0usize];
    let mut fresh = 1usize;
    let mut layer_idx = 0;
    while fresh < n {
        layer_idx += 1;
        let mut layer = Vec::new();
        for &control in &entangled {
            if fresh == n {
                break;
            }
            layer.push(Gate::cnot(control, fresh));
            parent[fresh] = Some(control);
            layer_of[fresh] = layer_idx;
            fresh += 1;
        }
        entangled.extend(layer.iter().map(|g| g.qubits[1]));
        entangled.sort_unstable();
        circuit.push_layer(layer)?;
    }
    let tree = PrepTree::with_layers(parent, layer_of)?;
    Ok((circuit, tree))
}

/// Schedules a preparation circuit for an arbitrary tree: each CNOT is placed
/// at the earliest layer after its control was entangled in which the control
/// is free. Returns the tree with its entangling layers set to the schedule.
pub fn circuit_from_tree(tree: &PrepTree) -> Result<(Circuit, PrepTree)> {
    let n = tree.n();
    let mut layer_of = vec![0usize; n];
    let mut next_free = vec![1usize; n];
    let mut order = vec![tree.root()];
    let mut head = 0;
    let mut placed: Vec<(usize, usize, usize)> = Vec::new();
    while head < order.len() {
        let p = order[head];
        head += 1;
        for c in tree.children(p) {
            let layer = (layer_of[p] + 1).max(next_free[p]);
            next_free[p] = layer + 1;
            layer_of[c] = layer;
            placed.push((layer, p, c));
            order.push(c);
        }
    }
    placed.sort_unstable();
    let mut circuit = Circuit::new(n);
    circuit.push_layer(vec![Gate::h(tree.root())])?;
    let depth = placed.last().map_or(0, |p| p.0);
    for l in 1..=depth {
        let layer = placed.iter().filter(|p| p.0 == l).map(|&(_, c, t)| Gate::cnot(c, t)).collect();
        circuit.push_layer(layer)?;
    }
    let scheduled = PrepTree::with_layers(tree.parents().to_vec(), layer_of)?;
    Ok((circuit, scheduled))
}

/// Appends one `ZZ` parity check per pair: a fresh flag ancilla receives
/// `CNOT(i, flag)` then `CNOT(j, flag)` and is measured. Each check occupies
/// three serialized layers after the existing gates.
pub fn attach_flag_checks(circuit: &Circuit, tree: &PrepTree, pairs: &[(usize, usize)]) -> Result<Circuit> {
    if tree.n() != circuit.n_data() {
        return Err(Error::InvalidSize(format!(
            "tree has {} qubits, circuit has {} data qubits",
            tree.n(),
            circuit.n_data()
        )));
    }
    if circuit.data_measured() {
        return Err(Error::AlreadyMeasured);
    }
    let mut seen = BTreeSet::new();
    for &(i, j) in pairs {
        let n = circuit.n_data();
        if i >= n || j >= n {
            return Err(Error::InvalidPair(i, j, format!("not a data qubit (n = {n})")));
        }
        if i == j {
            return Err(Error::InvalidPair(i, j, "qubits must differ".into()));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::InvalidPair(i, j, "duplicate pair".into()));
        }
    }
    let mut out = circuit.clone();
    for &(i, j) in pairs {
        let flag = out.add_flag();
        out.push_layer(vec![Gate::cnot(i, flag)])?;
        out.push_layer(vec![Gate::cnot(j, flag)])?;
        out.push_layer(vec![Gate::measure(flag)])?;
    }
    Ok(out)
}

/// Appends `RZ(-φ)`, `RY(-π/2)` and `MEASURE_Z` on every data qubit, which
/// measures the global parity `⊗(cos φ X + sin φ Y)`.
pub fn attach_parity_measurement(circuit: &Circuit, phi: f64) -> Result<Circuit> {
    if circuit.data_measured() {
        return Err(Error::AlreadyMeasured);
    }
    let n = circuit.n_data();
    let mut out = circuit.clone();
    out.push_layer((0..n).map(|q| Gate::rz(q, -phi)).collect())?;
    out.push_layer((0..n).map(|q| Gate::ry(q, -FRAC_PI_2)).collect())?;
    out.push_layer((0..n).map(Gate::measure).collect())?;
    Ok(out)
}

/// Appends computational-basis measurements on the data qubits.
pub fn attach_z_measurement(circuit: &Circuit) -> Result<Circuit> {
    if circuit.data_measured() {
        return Err(Error::AlreadyMeasured);
    }
    let mut out = circuit.clone();
    out.push_layer((0..circuit.n_data()).map(Gate::measure).collect())?;
    Ok(out)
}

pub fn count_gates(circuit: &Circuit) -> GateCounts {
    circuit.gates().iter().fold(GateCounts::default(), |mut acc, g| {
        match g.kind {
            GateKind::MeasureZ => {}
            GateKind::Cnot => acc.n_cx += 1,
            _ => acc.n_1q += 1,
        }
        acc
    })
}

/// Dynamical decoupling: in every layer containing a two-qubit gate, each
/// idle data qubit receives an `X, X` pair inside that layer.
pub fn insert_dd(circuit: &Circuit) -> Circuit {
    let mut out = Circuit::new(circuit.n_data());
    out.n_flags = circuit.n_flags();
    for (l, _) in circuit.layers().iter().enumerate() {
        let mut layer: Vec<Gate> = circuit.layer_gates(l).cloned().collect();
        if layer.iter().any(Gate::is_two_qubit) {
            let busy: BTreeSet<usize> = layer.iter().flat_map(|g| g.qubits.iter().copied()).collect();
            for q in (0..circuit.n_data()).filter(|q| !busy.contains(q)) {
                layer.push(Gate::x(q));
                layer.push(Gate::x(q));
            }
        }
        out.push_layer(layer).expect("decoupled layer stays valid");
    }
    out
}
