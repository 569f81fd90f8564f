//! Per-cluster convex restoration programs.
//!
//! [`classify_variables`] lays out the local variables of one cluster over
//! the whole horizon and records which of them are shared with neighbouring
//! clusters. [`build_subproblem`] turns that layout into a [`ConvexProgram`]
//! with the relaxed Boolean decisions and the consensus penalties.
//!
//! Consensus is edge based: every non-faulted line between two clusters
//! carries a small set of [`SharedKey`]s (end voltages, flows, switch status
//! and orientation) held by exactly the two clusters at its ends.

mod program;

pub use program::{ConvexProgram, DiskCap, Penalty, Row, RowTag, Variable};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::clustering::{ClusterId, Clustering};
use crate::feeder::{Feeder, LineKind, Scenario, SolverConfig};

/// Orientation of a line in the energized tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dir {
    /// `from` is the parent of `to`.
    Forward,
    /// `to` is the parent of `from`.
    Reverse,
}

/// A local quantity at one step. Indices refer to the feeder's node, line,
/// load, DER and capacitor-bank vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    LoadP { load: usize, phase: usize },
    LoadQ { load: usize, phase: usize },
    Volt { node: usize, phase: usize },
    FlowP { line: usize, phase: usize },
    FlowQ { line: usize, phase: usize },
    GenP { der: usize, phase: usize },
    GenQ { der: usize, phase: usize },
    CapQ { cap: usize, phase: usize },
    LoadOn { load: usize },
    NodeOn { node: usize },
    LineOn { line: usize },
    Parent { line: usize, dir: Dir },
}

impl Quantity {
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            Quantity::LoadOn { .. }
                | Quantity::NodeOn { .. }
                | Quantity::LineOn { .. }
                | Quantity::Parent { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarKey {
    pub step: usize,
    pub qty: Quantity,
}

/// Quantity exchanged across a joint line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SharedQty {
    VoltFrom(usize),
    VoltTo(usize),
    FlowP(usize),
    FlowQ(usize),
    Alpha,
    Parent(Dir),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SharedKey {
    pub step: usize,
    pub line: usize,
    pub qty: SharedQty,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubproblemError {
    UnknownCluster(ClusterId),
    MissingConsensus(String),
    NonBoolean { label: String, value: f64 },
    MissingAssignment(String),
    /// A fixed value lies outside the variable's bounds, e.g. closing a faulted line.
    Conflict { label: String, value: f64 },
}

impl fmt::Display for SubproblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubproblemError::UnknownCluster(c) => write!(f, "unknown cluster {c}"),
            SubproblemError::MissingConsensus(k) => write!(f, "no consensus value for {k}"),
            SubproblemError::NonBoolean { label, value } => {
                write!(f, "{label}: expected 0 or 1, got {value}")
            }
            SubproblemError::MissingAssignment(k) => write!(f, "no Boolean value given for {k}"),
            SubproblemError::Conflict { label, value } => {
                write!(f, "{label}: value {value} is outside the variable bounds")
            }
        }
    }
}

impl core::error::Error for SubproblemError {}

/// Ordered local variables of one cluster over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct VarIndex {
    pub cluster: ClusterId,
    pub horizon: usize,
    pub phases: usize,
    /// Node indices owned by the cluster.
    pub owned_nodes: Vec<usize>,
    /// Neighbouring nodes whose voltage is copied locally.
    pub external_nodes: Vec<usize>,
    /// Lines with at least one owned endpoint.
    pub lines: Vec<usize>,
    pub keys: Vec<VarKey>,
    /// Consensus keys each variable is tied to; empty for interior variables.
    pub links: Vec<Vec<SharedKey>>,
    holders: BTreeMap<SharedKey, [ClusterId; 2]>,
    lookup: BTreeMap<VarKey, usize>,
    owned_set: BTreeSet<usize>,
}

impl VarIndex {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, key: VarKey) -> Option<usize> {
        self.lookup.get(&key).copied()
    }

    pub fn at(&self, step: usize, qty: Quantity) -> Option<usize> {
        self.get(VarKey { step, qty })
    }

    pub fn owns(&self, node: usize) -> bool {
        self.owned_set.contains(&node)
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.keys[j].qty.is_binary()
    }

    pub fn is_binding(&self, j: usize) -> bool {
        !self.links[j].is_empty()
    }

    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.keys.len()).filter(|&j| self.is_binary(j))
    }

    /// Every `(variable, shared key)` pair, in variable order.
    pub fn all_links(&self) -> impl Iterator<Item = (usize, SharedKey)> + '_ {
        self.links.iter().enumerate().flat_map(|(j, ks)| ks.iter().map(move |k| (j, *k)))
    }

    /// Clusters holding a copy of variable `j`; a single cluster for interior ones.
    pub fn sharers(&self, j: usize) -> BTreeSet<ClusterId> {
        let mut s = BTreeSet::new();
        s.insert(self.cluster);
        for k in &self.links[j] {
            s.extend(self.holders[k]);
        }
        s
    }

    pub fn holders(&self, key: &SharedKey) -> Option<[ClusterId; 2]> {
        self.holders.get(key).copied()
    }
}

/// Lays out the local variables of `cluster`.
pub fn classify_variables(
    f: &Feeder,
    sc: &Scenario,
    cl: &Clustering,
    cluster: ClusterId,
) -> Result<VarIndex, SubproblemError> {
    let members = cl.clusters.get(&cluster).ok_or(SubproblemError::UnknownCluster(cluster))?;
    let owned_set: BTreeSet<usize> = members.iter().filter_map(|n| f.node_index(*n)).collect();
    let owned_nodes: Vec<usize> = owned_set.iter().copied().collect();
    let mut lines = Vec::new();
    let mut external = BTreeSet::new();
    for li in 0..f.lines().len() {
        let (a, b) = f.ends(li);
        let (oa, ob) = (owned_set.contains(&a), owned_set.contains(&b));
        if !(oa || ob) {
            continue;
        }
        lines.push(li);
        if !sc.is_faulted(li) {
            if !oa {
                external.insert(a);
            }
            if !ob {
                external.insert(b);
            }
        }
    }
    let external_nodes: Vec<usize> = external.iter().copied().collect();
    let volt_nodes: BTreeSet<usize> = owned_set.union(&external).copied().collect();
    let ph = f.phase_count();

    let mut keys = Vec::new();
    for step in 0..sc.horizon {
        let mut push = |qty| keys.push(VarKey { step, qty });
        for &n in &owned_nodes {
            for &load in f.loads_at(n) {
                for phase in 0..ph {
                    push(Quantity::LoadP { load, phase });
                    push(Quantity::LoadQ { load, phase });
                }
            }
        }
        for &node in &volt_nodes {
            for phase in 0..ph {
                push(Quantity::Volt { node, phase });
            }
        }
        for &line in &lines {
            for phase in 0..ph {
                push(Quantity::FlowP { line, phase });
                push(Quantity::FlowQ { line, phase });
            }
        }
        for &n in &owned_nodes {
            for &der in f.ders_at(n) {
                for phase in 0..ph {
                    push(Quantity::GenP { der, phase });
                    push(Quantity::GenQ { der, phase });
                }
            }
            for &cap in f.caps_at(n) {
                for phase in 0..ph {
                    push(Quantity::CapQ { cap, phase });
                }
            }
        }
        for &n in &owned_nodes {
            for &load in f.loads_at(n) {
                if !f.loads()[load].dispatchable {
                    push(Quantity::LoadOn { load });
                }
            }
        }
        for &node in &owned_nodes {
            push(Quantity::NodeOn { node });
        }
        for &line in &lines {
            if f.lines()[line].is_switchable() || sc.is_faulted(line) {
                push(Quantity::LineOn { line });
            }
        }
        for &line in &lines {
            if !sc.is_faulted(line) {
                push(Quantity::Parent { line, dir: Dir::Forward });
                push(Quantity::Parent { line, dir: Dir::Reverse });
            }
        }
    }

    let joint = |li: usize| cl.joint_lines.contains(&li) && !sc.is_faulted(li);
    let mut holders = BTreeMap::new();
    let mut links = Vec::with_capacity(keys.len());
    for key in &keys {
        let step = key.step;
        let mut ks = Vec::new();
        match key.qty {
            Quantity::Volt { node, phase } => {
                for &li in f.incident(node) {
                    if joint(li) && lines.contains(&li) {
                        let (a, _) = f.ends(li);
                        let qty = if a == node { SharedQty::VoltFrom(phase) } else { SharedQty::VoltTo(phase) };
                        ks.push(SharedKey { step, line: li, qty });
                    }
                }
            }
            Quantity::FlowP { line, phase } if joint(line) => {
                ks.push(SharedKey { step, line, qty: SharedQty::FlowP(phase) })
            }
            Quantity::FlowQ { line, phase } if joint(line) => {
                ks.push(SharedKey { step, line, qty: SharedQty::FlowQ(phase) })
            }
            Quantity::LineOn { line } if joint(line) => {
                ks.push(SharedKey { step, line, qty: SharedQty::Alpha })
            }
            Quantity::Parent { line, dir } if joint(line) => {
                ks.push(SharedKey { step, line, qty: SharedQty::Parent(dir) })
            }
            _ => {}
        }
        for k in &ks {
            let l = &f.lines()[k.line];
            let pair = [cl.assignment[&l.from], cl.assignment[&l.to]];
            holders.insert(*k, pair);
        }
        links.push(ks);
    }
    let lookup = keys.iter().enumerate().map(|(j, k)| (*k, j)).collect();
    Ok(VarIndex {
        cluster,
        horizon: sc.horizon,
        phases: ph,
        owned_nodes,
        external_nodes,
        lines,
        keys,
        links,
        holders,
        lookup,
        owned_set,
    })
}

/// Human-readable label of a variable, using feeder ids.
pub fn label(f: &Feeder, key: &VarKey) -> String {
    let t = key.step + 1;
    let node = |n: usize| f.nodes()[n].id;
    let line = |l: usize| f.lines()[l].id.as_str();
    match key.qty {
        Quantity::LoadP { load, phase } => format!("p_load[{load},{phase},t{t}]"),
        Quantity::LoadQ { load, phase } => format!("q_load[{load},{phase},t{t}]"),
        Quantity::Volt { node: n, phase } => format!("u[{},{phase},t{t}]", node(n)),
        Quantity::FlowP { line: l, phase } => format!("p_line[{},{phase},t{t}]", line(l)),
        Quantity::FlowQ { line: l, phase } => format!("q_line[{},{phase},t{t}]", line(l)),
        Quantity::GenP { der, phase } => format!("p_der[{der},{phase},t{t}]"),
        Quantity::GenQ { der, phase } => format!("q_der[{der},{phase},t{t}]"),
        Quantity::CapQ { cap, phase } => format!("q_cap[{cap},{phase},t{t}]"),
        Quantity::LoadOn { load } => format!("load_on[{load},t{t}]"),
        Quantity::NodeOn { node: n } => format!("node_on[{},t{t}]", node(n)),
        Quantity::LineOn { line: l } => format!("line_on[{},t{t}]", line(l)),
        Quantity::Parent { line: l, dir: Dir::Forward } => format!("parent_fwd[{},t{t}]", line(l)),
        Quantity::Parent { line: l, dir: Dir::Reverse } => format!("parent_rev[{},t{t}]", line(l)),
    }
}

/// Consensus values seen by one cluster: averaged shared values `xbar`, the
/// cluster's multipliers on them `u_shared`, and the Boolean targets `z` with
/// their multipliers `u_bool`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsensusView {
    pub xbar: BTreeMap<SharedKey, f64>,
    pub u_shared: BTreeMap<SharedKey, f64>,
    pub z: BTreeMap<VarKey, f64>,
    pub u_bool: BTreeMap<VarKey, f64>,
}

/// What a penalty term pulls its variable toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltySlot {
    Shared { var: usize, key: SharedKey },
    Boolean { var: usize },
}

impl PenaltySlot {
    pub fn var(self) -> usize {
        match self {
            PenaltySlot::Shared { var, .. } | PenaltySlot::Boolean { var } => var,
        }
    }
}

/// Penalty layout used by [`build_subproblem`]: every continuous shared link
/// in variable order, then every relaxed binary. Binding binaries agree
/// through their common Boolean target, so their links get no extra term.
pub fn penalty_slots(idx: &VarIndex) -> Vec<PenaltySlot> {
    let mut out: Vec<PenaltySlot> = idx
        .all_links()
        .filter(|(var, _)| !idx.is_binary(*var))
        .map(|(var, key)| PenaltySlot::Shared { var, key })
        .collect();
    out.extend(idx.binaries().map(|var| PenaltySlot::Boolean { var }));
    out
}

/// Builds the local program with consensus penalties of weight `rho / 2`.
pub fn build_subproblem(
    idx: &VarIndex,
    f: &Feeder,
    sc: &Scenario,
    consensus: &ConsensusView,
    cfg: &SolverConfig,
) -> Result<ConvexProgram, SubproblemError> {
    let mut prog = build_local_program(idx, f, sc, cfg);
    let slots = penalty_slots(idx);
    let mut centers = Vec::with_capacity(slots.len());
    for s in &slots {
        let c = match *s {
            PenaltySlot::Shared { key, .. } => {
                let xb = consensus.xbar.get(&key);
                let u = consensus.u_shared.get(&key);
                match (xb, u) {
                    (Some(xb), Some(u)) => xb - u,
                    _ => return Err(SubproblemError::MissingConsensus(format!("{key:?}"))),
                }
            }
            PenaltySlot::Boolean { var } => {
                let key = idx.keys[var];
                match (consensus.z.get(&key), consensus.u_bool.get(&key)) {
                    (Some(z), Some(u)) => z - u,
                    _ => return Err(SubproblemError::MissingConsensus(label(f, &key))),
                }
            }
        };
        centers.push(c);
    }
    attach_penalties(&mut prog, &slots, &centers, cfg.rho);
    Ok(prog)
}

/// Appends one penalty per slot with the given centers.
pub fn attach_penalties(prog: &mut ConvexProgram, slots: &[PenaltySlot], centers: &[f64], rho: f64) {
    prog.penalties.clear();
    for (s, c) in slots.iter().zip(centers) {
        prog.penalties.push(Penalty { var: s.var(), center: *c, weight: 0.5 * rho });
    }
}

/// Local restoration program without consensus penalties.
pub fn build_local_program(
    idx: &VarIndex,
    f: &Feeder,
    sc: &Scenario,
    cfg: &SolverConfig,
) -> ConvexProgram {
    let mut prog = ConvexProgram::default();
    let ph = f.phase_count();
    let sub = f.substation_index();
    let isolated = sc.isolated_nodes(f);
    let vmin2 = sc.v_min * sc.v_min;
    let vmax2 = sc.v_max * sc.v_max;
    let c1 = cfg.c1;
    let c2 = cfg.resolved_c2(f);
    let big_m = cfg.big_m;

    for key in &idx.keys {
        let t = key.step;
        let (lo, hi) = match key.qty {
            Quantity::LoadP { load, phase } => (0.0, f.loads()[load].p_max[phase]),
            Quantity::LoadQ { load, phase } => (0.0, f.loads()[load].q_max[phase]),
            Quantity::Volt { .. } => (0.0, vmax2),
            Quantity::FlowP { line, phase } | Quantity::FlowQ { line, phase } => {
                if sc.is_faulted(line) {
                    (0.0, 0.0)
                } else {
                    let s = f.lines()[line].s_max[phase];
                    (-s, s)
                }
            }
            Quantity::GenP { der, phase } => (0.0, f.ders()[der].s_inv_max[phase]),
            Quantity::GenQ { der, phase } => {
                let s = f.ders()[der].s_inv_max[phase];
                (-s, s)
            }
            Quantity::CapQ { cap, phase } => (0.0, f.caps()[cap].q_cap_max[phase]),
            Quantity::LoadOn { .. } => (0.0, 1.0),
            Quantity::NodeOn { node } => {
                let dead = isolated.contains(&node)
                    || (node == sub && !(sc.substation_profile[t].p > 0.0));
                (0.0, if dead { 0.0 } else { 1.0 })
            }
            Quantity::LineOn { line } => (0.0, if sc.is_faulted(line) { 0.0 } else { 1.0 }),
            Quantity::Parent { line, dir } => {
                let (a, b) = f.ends(line);
                let child = if dir == Dir::Forward { b } else { a };
                (0.0, if child == sub { 0.0 } else { 1.0 })
            }
        };
        prog.add_var(label(f, key), lo, hi);
    }

    let v = |t: usize, q: Quantity| idx.at(t, q).expect("variable laid out by classify_variables");

    for t in 0..idx.horizon {
        // Objective: restored load and closed switches.
        for &n in &idx.owned_nodes {
            for &k in f.loads_at(n) {
                for p in 0..ph {
                    prog.cost[v(t, Quantity::LoadP { load: k, phase: p })] -= c1 * f.loads()[k].priority[p];
                }
            }
        }
        for &li in &idx.lines {
            let l = &f.lines()[li];
            if l.is_switchable() && !sc.is_faulted(li) {
                let (a, b) = f.ends(li);
                let share = if idx.owns(a) && idx.owns(b) { 1.0 } else { 0.5 };
                prog.cost[v(t, Quantity::LineOn { line: li })] -= c2 * share * l.switch_priority;
            }
        }

        // Loads.
        for &n in &idx.owned_nodes {
            let on = v(t, Quantity::NodeOn { node: n });
            for &k in f.loads_at(n) {
                let load = &f.loads()[k];
                if load.dispatchable {
                    for p in 0..ph {
                        let lp = v(t, Quantity::LoadP { load: k, phase: p });
                        let lq = v(t, Quantity::LoadQ { load: k, phase: p });
                        prog.add_row(vec2(lp, 1.0, on, -load.p_max[p]), f64::NEG_INFINITY, 0.0, RowTag::LoadGate);
                        prog.add_row(vec2(lq, 1.0, on, -load.q_max[p]), f64::NEG_INFINITY, 0.0, RowTag::LoadGate);
                    }
                } else {
                    let x = v(t, Quantity::LoadOn { load: k });
                    for p in 0..ph {
                        let lp = v(t, Quantity::LoadP { load: k, phase: p });
                        let lq = v(t, Quantity::LoadQ { load: k, phase: p });
                        prog.add_row(vec2(lp, 1.0, x, -load.p_max[p]), 0.0, 0.0, RowTag::LoadPickup);
                        prog.add_row(vec2(lq, 1.0, x, -load.q_max[p]), 0.0, 0.0, RowTag::LoadPickup);
                    }
                    prog.add_row(vec2(x, 1.0, on, -1.0), f64::NEG_INFINITY, 0.0, RowTag::LoadGate);
                }
            }
        }

        // Voltage limits; the substation fixes the reference at 1 p.u. when energized.
        for &n in &idx.owned_nodes {
            let on = v(t, Quantity::NodeOn { node: n });
            for p in 0..ph {
                let u = v(t, Quantity::Volt { node: n, phase: p });
                if n == sub {
                    prog.add_row(vec2(u, 1.0, on, -1.0), 0.0, 0.0, RowTag::VoltageRef);
                } else {
                    prog.add_row(vec2(u, 1.0, on, -vmin2), 0.0, f64::INFINITY, RowTag::VoltageBox);
                    prog.add_row(vec2(u, 1.0, on, -vmax2), f64::NEG_INFINITY, 0.0, RowTag::VoltageBox);
                }
            }
        }

        // Line capacity.
        for &li in &idx.lines {
            let l = &f.lines()[li];
            let gate = if l.is_switchable() || sc.is_faulted(li) {
                Some(v(t, Quantity::LineOn { line: li }))
            } else {
                None
            };
            for p in 0..ph {
                prog.cones.push(DiskCap {
                    p: v(t, Quantity::FlowP { line: li, phase: p }),
                    q: v(t, Quantity::FlowQ { line: li, phase: p }),
                    radius: l.s_max[p],
                    gate,
                    tag: RowTag::FlowCap,
                });
            }
        }

        // Substation capability, three-phase total.
        if idx.owns(sub) {
            let mut tp = Vec::new();
            let mut tq = Vec::new();
            for p in 0..ph {
                for &li in f.incident(sub) {
                    if !idx.lines.contains(&li) {
                        continue;
                    }
                    let (a, _) = f.ends(li);
                    let sign = if a == sub { 1.0 } else { -1.0 };
                    tp.push((v(t, Quantity::FlowP { line: li, phase: p }), sign));
                    tq.push((v(t, Quantity::FlowQ { line: li, phase: p }), sign));
                }
                for &k in f.loads_at(sub) {
                    tp.push((v(t, Quantity::LoadP { load: k, phase: p }), 1.0));
                    tq.push((v(t, Quantity::LoadQ { load: k, phase: p }), 1.0));
                }
                for &d in f.ders_at(sub) {
                    tp.push((v(t, Quantity::GenP { der: d, phase: p }), -1.0));
                    tq.push((v(t, Quantity::GenQ { der: d, phase: p }), -1.0));
                }
                for &c in f.caps_at(sub) {
                    tq.push((v(t, Quantity::CapQ { cap: c, phase: p }), -1.0));
                }
            }
            let cap = sc.substation_profile[t];
            prog.add_row(tp, 0.0, cap.p, RowTag::SubstationP);
            prog.add_row(tq, 0.0, cap.q, RowTag::SubstationQ);
        }

        // Capacitor banks and inverters.
        for &n in &idx.owned_nodes {
            let on = v(t, Quantity::NodeOn { node: n });
            for &c in f.caps_at(n) {
                for p in 0..ph {
                    let q = v(t, Quantity::CapQ { cap: c, phase: p });
                    prog.add_row(vec2(q, 1.0, on, -f.caps()[c].q_cap_max[p]), f64::NEG_INFINITY, 0.0, RowTag::CapBank);
                }
            }
            for &d in f.ders_at(n) {
                for p in 0..ph {
                    prog.cones.push(DiskCap {
                        p: v(t, Quantity::GenP { der: d, phase: p }),
                        q: v(t, Quantity::GenQ { der: d, phase: p }),
                        radius: f.ders()[d].s_inv_max[p],
                        gate: Some(on),
                        tag: RowTag::Inverter,
                    });
                }
            }
        }

        // Linearized voltage drop and regulators.
        for &li in &idx.lines {
            if sc.is_faulted(li) {
                continue;
            }
            let l = &f.lines()[li];
            let (a, b) = f.ends(li);
            for p in 0..ph {
                let ua = v(t, Quantity::Volt { node: a, phase: p });
                let ub = v(t, Quantity::Volt { node: b, phase: p });
                if l.kind == LineKind::Regulator {
                    let ratio = l.regulator_ratio.as_ref().map_or(1.0, |r| r[p]);
                    prog.add_row(vec2(ub, 1.0, ua, -ratio * ratio), 0.0, 0.0, RowTag::Regulator);
                    continue;
                }
                let mut terms = vec2(ub, 1.0, ua, -1.0);
                for k in 0..ph {
                    let rr = l.r_at(ph, p, k);
                    let xx = l.x_at(ph, p, k);
                    if rr != 0.0 {
                        terms.push((v(t, Quantity::FlowP { line: li, phase: k }), 2.0 * rr));
                    }
                    if xx != 0.0 {
                        terms.push((v(t, Quantity::FlowQ { line: li, phase: k }), 2.0 * xx));
                    }
                }
                if l.is_switchable() {
                    let alpha = v(t, Quantity::LineOn { line: li });
                    let mut upper = terms.clone();
                    upper.push((alpha, big_m));
                    prog.add_row(upper, f64::NEG_INFINITY, big_m, RowTag::VoltageDropSwitched);
                    terms.push((alpha, -big_m));
                    prog.add_row(terms, -big_m, f64::INFINITY, RowTag::VoltageDropSwitched);
                } else {
                    prog.add_row(terms, 0.0, 0.0, RowTag::VoltageDrop);
                }
            }
        }

        // Nodal balance at owned non-substation nodes.
        for &n in &idx.owned_nodes {
            if n == sub {
                continue;
            }
            for p in 0..ph {
                let mut bp = Vec::new();
                let mut bq = Vec::new();
                for &li in f.incident(n) {
                    let (a, _) = f.ends(li);
                    let sign = if a == n { -1.0 } else { 1.0 };
                    bp.push((v(t, Quantity::FlowP { line: li, phase: p }), sign));
                    bq.push((v(t, Quantity::FlowQ { line: li, phase: p }), sign));
                }
                for &k in f.loads_at(n) {
                    bp.push((v(t, Quantity::LoadP { load: k, phase: p }), -1.0));
                    bq.push((v(t, Quantity::LoadQ { load: k, phase: p }), -1.0));
                }
                for &d in f.ders_at(n) {
                    bp.push((v(t, Quantity::GenP { der: d, phase: p }), 1.0));
                    bq.push((v(t, Quantity::GenQ { der: d, phase: p }), 1.0));
                }
                for &c in f.caps_at(n) {
                    bq.push((v(t, Quantity::CapQ { cap: c, phase: p }), 1.0));
                }
                prog.add_row(bp, 0.0, 0.0, RowTag::BalanceP);
                prog.add_row(bq, 0.0, 0.0, RowTag::BalanceQ);
            }
        }

        // Pickup never decreases.
        for &n in &idx.owned_nodes {
            for &k in f.loads_at(n) {
                for p in 0..ph {
                    let cur = v(t, Quantity::LoadP { load: k, phase: p });
                    if t > 0 {
                        let prev = v(t - 1, Quantity::LoadP { load: k, phase: p });
                        prog.add_row(vec2(cur, 1.0, prev, -1.0), 0.0, f64::INFINITY, RowTag::Sequencing);
                    } else {
                        let init = sc.initial_pickup[k][p];
                        if init > 0.0 {
                            prog.add_row(alloc::vec![(cur, 1.0)], init, f64::INFINITY, RowTag::Sequencing);
                        }
                    }
                }
            }
        }

        // Spanning tree and energization.
        for &li in &idx.lines {
            if sc.is_faulted(li) {
                continue;
            }
            let l = &f.lines()[li];
            let fw = v(t, Quantity::Parent { line: li, dir: Dir::Forward });
            let rv = v(t, Quantity::Parent { line: li, dir: Dir::Reverse });
            let (a, b) = f.ends(li);
            if l.is_switchable() {
                let alpha = v(t, Quantity::LineOn { line: li });
                prog.add_row(alloc::vec![(fw, 1.0), (rv, 1.0), (alpha, -1.0)], 0.0, 0.0, RowTag::TreeSwitch);
                for end in [a, b] {
                    if idx.owns(end) {
                        let on = v(t, Quantity::NodeOn { node: end });
                        prog.add_row(vec2(alpha, 1.0, on, -1.0), f64::NEG_INFINITY, 0.0, RowTag::ClosedEnergized);
                    }
                }
            } else {
                prog.add_row(vec2(fw, 1.0, rv, 1.0), 1.0, 1.0, RowTag::TreeLine);
                if idx.owns(a) && idx.owns(b) {
                    let oa = v(t, Quantity::NodeOn { node: a });
                    let ob = v(t, Quantity::NodeOn { node: b });
                    prog.add_row(vec2(oa, 1.0, ob, -1.0), 0.0, 0.0, RowTag::EnergizeTogether);
                }
            }
        }
        for &n in &idx.owned_nodes {
            if n == sub {
                continue;
            }
            let parents: Vec<(usize, f64)> = f
                .incident(n)
                .iter()
                .filter(|&&li| !sc.is_faulted(li))
                .map(|&li| {
                    let (a, _) = f.ends(li);
                    let dir = if a == n { Dir::Reverse } else { Dir::Forward };
                    (v(t, Quantity::Parent { line: li, dir }), 1.0)
                })
                .collect();
            prog.add_row(parents.clone(), f64::NEG_INFINITY, 1.0, RowTag::OneParent);
            let mut has_parent: Vec<(usize, f64)> = parents.iter().map(|(j, _)| (*j, -1.0)).collect();
            has_parent.push((v(t, Quantity::NodeOn { node: n }), 1.0));
            prog.add_row(has_parent, f64::NEG_INFINITY, 0.0, RowTag::EnergizedHasParent);
        }
    }
    prog
}

fn vec2(a: usize, ca: f64, b: usize, cb: f64) -> Vec<(usize, f64)> {
    alloc::vec![(a, ca), (b, cb)]
}

/// Fixes every relaxed binary to the given Boolean value and drops the
/// penalties on them. Values are keyed by [`VarKey`].
pub fn fix_binaries(
    prog: &mut ConvexProgram,
    idx: &VarIndex,
    assignment: &BTreeMap<VarKey, f64>,
) -> Result<(), SubproblemError> {
    for j in idx.binaries() {
        let key = idx.keys[j];
        let value = *assignment
            .get(&key)
            .ok_or_else(|| SubproblemError::MissingAssignment(prog.vars[j].label.clone()))?;
        if value != 0.0 && value != 1.0 {
            return Err(SubproblemError::NonBoolean { label: prog.vars[j].label.clone(), value });
        }
        let var = &mut prog.vars[j];
        if value < var.lower || value > var.upper {
            return Err(SubproblemError::Conflict { label: var.label.clone(), value });
        }
        var.lower = value;
        var.upper = value;
    }
    prog.penalties.retain(|p| !idx.is_binary(p.var));
    Ok(())
}

#[cfg(test)]
mod tests;
