//! Network, scenario and solver configuration data.
//!
//! All electrical quantities held here are per-unit on the feeder base.
//! A [`Feeder`] is immutable once built; [`validate_feeder`] reports
//! structural violations as data instead of failing.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Node identifier as it appears in the feeder file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// System base used for per-unit conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Base {
    pub s_mva: f64,
    pub v_kv: f64,
}

impl Base {
    /// Base impedance in ohms.
    pub fn z_ohm(&self) -> f64 {
        self.v_kv * self.v_kv / self.s_mva
    }

    /// Base power in kW (and kvar, kVA).
    pub fn s_kva(&self) -> f64 {
        self.s_mva * 1000.0
    }
}

impl Default for Base {
    fn default() -> Self {
        Base { s_mva: 1.0, v_kv: 4.16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Plain,
    Switchable,
    /// Normally-open switchable line.
    Tie,
    /// Fixed-ratio voltage regulator.
    Regulator,
}

impl LineKind {
    pub fn is_switchable(self) -> bool {
        matches!(self, LineKind::Switchable | LineKind::Tie)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LineKind::Plain => "plain",
            LineKind::Switchable => "switchable",
            LineKind::Tie => "tie",
            LineKind::Regulator => "regulator",
        }
    }

    pub fn parse(s: &str) -> Option<LineKind> {
        match s {
            "plain" => Some(LineKind::Plain),
            "switchable" => Some(LineKind::Switchable),
            "tie" => Some(LineKind::Tie),
            "regulator" => Some(LineKind::Regulator),
            _ => None,
        }
    }
}

/// A three-phase (or single-phase) line segment. Power flow is oriented
/// `from -> to`; impedances are the phase-coupled matrices used directly by
/// the linearized voltage drop.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub from: NodeId,
    pub to: NodeId,
    /// Row-major `phase_count x phase_count`.
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    pub s_max: Vec<f64>,
    pub kind: LineKind,
    pub switch_priority: f64,
    pub regulator_ratio: Option<Vec<f64>>,
}

impl Line {
    pub fn is_switchable(&self) -> bool {
        self.kind.is_switchable()
    }

    pub fn r_at(&self, phases: usize, row: usize, col: usize) -> f64 {
        self.r[row * phases + col]
    }

    pub fn x_at(&self, phases: usize, row: usize, col: usize) -> f64 {
        self.x[row * phases + col]
    }

    pub fn other_end(&self, node: NodeId) -> NodeId {
        if self.from == node {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub node: NodeId,
    pub p_max: Vec<f64>,
    pub q_max: Vec<f64>,
    pub priority: Vec<f64>,
    pub dispatchable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerUnit {
    pub node: NodeId,
    pub s_inv_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapBank {
    pub node: NodeId,
    pub q_cap_max: Vec<f64>,
}

/// Raw parts used to assemble a [`Feeder`].
#[derive(Debug, Clone, Default)]
pub struct FeederParts {
    pub base: Base,
    pub phase_count: usize,
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    pub ders: Vec<DerUnit>,
    pub caps: Vec<CapBank>,
    pub substation: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeederError {
    NoNodes,
    UnknownNode { context: String, node: NodeId },
    UnknownSubstation(NodeId),
    PhaseCount(usize),
    PhaseLength { context: String, expected: usize, got: usize },
}

impl fmt::Display for FeederError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeederError::NoNodes => write!(f, "no nodes"),
            FeederError::UnknownNode { context, node } => {
                write!(f, "unknown node {node} referenced by {context}")
            }
            FeederError::UnknownSubstation(n) => write!(f, "unknown node {n} given as substation"),
            FeederError::PhaseCount(p) => write!(f, "phase_count must be 1 or 3, got {p}"),
            FeederError::PhaseLength { context, expected, got } => {
                write!(f, "{context}: expected {expected} entries, got {got}")
            }
        }
    }
}

impl core::error::Error for FeederError {}

/// Immutable distribution network.
#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    base: Base,
    phase_count: usize,
    nodes: Vec<Node>,
    lines: Vec<Line>,
    loads: Vec<Load>,
    ders: Vec<DerUnit>,
    caps: Vec<CapBank>,
    substation: NodeId,
    node_index: BTreeMap<NodeId, usize>,
    incident: Vec<Vec<usize>>,
    loads_at: Vec<Vec<usize>>,
    ders_at: Vec<Vec<usize>>,
    caps_at: Vec<Vec<usize>>,
}

impl Feeder {
    /// Assembles a feeder, checking referential integrity and vector sizes.
    /// Topological invariants are left to [`validate_feeder`].
    pub fn new(parts: FeederParts) -> Result<Feeder, FeederError> {
        let FeederParts { base, phase_count, nodes, lines, loads, ders, caps, substation } = parts;
        if nodes.is_empty() {
            return Err(FeederError::NoNodes);
        }
        if phase_count != 1 && phase_count != 3 {
            return Err(FeederError::PhaseCount(phase_count));
        }
        let mut node_index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            node_index.entry(n.id).or_insert(i);
        }
        let lookup = |context: String, node: NodeId| -> Result<usize, FeederError> {
            node_index.get(&node).copied().ok_or(FeederError::UnknownNode { context, node })
        };
        if !node_index.contains_key(&substation) {
            return Err(FeederError::UnknownSubstation(substation));
        }
        let check_len = |context: String, v: &[f64], expected: usize| {
            if v.len() == expected {
                Ok(())
            } else {
                Err(FeederError::PhaseLength { context, expected, got: v.len() })
            }
        };
        let ph = phase_count;
        let mut incident = vec![Vec::new(); nodes.len()];
        for (li, l) in lines.iter().enumerate() {
            let a = lookup(format!("line {}", l.id), l.from)?;
            let b = lookup(format!("line {}", l.id), l.to)?;
            check_len(format!("line {} r", l.id), &l.r, ph * ph)?;
            check_len(format!("line {} x", l.id), &l.x, ph * ph)?;
            check_len(format!("line {} s_max", l.id), &l.s_max, ph)?;
            if let Some(a) = &l.regulator_ratio {
                check_len(format!("line {} regulator_ratio", l.id), a, ph)?;
            }
            incident[a].push(li);
            if b != a {
                incident[b].push(li);
            }
        }
        let mut loads_at = vec![Vec::new(); nodes.len()];
        for (k, l) in loads.iter().enumerate() {
            let n = lookup(format!("load #{k}"), l.node)?;
            check_len(format!("load #{k} p_max"), &l.p_max, ph)?;
            check_len(format!("load #{k} q_max"), &l.q_max, ph)?;
            check_len(format!("load #{k} priority"), &l.priority, ph)?;
            loads_at[n].push(k);
        }
        let mut ders_at = vec![Vec::new(); nodes.len()];
        for (k, d) in ders.iter().enumerate() {
            let n = lookup(format!("der #{k}"), d.node)?;
            check_len(format!("der #{k} s_inv_max"), &d.s_inv_max, ph)?;
            ders_at[n].push(k);
        }
        let mut caps_at = vec![Vec::new(); nodes.len()];
        for (k, c) in caps.iter().enumerate() {
            let n = lookup(format!("cap #{k}"), c.node)?;
            check_len(format!("cap #{k} q_cap_max"), &c.q_cap_max, ph)?;
            caps_at[n].push(k);
        }
        Ok(Feeder {
            base,
            phase_count,
            nodes,
            lines,
            loads,
            ders,
            caps,
            substation,
            node_index,
            incident,
            loads_at,
            ders_at,
            caps_at,
        })
    }

    pub fn base(&self) -> Base {
        self.base
    }

    pub fn phase_count(&self) -> usize {
        self.phase_count
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn loads(&self) -> &[Load] {
        &self.loads
    }

    pub fn ders(&self) -> &[DerUnit] {
        &self.ders
    }

    pub fn caps(&self) -> &[CapBank] {
        &self.caps
    }

    pub fn substation(&self) -> NodeId {
        self.substation
    }

    pub fn substation_index(&self) -> usize {
        self.node_index[&self.substation]
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    /// Endpoint node indices of a line.
    pub fn ends(&self, line: usize) -> (usize, usize) {
        let l = &self.lines[line];
        (self.node_index[&l.from], self.node_index[&l.to])
    }

    /// Lines touching a node (by node index).
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.incident[node]
    }

    pub fn loads_at(&self, node: usize) -> &[usize] {
        &self.loads_at[node]
    }

    pub fn ders_at(&self, node: usize) -> &[usize] {
        &self.ders_at[node]
    }

    pub fn caps_at(&self, node: usize) -> &[usize] {
        &self.caps_at[node]
    }

    pub fn load_node(&self, load: usize) -> usize {
        self.node_index[&self.loads[load].node]
    }

    /// Mean load priority across loads and phases; 1.0 when there are no loads.
    pub fn mean_load_priority(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for l in &self.loads {
            for w in &l.priority {
                sum += *w;
                n += 1;
            }
        }
        if n == 0 {
            1.0
        } else {
            sum / n as f64
        }
    }

    /// Lines that are closed in the normal configuration (everything but ties).
    pub fn normal_lines(&self) -> impl Iterator<Item = usize> + '_ {
        self.lines.iter().enumerate().filter(|(_, l)| l.kind != LineKind::Tie).map(|(i, _)| i)
    }

    /// Returns a copy with all parts exposed for editing.
    pub fn to_parts(&self) -> FeederParts {
        FeederParts {
            base: self.base,
            phase_count: self.phase_count,
            nodes: self.nodes.clone(),
            lines: self.lines.clone(),
            loads: self.loads.clone(),
            ders: self.ders.clone(),
            caps: self.caps.clone(),
            substation: self.substation,
        }
    }
}

/// A single invariant violation found by [`validate_feeder`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateNodeId(NodeId),
    DuplicateLineId(String),
    SelfLoop(String),
    AsymmetricImpedance(String),
    NonPositiveCapacity(String),
    RegulatorRatio(String),
    NegativeDemand(usize),
    NonPositivePriority(usize),
    NegativeInverter(usize),
    NegativeCapBank(usize),
    CycleUnderNormalTopology,
    Disconnected { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNodeId(n) => write!(f, "duplicate id: node {n}"),
            Violation::DuplicateLineId(l) => write!(f, "duplicate id: line {l}"),
            Violation::SelfLoop(l) => write!(f, "line {l} connects a node to itself"),
            Violation::AsymmetricImpedance(l) => write!(f, "line {l}: r or x is not symmetric"),
            Violation::NonPositiveCapacity(l) => write!(f, "line {l}: s_max must be positive"),
            Violation::RegulatorRatio(l) => {
                write!(f, "line {l}: regulator_ratio must be present iff kind=regulator, within [0.9, 1.1]")
            }
            Violation::NegativeDemand(k) => write!(f, "load #{k}: p_max/q_max must be >= 0"),
            Violation::NonPositivePriority(k) => write!(f, "load #{k}: priority must be > 0"),
            Violation::NegativeInverter(k) => write!(f, "der #{k}: s_inv_max must be >= 0"),
            Violation::NegativeCapBank(k) => write!(f, "cap #{k}: q_cap_max must be >= 0"),
            Violation::CycleUnderNormalTopology => write!(f, "cycle under normal topology"),
            Violation::Disconnected { node } => {
                write!(f, "node {node} is not connected to the substation")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every feeder invariant and lists the violations found.
pub fn validate_feeder(f: &Feeder) -> ValidationReport {
    let mut v = Vec::new();
    let ph = f.phase_count;

    let mut seen = BTreeSet::new();
    for n in &f.nodes {
        if !seen.insert(n.id) {
            v.push(Violation::DuplicateNodeId(n.id));
        }
    }
    let mut seen_lines = BTreeSet::new();
    for l in &f.lines {
        if !seen_lines.insert(l.id.as_str()) {
            v.push(Violation::DuplicateLineId(l.id.clone()));
        }
        if l.from == l.to {
            v.push(Violation::SelfLoop(l.id.clone()));
        }
        let symmetric = (0..ph).all(|i| {
            (0..ph).all(|j| l.r[i * ph + j] == l.r[j * ph + i] && l.x[i * ph + j] == l.x[j * ph + i])
        });
        if !symmetric {
            v.push(Violation::AsymmetricImpedance(l.id.clone()));
        }
        if l.s_max.iter().any(|s| !(*s > 0.0)) {
            v.push(Violation::NonPositiveCapacity(l.id.clone()));
        }
        let ratio_ok = match (&l.regulator_ratio, l.kind) {
            (Some(a), LineKind::Regulator) => a.iter().all(|a| (0.9..=1.1).contains(a)),
            (None, LineKind::Regulator) | (Some(_), _) => false,
            (None, _) => true,
        };
        if !ratio_ok {
            v.push(Violation::RegulatorRatio(l.id.clone()));
        }
    }
    for (k, l) in f.loads.iter().enumerate() {
        if l.p_max.iter().chain(l.q_max.iter()).any(|p| !(*p >= 0.0)) {
            v.push(Violation::NegativeDemand(k));
        }
        if l.priority.iter().any(|w| !(*w > 0.0)) {
            v.push(Violation::NonPositivePriority(k));
        }
    }
    for (k, d) in f.ders.iter().enumerate() {
        if d.s_inv_max.iter().any(|s| !(*s >= 0.0)) {
            v.push(Violation::NegativeInverter(k));
        }
    }
    for (k, c) in f.caps.iter().enumerate() {
        if c.q_cap_max.iter().any(|q| !(*q >= 0.0)) {
            v.push(Violation::NegativeCapBank(k));
        }
    }

    // Normal topology must be a tree rooted at the substation.
    let n = f.nodes.len();
    let mut dsu = Dsu::new(n);
    let mut cycle = false;
    for li in f.normal_lines() {
        let (a, b) = f.ends(li);
        if a != b && !dsu.union(a, b) {
            cycle = true;
        }
    }
    if cycle {
        v.push(Violation::CycleUnderNormalTopology);
    }
    let root = dsu.find(f.substation_index());
    for (i, node) in f.nodes.iter().enumerate() {
        if f.node_index[&node.id] == i && dsu.find(i) != root {
            v.push(Violation::Disconnected { node: node.id });
        }
    }
    ValidationReport { violations: v }
}

/// Disjoint-set union with path halving.
#[derive(Debug, Clone)]
pub(crate) struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub(crate) fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Bulk-system capability at the substation for one step (p.u.).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstationCapacity {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Indices into `Feeder::lines`.
    pub faulted_lines: BTreeSet<usize>,
    pub substation_profile: Vec<SubstationCapacity>,
    pub horizon: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub step_minutes: f64,
    /// Active pickup per load and phase before the first step; sequencing
    /// starts from these values.
    pub initial_pickup: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    UnknownLine(String),
    ZeroHorizon,
    ProfileLength { horizon: usize, got: usize },
    DecreasingProfile { step: usize },
    NegativeCapacity { step: usize },
    VoltageLimits { v_min: f64, v_max: f64 },
    InitialPickup(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::UnknownLine(l) => write!(f, "unknown line id {l}"),
            ScenarioError::ZeroHorizon => write!(f, "horizon must be at least 1"),
            ScenarioError::ProfileLength { horizon, got } => {
                write!(f, "profile has {got} entries but horizon is {horizon}")
            }
            ScenarioError::DecreasingProfile { step } => {
                write!(f, "substation P capacity decreases at step {}", step + 1)
            }
            ScenarioError::NegativeCapacity { step } => {
                write!(f, "negative substation capacity at step {}", step + 1)
            }
            ScenarioError::VoltageLimits { v_min, v_max } => {
                write!(f, "voltage limits must satisfy 0 < v_min < v_max (got {v_min}, {v_max})")
            }
            ScenarioError::InitialPickup(m) => write!(f, "initial pickup: {m}"),
        }
    }
}

impl core::error::Error for ScenarioError {}

/// Builds a restoration scenario with default voltage limits (0.95-1.05 p.u.)
/// and 15-minute steps.
pub fn make_scenario(
    f: &Feeder,
    faults: &[&str],
    profile: &[SubstationCapacity],
    horizon: usize,
) -> Result<Scenario, ScenarioError> {
    let mut faulted_lines = BTreeSet::new();
    for id in faults {
        let idx = f.line_index(id).ok_or_else(|| ScenarioError::UnknownLine(String::from(*id)))?;
        faulted_lines.insert(idx);
    }
    let s = Scenario {
        faulted_lines,
        substation_profile: profile.to_vec(),
        horizon,
        v_min: 0.95,
        v_max: 1.05,
        step_minutes: 15.0,
        initial_pickup: f.loads().iter().map(|_| vec![0.0; f.phase_count()]).collect(),
    };
    s.validate(f)?;
    Ok(s)
}

impl Scenario {
    pub fn with_voltage_limits(mut self, v_min: f64, v_max: f64) -> Self {
        self.v_min = v_min;
        self.v_max = v_max;
        self
    }

    pub fn with_step_minutes(mut self, minutes: f64) -> Self {
        self.step_minutes = minutes;
        self
    }

    pub fn with_initial_pickup(mut self, pickup: Vec<Vec<f64>>) -> Self {
        self.initial_pickup = pickup;
        self
    }

    pub fn validate(&self, f: &Feeder) -> Result<(), ScenarioError> {
        if self.horizon == 0 {
            return Err(ScenarioError::ZeroHorizon);
        }
        if self.substation_profile.len() != self.horizon {
            return Err(ScenarioError::ProfileLength {
                horizon: self.horizon,
                got: self.substation_profile.len(),
            });
        }
        for (t, c) in self.substation_profile.iter().enumerate() {
            if c.p < 0.0 || c.q < 0.0 {
                return Err(ScenarioError::NegativeCapacity { step: t });
            }
            if t > 0 && c.p < self.substation_profile[t - 1].p {
                return Err(ScenarioError::DecreasingProfile { step: t });
            }
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max) {
            return Err(ScenarioError::VoltageLimits { v_min: self.v_min, v_max: self.v_max });
        }
        if let Some(&li) = self.faulted_lines.iter().find(|&&l| l >= f.lines().len()) {
            return Err(ScenarioError::UnknownLine(format!("#{li}")));
        }
        if self.initial_pickup.len() != f.loads().len()
            || self.initial_pickup.iter().any(|p| p.len() != f.phase_count())
        {
            return Err(ScenarioError::InitialPickup(String::from(
                "one entry per load and phase is required",
            )));
        }
        for (k, p) in self.initial_pickup.iter().enumerate() {
            let load = &f.loads()[k];
            if p.iter().zip(&load.p_max).any(|(v, m)| *v < 0.0 || *v > *m + 1e-12) {
                return Err(ScenarioError::InitialPickup(format!("load #{k} outside [0, p_max]")));
            }
        }
        Ok(())
    }

    pub fn is_faulted(&self, line: usize) -> bool {
        self.faulted_lines.contains(&line)
    }

    /// Faulted line ids, for reporting.
    pub fn faulted_ids(&self, f: &Feeder) -> Vec<String> {
        self.faulted_lines.iter().map(|&i| f.lines()[i].id.clone()).collect()
    }

    /// Nodes forced de-energized by fault isolation.
    pub fn isolated_nodes(&self, f: &Feeder) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        for &li in &self.faulted_lines {
            let (a, b) = f.ends(li);
            s.insert(a);
            s.insert(b);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Relax-drive-polish consensus ADMM.
    NcAdmm,
    /// Hard projection of the relaxed binaries at every iteration.
    Projection,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NcAdmm => "nc_admm",
            Mode::Projection => "projection",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "nc_admm" | "nc-admm" => Some(Mode::NcAdmm),
            "projection" => Some(Mode::Projection),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// ADMM penalty factor.
    pub rho: f64,
    /// Growth gain of the proximal regularization factor.
    pub c: f64,
    /// Base residual tolerance, scaled by sqrt(#agents).
    pub eps: f64,
    /// Relax-phase tolerance multiplier.
    pub relax_tol_factor: f64,
    pub max_iters: usize,
    /// Cap on drive-phase iterations.
    pub max_prox_iters: usize,
    /// Consecutive unchanged projections required to leave the project phase.
    pub project_stable_iters: usize,
    pub big_m: f64,
    pub polygon_sides: usize,
    pub c1: f64,
    /// `None` resolves to 0.01 x mean load priority.
    pub c2: Option<f64>,
    pub mode: Mode,
    /// Tolerance of the embedded QP solver.
    pub qp_tol: f64,
    /// Consensus residual the polish phase keeps iterating to after reaching
    /// `eps * sqrt(#agents)`, so assembled plans balance to the checker tolerance.
    pub plan_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            c: 0.1,
            eps: 1e-4,
            relax_tol_factor: 10.0,
            max_iters: 5000,
            max_prox_iters: 1500,
            project_stable_iters: 3,
            big_m: 5.0,
            polygon_sides: 12,
            c1: 1.0,
            c2: None,
            mode: Mode::NcAdmm,
            qp_tol: 1e-6,
            plan_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid solver configuration: {}", self.0)
    }
}

impl core::error::Error for ConfigError {}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("rho", self.rho),
            ("c", self.c),
            ("eps", self.eps),
            ("relax_tol_factor", self.relax_tol_factor),
            ("big_m", self.big_m),
            ("c1", self.c1),
            ("qp_tol", self.qp_tol),
            ("plan_tol", self.plan_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError(format!("{name} must be > 0 (got {v})")));
            }
        }
        if let Some(c2) = self.c2 {
            if !(c2 > 0.0) {
                return Err(ConfigError(format!("c2 must be > 0 (got {c2})")));
            }
        }
        if self.polygon_sides < 8 || self.polygon_sides % 2 != 0 {
            return Err(ConfigError(format!(
                "polygon_sides must be even and >= 8 (got {})",
                self.polygon_sides
            )));
        }
        if self.max_iters == 0 {
            return Err(ConfigError(String::from("max_iters must be >= 1")));
        }
        Ok(())
    }

    pub fn resolved_c2(&self, f: &Feeder) -> f64 {
        self.c2.unwrap_or_else(|| 0.01 * f.mean_load_priority())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn line(id: &str, from: u32, to: u32, kind: LineKind) -> Line {
        Line {
            id: String::from(id),
            from: NodeId(from),
            to: NodeId(to),
            r: vec![0.01],
            x: vec![0.02],
            s_max: vec![5.0],
            kind,
            switch_priority: if kind == LineKind::Tie { 1.0 } else { 2.0 },
            regulator_ratio: None,
        }
    }

    fn f6_parts() -> FeederParts {
        FeederParts {
            base: Base::default(),
            phase_count: 1,
            nodes: (1..=6).map(|i| Node { id: NodeId(i) }).collect(),
            lines: vec![
                line("1-2", 1, 2, LineKind::Plain),
                line("2-3", 2, 3, LineKind::Plain),
                line("2-4", 2, 4, LineKind::Switchable),
                line("4-5", 4, 5, LineKind::Plain),
                line("1-6", 1, 6, LineKind::Plain),
                line("3-5", 3, 5, LineKind::Tie),
            ],
            loads: vec![Load {
                node: NodeId(3),
                p_max: vec![0.2],
                q_max: vec![0.1],
                priority: vec![10.0],
                dispatchable: false,
            }],
            ders: vec![],
            caps: vec![],
            substation: NodeId(1),
        }
    }

    #[test]
    fn tree_with_open_tie_is_valid() {
        let f = Feeder::new(f6_parts()).unwrap();
        assert_eq!(f.nodes().len(), 6);
        assert_eq!(f.lines().len(), 6);
        assert!(validate_feeder(&f).ok());
    }

    #[test]
    fn closed_tie_creates_cycle() {
        let mut p = f6_parts();
        p.lines[5].kind = LineKind::Switchable;
        let r = validate_feeder(&Feeder::new(p).unwrap());
        assert!(r.violations.contains(&Violation::CycleUnderNormalTopology));
        assert_eq!(format!("{}", r.violations[0]), "cycle under normal topology");
    }

    #[test]
    fn duplicate_node_reported() {
        let mut p = f6_parts();
        p.nodes.push(Node { id: NodeId(3) });
        let r = validate_feeder(&Feeder::new(p).unwrap());
        assert!(r.violations.contains(&Violation::DuplicateNodeId(NodeId(3))));
        assert!(format!("{}", r.violations[0]).contains("duplicate id"));
    }

    #[test]
    fn unknown_node_and_empty_feeder_rejected() {
        let mut p = f6_parts();
        p.lines.push(line("2-99", 2, 99, LineKind::Plain));
        let e = Feeder::new(p).unwrap_err();
        assert!(format!("{e}").contains("unknown node"));

        let mut p = f6_parts();
        p.nodes.clear();
        assert_eq!(Feeder::new(p).unwrap_err(), FeederError::NoNodes);
    }

    #[test]
    fn regulator_ratio_must_match_kind() {
        let mut p = f6_parts();
        p.lines[0].kind = LineKind::Regulator;
        let r = validate_feeder(&Feeder::new(p.clone()).unwrap());
        assert!(r.violations.contains(&Violation::RegulatorRatio(String::from("1-2"))));
        p.lines[0].regulator_ratio = Some(vec![1.2]);
        assert!(!validate_feeder(&Feeder::new(p.clone()).unwrap()).ok());
        p.lines[0].regulator_ratio = Some(vec![1.05]);
        assert!(validate_feeder(&Feeder::new(p).unwrap()).ok());
    }

    #[test]
    fn scenario_construction() {
        let f = Feeder::new(f6_parts()).unwrap();
        let prof = [SubstationCapacity { p: 0.5, q: 0.3 }, SubstationCapacity { p: 1.0, q: 0.6 }];
        let s = make_scenario(&f, &[], &prof, 2).unwrap();
        assert!(s.faulted_lines.is_empty());
        assert_eq!(s.horizon, 2);

        let s = make_scenario(&f, &["2-4"], &prof, 2).unwrap();
        assert_eq!(s.faulted_ids(&f), vec![String::from("2-4")]);

        assert_eq!(make_scenario(&f, &[], &[], 0).unwrap_err(), ScenarioError::ZeroHorizon);
        assert!(matches!(
            make_scenario(&f, &["9-9"], &prof, 2),
            Err(ScenarioError::UnknownLine(_))
        ));
        assert!(matches!(
            make_scenario(&f, &[], &prof[..1], 2),
            Err(ScenarioError::ProfileLength { .. })
        ));
        let falling = [prof[1], prof[0]];
        assert!(matches!(
            make_scenario(&f, &[], &falling, 2),
            Err(ScenarioError::DecreasingProfile { step: 1 })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { eps: 0.0, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { polygon_sides: 9, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let f = Feeder::new(f6_parts()).unwrap();
        assert!((SolverConfig::default().resolved_c2(&f) - 0.1).abs() < 1e-15);
    }
}
