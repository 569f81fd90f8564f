use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::plan::RestorationPlan;
use super::StepPlan;
use crate::feeder::{Dsu, Feeder, LineKind, Scenario};
use crate::math;

/// Absolute tolerance of every plan check.
pub const CHECK_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    /// Wrong vector lengths or values outside variable bounds.
    Shape,
    /// Pickup, generation or flow on de-energized or open elements.
    Gating,
    Balance,
    VoltageDrop,
    VoltageLimit,
    /// Line, inverter and substation capability.
    Capacity,
    Radiality,
    FaultIsolation,
    Sequencing,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Shape => "shape",
            ViolationKind::Gating => "gating",
            ViolationKind::Balance => "balance",
            ViolationKind::VoltageDrop => "voltage_drop",
            ViolationKind::VoltageLimit => "voltage_limit",
            ViolationKind::Capacity => "capacity",
            ViolationKind::Radiality => "radiality",
            ViolationKind::FaultIsolation => "fault_isolation",
            ViolationKind::Sequencing => "sequencing",
        }
    }

    pub fn parse(s: &str) -> Option<ViolationKind> {
        ViolationKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub const ALL: [ViolationKind; 9] = [
        ViolationKind::Shape,
        ViolationKind::Gating,
        ViolationKind::Balance,
        ViolationKind::VoltageDrop,
        ViolationKind::VoltageLimit,
        ViolationKind::Capacity,
        ViolationKind::Radiality,
        ViolationKind::FaultIsolation,
        ViolationKind::Sequencing,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanViolation {
    /// Zero-based step.
    pub step: usize,
    pub kind: ViolationKind,
    pub element: String,
    /// Size of the violation; zero for purely structural ones.
    pub amount: f64,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {} at {} ({:.3e})", self.step + 1, self.kind.as_str(), self.element, self.amount)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<PlanViolation>,
}

impl FeasibilityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

struct Sink<'a> {
    step: usize,
    out: &'a mut Vec<PlanViolation>,
}

impl Sink<'_> {
    fn flag(&mut self, kind: ViolationKind, element: String, amount: f64) {
        self.out.push(PlanViolation { step: self.step, kind, element, amount });
    }

    /// Flags `value` outside `[lo, hi]` by more than the tolerance.
    fn range(&mut self, kind: ViolationKind, element: impl FnOnce() -> String, value: f64, lo: f64, hi: f64) {
        let excess = (lo - value).max(value - hi);
        if !(excess <= CHECK_TOL) {
            self.flag(kind, element(), if excess.is_nan() { f64::INFINITY } else { excess });
        }
    }
}

/// Re-evaluates every restoration constraint on a finished plan.
pub fn plan_feasibility_check(plan: &RestorationPlan, f: &Feeder, sc: &Scenario) -> FeasibilityReport {
    check_steps(&plan.steps, f, sc)
}

pub(crate) fn check_steps(steps: &[StepPlan], f: &Feeder, sc: &Scenario) -> FeasibilityReport {
    let mut out = Vec::new();
    if steps.len() != sc.horizon {
        out.push(PlanViolation {
            step: 0,
            kind: ViolationKind::Shape,
            element: format!("{} steps for horizon {}", steps.len(), sc.horizon),
            amount: 0.0,
        });
        return FeasibilityReport { violations: out };
    }
    for (t, s) in steps.iter().enumerate() {
        let mut sink = Sink { step: t, out: &mut out };
        if !shape_ok(s, f) {
            sink.flag(ViolationKind::Shape, String::from("plan vectors"), 0.0);
            continue;
        }
        check_topology(s, f, sc, t, &mut sink);
        check_devices(s, f, &mut sink);
        check_network(s, f, sc, t, &mut sink);
        let prev = if t == 0 { None } else { Some(&steps[t - 1]) };
        check_sequencing(s, prev, f, sc, &mut sink);
    }
    FeasibilityReport { violations: out }
}

fn shape_ok(s: &StepPlan, f: &Feeder) -> bool {
    let ph = f.phase_count();
    let rows = |v: &Vec<Vec<f64>>, n: usize| v.len() == n && v.iter().all(|r| r.len() == ph);
    s.line_closed.len() == f.lines().len()
        && s.node_energized.len() == f.nodes().len()
        && s.load_on.len() == f.loads().len()
        && rows(&s.load_p, f.loads().len())
        && rows(&s.load_q, f.loads().len())
        && rows(&s.der_p, f.ders().len())
        && rows(&s.der_q, f.ders().len())
        && rows(&s.cap_q, f.caps().len())
        && rows(&s.voltage, f.nodes().len())
        && rows(&s.flow_p, f.lines().len())
        && rows(&s.flow_q, f.lines().len())
}

/// Radiality and fault isolation from the switch and energization states.
pub(crate) fn topology_violations(
    f: &Feeder,
    sc: &Scenario,
    step: usize,
    line_closed: &[bool],
    node_on: &[bool],
) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let mut sink = Sink { step, out: &mut out };
    let nid = |n: usize| f.nodes()[n].id;
    let sub = f.substation_index();

    for li in 0..f.lines().len() {
        let l = &f.lines()[li];
        let (a, b) = f.ends(li);
        if sc.is_faulted(li) {
            if line_closed[li] {
                sink.flag(ViolationKind::FaultIsolation, format!("line {} closed", l.id), 0.0);
            }
            for n in [a, b] {
                if node_on[n] {
                    sink.flag(ViolationKind::FaultIsolation, format!("node {} energized next to {}", nid(n), l.id), 0.0);
                }
            }
            continue;
        }
        if !l.is_switchable() && !line_closed[li] {
            sink.flag(ViolationKind::Radiality, format!("line {} cannot open", l.id), 0.0);
        }
        if line_closed[li] && node_on[a] != node_on[b] {
            sink.flag(ViolationKind::Radiality, format!("line {} joins live and dead nodes", l.id), 0.0);
        }
        if l.is_switchable() && line_closed[li] && !node_on[a] && !node_on[b] {
            sink.flag(ViolationKind::Radiality, format!("switch {} closed on dead ends", l.id), 0.0);
        }
    }

    if node_on[sub] && !(sc.substation_profile[step].p > 0.0) {
        sink.flag(ViolationKind::Capacity, String::from("substation energized without supply"), 0.0);
    }

    // Energized part: closed lines between energized nodes.
    let mut dsu = Dsu::new(f.nodes().len());
    let mut adj = vec![Vec::new(); f.nodes().len()];
    for li in 0..f.lines().len() {
        let (a, b) = f.ends(li);
        if sc.is_faulted(li) || !line_closed[li] || !node_on[a] || !node_on[b] {
            continue;
        }
        if !dsu.union(a, b) {
            sink.flag(ViolationKind::Radiality, format!("loop through line {}", f.lines()[li].id), 0.0);
        }
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut reached = vec![false; f.nodes().len()];
    if node_on[sub] {
        let mut queue = VecDeque::from([sub]);
        reached[sub] = true;
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if !reached[m] {
                    reached[m] = true;
                    queue.push_back(m);
                }
            }
        }
    }
    for n in 0..f.nodes().len() {
        if node_on[n] && !reached[n] {
            sink.flag(ViolationKind::Radiality, format!("node {} energized without a path to the substation", nid(n)), 0.0);
        }
    }
    out
}

fn check_topology(s: &StepPlan, f: &Feeder, sc: &Scenario, t: usize, sink: &mut Sink<'_>) {
    sink.out.extend(topology_violations(f, sc, t, &s.line_closed, &s.node_energized));
}

fn check_devices(s: &StepPlan, f: &Feeder, sink: &mut Sink<'_>) {
    let ph = f.phase_count();
    for (k, load) in f.loads().iter().enumerate() {
        let n = f.load_node(k);
        let on = s.node_energized[n];
        if load.dispatchable {
            for p in 0..ph {
                let (hp, hq) = if on { (load.p_max[p], load.q_max[p]) } else { (0.0, 0.0) };
                sink.range(ViolationKind::Gating, || format!("load #{k} p"), s.load_p[k][p], 0.0, hp);
                sink.range(ViolationKind::Gating, || format!("load #{k} q"), s.load_q[k][p], 0.0, hq);
            }
        } else {
            if s.load_on[k] && !on {
                sink.flag(ViolationKind::Gating, format!("load #{k} picked up at a dead node"), 0.0);
            }
            let x = if s.load_on[k] { 1.0 } else { 0.0 };
            for p in 0..ph {
                let (wp, wq) = (load.p_max[p] * x, load.q_max[p] * x);
                sink.range(ViolationKind::Gating, || format!("load #{k} p"), s.load_p[k][p], wp, wp);
                sink.range(ViolationKind::Gating, || format!("load #{k} q"), s.load_q[k][p], wq, wq);
            }
        }
    }
    for (d, der) in f.ders().iter().enumerate() {
        let on = s.node_energized[f.node_index(der.node).unwrap_or(0)];
        for p in 0..ph {
            let cap = if on { der.s_inv_max[p] } else { 0.0 };
            sink.range(ViolationKind::Gating, || format!("der #{d} p"), s.der_p[d][p], 0.0, cap);
            let mag = math::sqrt(s.der_p[d][p] * s.der_p[d][p] + s.der_q[d][p] * s.der_q[d][p]);
            sink.range(ViolationKind::Capacity, || format!("der #{d} inverter"), mag, 0.0, cap);
        }
    }
    for (c, bank) in f.caps().iter().enumerate() {
        let on = s.node_energized[f.node_index(bank.node).unwrap_or(0)];
        for p in 0..ph {
            let cap = if on { bank.q_cap_max[p] } else { 0.0 };
            sink.range(ViolationKind::Gating, || format!("cap #{c} q"), s.cap_q[c][p], 0.0, cap);
        }
    }
}

fn check_network(s: &StepPlan, f: &Feeder, sc: &Scenario, t: usize, sink: &mut Sink<'_>) {
    let ph = f.phase_count();
    let sub = f.substation_index();
    let nid = |n: usize| f.nodes()[n].id;
    let (vmin2, vmax2) = (sc.v_min * sc.v_min, sc.v_max * sc.v_max);

    for n in 0..f.nodes().len() {
        for p in 0..ph {
            let u = s.voltage[n][p];
            let (lo, hi) = match (s.node_energized[n], n == sub) {
                (false, _) => (0.0, 0.0),
                (true, true) => (1.0, 1.0),
                (true, false) => (vmin2, vmax2),
            };
            sink.range(ViolationKind::VoltageLimit, || format!("node {} phase {p}", nid(n)), u, lo, hi);
        }
    }

    for (li, l) in f.lines().iter().enumerate() {
        let (a, b) = f.ends(li);
        let live = s.line_closed[li] && !sc.is_faulted(li);
        for p in 0..ph {
            let (fp, fq) = (s.flow_p[li][p], s.flow_q[li][p]);
            if live {
                let mag = math::sqrt(fp * fp + fq * fq);
                sink.range(ViolationKind::Capacity, || format!("line {} phase {p}", l.id), mag, 0.0, l.s_max[p]);
            } else {
                sink.range(ViolationKind::Gating, || format!("line {} p", l.id), fp, 0.0, 0.0);
                sink.range(ViolationKind::Gating, || format!("line {} q", l.id), fq, 0.0, 0.0);
            }
            if !live {
                continue;
            }
            let (ua, ub) = (s.voltage[a][p], s.voltage[b][p]);
            let residual = if l.kind == LineKind::Regulator {
                let ratio = l.regulator_ratio.as_ref().map_or(1.0, |r| r[p]);
                ub - ratio * ratio * ua
            } else {
                let mut drop = 0.0;
                for k in 0..ph {
                    drop += l.r_at(ph, p, k) * s.flow_p[li][k] + l.x_at(ph, p, k) * s.flow_q[li][k];
                }
                ub - ua + 2.0 * drop
            };
            sink.range(ViolationKind::VoltageDrop, || format!("line {} phase {p}", l.id), residual, 0.0, 0.0);
        }
    }

    // Net injection per node: inflow minus outflow minus demand plus supply.
    for n in 0..f.nodes().len() {
        for p in 0..ph {
            let mut bp = 0.0;
            let mut bq = 0.0;
            for &li in f.incident(n) {
                let sign = if f.ends(li).1 == n { 1.0 } else { -1.0 };
                bp += sign * s.flow_p[li][p];
                bq += sign * s.flow_q[li][p];
            }
            for &k in f.loads_at(n) {
                bp -= s.load_p[k][p];
                bq -= s.load_q[k][p];
            }
            for &d in f.ders_at(n) {
                bp += s.der_p[d][p];
                bq += s.der_q[d][p];
            }
            for &c in f.caps_at(n) {
                bq += s.cap_q[c][p];
            }
            if n == sub {
                continue;
            }
            sink.range(ViolationKind::Balance, || format!("node {} phase {p} p", nid(n)), bp, 0.0, 0.0);
            sink.range(ViolationKind::Balance, || format!("node {} phase {p} q", nid(n)), bq, 0.0, 0.0);
        }
    }

    // The substation supplies whatever leaves it, within the step's capability.
    let mut sp = 0.0;
    let mut sq = 0.0;
    for p in 0..ph {
        for &li in f.incident(sub) {
            let sign = if f.ends(li).0 == sub { 1.0 } else { -1.0 };
            sp += sign * s.flow_p[li][p];
            sq += sign * s.flow_q[li][p];
        }
        for &k in f.loads_at(sub) {
            sp += s.load_p[k][p];
            sq += s.load_q[k][p];
        }
        for &d in f.ders_at(sub) {
            sp -= s.der_p[d][p];
            sq -= s.der_q[d][p];
        }
        for &c in f.caps_at(sub) {
            sq -= s.cap_q[c][p];
        }
    }
    let cap = sc.substation_profile[t];
    sink.range(ViolationKind::Capacity, || String::from("substation p"), sp, 0.0, cap.p);
    sink.range(ViolationKind::Capacity, || String::from("substation q"), sq, 0.0, cap.q);
}

fn check_sequencing(s: &StepPlan, prev: Option<&StepPlan>, f: &Feeder, sc: &Scenario, sink: &mut Sink<'_>) {
    for k in 0..f.loads().len() {
        for p in 0..f.phase_count() {
            let before = match prev {
                Some(q) => q.load_p[k][p],
                None => sc.initial_pickup[k][p],
            };
            sink.range(ViolationKind::Sequencing, || format!("load #{k} phase {p}"), s.load_p[k][p], before, f64::INFINITY);
        }
    }
}
