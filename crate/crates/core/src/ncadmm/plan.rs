use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::check::FeasibilityReport;
use crate::feeder::{Feeder, Mode, Scenario, SolverConfig};
use crate::subproblem::{Quantity, SharedKey, SharedQty, VarIndex};

/// Decisions and operating point of one step. Vectors follow the feeder's
/// line, node, load, DER and cap-bank order; inner vectors are per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    /// Switch status for switchable lines; plain lines and regulators are
    /// closed unless faulted.
    pub line_closed: Vec<bool>,
    pub node_energized: Vec<bool>,
    /// Pickup decision; dispatchable loads follow their node.
    pub load_on: Vec<bool>,
    pub load_p: Vec<Vec<f64>>,
    pub load_q: Vec<Vec<f64>>,
    pub der_p: Vec<Vec<f64>>,
    pub der_q: Vec<Vec<f64>>,
    pub cap_q: Vec<Vec<f64>>,
    /// Squared voltage magnitude.
    pub voltage: Vec<Vec<f64>>,
    pub flow_p: Vec<Vec<f64>>,
    pub flow_q: Vec<Vec<f64>>,
}

impl StepPlan {
    /// Everything de-energized: switches open, no pickup.
    pub fn dead(f: &Feeder, sc: &Scenario) -> StepPlan {
        let ph = f.phase_count();
        let z = |n: usize| vec![vec![0.0; ph]; n];
        StepPlan {
            line_closed: (0..f.lines().len())
                .map(|l| !f.lines()[l].is_switchable() && !sc.is_faulted(l))
                .collect(),
            node_energized: vec![false; f.nodes().len()],
            load_on: vec![false; f.loads().len()],
            load_p: z(f.loads().len()),
            load_q: z(f.loads().len()),
            der_p: z(f.ders().len()),
            der_q: z(f.ders().len()),
            cap_q: z(f.caps().len()),
            voltage: z(f.nodes().len()),
            flow_p: z(f.lines().len()),
            flow_q: z(f.lines().len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    /// Residuals reached tolerance in the polish phase.
    Converged,
    /// Iteration cap reached; the plan is a best effort.
    NotConverged,
    /// A fixed Boolean assignment admitted no continuous solution.
    Infeasible,
}

impl PlanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanStatus::Converged => "converged",
            PlanStatus::NotConverged => "not_converged",
            PlanStatus::Infeasible => "infeasible",
        }
    }

    pub fn parse(s: &str) -> Option<PlanStatus> {
        [PlanStatus::Converged, PlanStatus::NotConverged, PlanStatus::Infeasible]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationPlan {
    pub mode: Mode,
    pub steps: Vec<StepPlan>,
    /// Restoration objective (larger is better).
    pub objective: f64,
    /// Restored active energy in p.u. hours.
    pub restored_energy: f64,
    pub status: PlanStatus,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
    pub feasibility: FeasibilityReport,
}

impl RestorationPlan {
    pub fn converged(&self) -> bool {
        self.status == PlanStatus::Converged
    }

    pub fn is_feasible(&self) -> bool {
        self.status != PlanStatus::Infeasible && self.feasibility.ok()
    }

    /// Restored active power per step, all loads and phases.
    pub fn restored_per_step(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.load_p.iter().flatten().sum()).collect()
    }
}

/// Priority-weighted pickup plus the switch closure reward, summed over the horizon.
pub fn plan_objective(steps: &[StepPlan], f: &Feeder, sc: &Scenario, cfg: &SolverConfig) -> f64 {
    let c2 = cfg.resolved_c2(f);
    let mut total = 0.0;
    for s in steps {
        for (k, load) in f.loads().iter().enumerate() {
            for p in 0..f.phase_count() {
                total += cfg.c1 * load.priority[p] * s.load_p[k][p];
            }
        }
        for (li, l) in f.lines().iter().enumerate() {
            if l.is_switchable() && !sc.is_faulted(li) && s.line_closed[li] {
                total += c2 * l.switch_priority;
            }
        }
    }
    total
}

pub fn restored_energy(steps: &[StepPlan], sc: &Scenario) -> f64 {
    let hours = sc.step_minutes / 60.0;
    steps.iter().map(|s| s.load_p.iter().flatten().sum::<f64>() * hours).sum()
}

/// Builds per-step plans from cluster solutions. Binaries are rounded; flows
/// on joint lines come from `shared` when given.
pub(crate) fn assemble(
    f: &Feeder,
    sc: &Scenario,
    parts: &[(&VarIndex, &[f64])],
    shared: Option<&BTreeMap<SharedKey, f64>>,
) -> Vec<StepPlan> {
    let mut steps: Vec<StepPlan> = (0..sc.horizon).map(|_| StepPlan::dead(f, sc)).collect();
    for (idx, x) in parts {
        for (j, key) in idx.keys.iter().enumerate() {
            let s = &mut steps[key.step];
            let v = x[j];
            let on = v >= 0.5;
            match key.qty {
                Quantity::LoadP { load, phase } => s.load_p[load][phase] = v,
                Quantity::LoadQ { load, phase } => s.load_q[load][phase] = v,
                Quantity::Volt { node, phase } if idx.owns(node) => s.voltage[node][phase] = v,
                Quantity::Volt { .. } => {}
                Quantity::FlowP { line, phase } | Quantity::FlowQ { line, phase } => {
                    let qty = match key.qty {
                        Quantity::FlowP { .. } => SharedQty::FlowP(phase),
                        _ => SharedQty::FlowQ(phase),
                    };
                    let sk = SharedKey { step: key.step, line, qty };
                    let value = match shared.and_then(|m| m.get(&sk)) {
                        Some(xb) => *xb,
                        None => v,
                    };
                    if matches!(qty, SharedQty::FlowP(_)) {
                        s.flow_p[line][phase] = value;
                    } else {
                        s.flow_q[line][phase] = value;
                    }
                }
                Quantity::GenP { der, phase } => s.der_p[der][phase] = v,
                Quantity::GenQ { der, phase } => s.der_q[der][phase] = v,
                Quantity::CapQ { cap, phase } => s.cap_q[cap][phase] = v,
                Quantity::LoadOn { load } => s.load_on[load] = on,
                Quantity::NodeOn { node } => s.node_energized[node] = on,
                Quantity::LineOn { line } => s.line_closed[line] = on,
                Quantity::Parent { .. } => {}
            }
        }
    }
    // Quantities gated off by the rounded binaries are exactly zero; drop solver noise.
    let zero = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = 0.0);
    for s in &mut steps {
        for (k, load) in f.loads().iter().enumerate() {
            if load.dispatchable {
                s.load_on[k] = s.node_energized[f.load_node(k)];
            }
            if !s.node_energized[f.load_node(k)] || (!load.dispatchable && !s.load_on[k]) {
                zero(&mut s.load_p[k]);
                zero(&mut s.load_q[k]);
            }
        }
        for (d, der) in f.ders().iter().enumerate() {
            if f.node_index(der.node).is_some_and(|n| !s.node_energized[n]) {
                zero(&mut s.der_p[d]);
                zero(&mut s.der_q[d]);
            }
        }
        for (c, cap) in f.caps().iter().enumerate() {
            if f.node_index(cap.node).is_some_and(|n| !s.node_energized[n]) {
                zero(&mut s.cap_q[c]);
            }
        }
        for n in 0..f.nodes().len() {
            if !s.node_energized[n] {
                zero(&mut s.voltage[n]);
            }
        }
        for l in 0..f.lines().len() {
            let (a, b) = f.ends(l);
            if !s.line_closed[l] || !s.node_energized[a] || !s.node_energized[b] {
                zero(&mut s.flow_p[l]);
                zero(&mut s.flow_q[l]);
            }
        }
    }
    steps
}
