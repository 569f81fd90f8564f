//! Restoration plans as JSON. Values stay in per unit; vectors follow the
//! element order listed in `context`.

use std::path::Path;

use restora_core::ncadmm::{PlanStatus, PlanViolation, StepPlan, ViolationKind};
use restora_core::{FeasibilityReport, Feeder, Mode, RestorationPlan, Scenario};
use serde::{Deserialize, Serialize};

use crate::error::{from_json, read_text, InputError};
use crate::num::{unwrap, unwrap2, wrap2, Num};

/// The feeder and scenario a plan was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanContext {
    pub s_mva: f64,
    pub v_kv: f64,
    pub line_ids: Vec<String>,
    pub node_ids: Vec<u32>,
    /// Node of each load, in load order.
    pub load_nodes: Vec<u32>,
    pub faults: Vec<String>,
    pub horizon: usize,
    /// Substation `[p, q]` per step.
    pub profile: Vec<[Num; 2]>,
    pub v_min: f64,
    pub v_max: f64,
    pub step_minutes: f64,
}

impl PlanContext {
    pub fn new(f: &Feeder, sc: &Scenario) -> PlanContext {
        PlanContext {
            s_mva: f.base().s_mva,
            v_kv: f.base().v_kv,
            line_ids: f.lines().iter().map(|l| l.id.clone()).collect(),
            node_ids: f.nodes().iter().map(|n| n.id.0).collect(),
            load_nodes: f.loads().iter().map(|l| l.node.0).collect(),
            faults: sc.faulted_ids(f),
            horizon: sc.horizon,
            profile: sc.substation_profile.iter().map(|c| [Num(c.p), Num(c.q)]).collect(),
            v_min: sc.v_min,
            v_max: sc.v_max,
            step_minutes: sc.step_minutes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViolationDoc {
    /// One-based.
    pub step: usize,
    pub kind: String,
    pub element: String,
    pub amount: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDoc {
    /// One-based.
    pub step: usize,
    /// Total active pickup.
    pub restored_load: Num,
    pub line_closed: Vec<bool>,
    pub node_energized: Vec<bool>,
    pub load_on: Vec<bool>,
    pub load_p: Vec<Vec<Num>>,
    pub load_q: Vec<Vec<Num>>,
    pub der_p: Vec<Vec<Num>>,
    pub der_q: Vec<Vec<Num>>,
    pub cap_q: Vec<Vec<Num>>,
    /// Squared voltage magnitude.
    pub voltage: Vec<Vec<Num>>,
    pub flow_p: Vec<Vec<Num>>,
    pub flow_q: Vec<Vec<Num>>,
}

/// `mode` value of plans written by the `oracle` command.
pub const ORACLE_MODE: &str = "oracle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub mode: String,
    pub status: String,
    pub converged: bool,
    pub feasible: bool,
    pub objective: Num,
    /// Restored active energy, p.u. hours.
    pub restored_energy: Num,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
    pub violations: Vec<ViolationDoc>,
    pub context: PlanContext,
    pub steps: Vec<StepDoc>,
}

impl PlanFile {
    pub fn new(plan: &RestorationPlan, f: &Feeder, sc: &Scenario) -> PlanFile {
        let restored = plan.restored_per_step();
        PlanFile {
            mode: plan.mode.as_str().into(),
            status: plan.status.as_str().into(),
            converged: plan.converged(),
            feasible: plan.is_feasible(),
            objective: Num(plan.objective),
            restored_energy: Num(plan.restored_energy),
            iterations: plan.iterations,
            diagnostics: plan.diagnostics.clone(),
            violations: plan
                .feasibility
                .violations
                .iter()
                .map(|v| ViolationDoc {
                    step: v.step + 1,
                    kind: v.kind.as_str().into(),
                    element: v.element.clone(),
                    amount: Num(v.amount),
                })
                .collect(),
            context: PlanContext::new(f, sc),
            steps: plan
                .steps
                .iter()
                .enumerate()
                .map(|(t, s)| StepDoc {
                    step: t + 1,
                    restored_load: Num(restored[t]),
                    line_closed: s.line_closed.clone(),
                    node_energized: s.node_energized.clone(),
                    load_on: s.load_on.clone(),
                    load_p: wrap2(&s.load_p),
                    load_q: wrap2(&s.load_q),
                    der_p: wrap2(&s.der_p),
                    der_q: wrap2(&s.der_q),
                    cap_q: wrap2(&s.cap_q),
                    voltage: wrap2(&s.voltage),
                    flow_p: wrap2(&s.flow_p),
                    flow_q: wrap2(&s.flow_q),
                })
                .collect(),
        }
    }

    /// Rebuilds the in-memory plan.
    pub fn to_plan(&self) -> Result<RestorationPlan, InputError> {
        let bad = |what: &str, v: &str| InputError::Parse(format!("plan: unknown {what} `{v}`"));
        // Oracle plans are labelled in the file only; the core plan keeps the default mode.
        let mode = match self.mode.as_str() {
            ORACLE_MODE => Mode::NcAdmm,
            m => Mode::parse(m).ok_or_else(|| bad("mode", m))?,
        };
        let status = PlanStatus::parse(&self.status).ok_or_else(|| bad("status", &self.status))?;
        let mut violations = Vec::new();
        for v in &self.violations {
            violations.push(PlanViolation {
                step: v.step.saturating_sub(1),
                kind: ViolationKind::parse(&v.kind).ok_or_else(|| bad("violation kind", &v.kind))?,
                element: v.element.clone(),
                amount: v.amount.0,
            });
        }
        Ok(RestorationPlan {
            mode,
            steps: self
                .steps
                .iter()
                .map(|s| StepPlan {
                    line_closed: s.line_closed.clone(),
                    node_energized: s.node_energized.clone(),
                    load_on: s.load_on.clone(),
                    load_p: unwrap2(&s.load_p),
                    load_q: unwrap2(&s.load_q),
                    der_p: unwrap2(&s.der_p),
                    der_q: unwrap2(&s.der_q),
                    cap_q: unwrap2(&s.cap_q),
                    voltage: unwrap2(&s.voltage),
                    flow_p: unwrap2(&s.flow_p),
                    flow_q: unwrap2(&s.flow_q),
                })
                .collect(),
            objective: self.objective.0,
            restored_energy: self.restored_energy.0,
            status,
            iterations: self.iterations,
            diagnostics: self.diagnostics.clone(),
            feasibility: FeasibilityReport { violations },
        })
    }

    pub fn restored_per_step(&self) -> Vec<f64> {
        unwrap(&self.steps.iter().map(|s| s.restored_load).collect::<Vec<_>>())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<PlanFile, InputError> {
        let p: PlanFile = from_json(text)?;
        p.to_plan()?;
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<PlanFile, InputError> {
        PlanFile::from_json_str(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }
}
