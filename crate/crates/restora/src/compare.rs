//! Differences between two plans for the same feeder and scenario.

use serde::{Deserialize, Serialize};

use crate::error::InputError;
use crate::num::Num;
use crate::plan_file::{PlanContext, PlanFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDelta {
    pub step: usize,
    pub restored_a: Num,
    pub restored_b: Num,
    /// `restored_b - restored_a`.
    pub delta: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchChange {
    pub step: usize,
    pub line: String,
    pub closed_a: bool,
    pub closed_b: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub mode_a: String,
    pub mode_b: String,
    pub feasible_a: bool,
    pub feasible_b: bool,
    pub objective_a: Num,
    pub objective_b: Num,
    /// Shortfall of plan B relative to plan A, percent of `|objective_a|`.
    pub objective_gap_pct: Num,
    pub steps: Vec<StepDelta>,
    pub switch_diff: Vec<SwitchChange>,
}

impl CompareReport {
    pub fn is_identical(&self) -> bool {
        self.switch_diff.is_empty() && self.steps.iter().all(|s| s.delta.0 == 0.0) && self.objective_gap_pct.0 == 0.0
    }
}

fn context_mismatch(a: &PlanContext, b: &PlanContext) -> Option<&'static str> {
    if a.line_ids != b.line_ids || a.node_ids != b.node_ids || a.load_nodes != b.load_nodes {
        Some("feeder elements")
    } else if (a.s_mva, a.v_kv) != (b.s_mva, b.v_kv) {
        Some("base")
    } else if a.faults != b.faults {
        Some("faults")
    } else if a.horizon != b.horizon || a.profile != b.profile {
        Some("substation profile")
    } else if (a.v_min, a.v_max, a.step_minutes) != (b.v_min, b.v_max, b.step_minutes) {
        Some("voltage limits or step length")
    } else {
        None
    }
}

/// Percentage by which `b` falls short of `a`.
pub fn objective_gap_pct(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a == 0.0 {
        if b > a {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (a - b) / a.abs()
    }
}

pub fn compare_plans(a: &PlanFile, b: &PlanFile) -> Result<CompareReport, InputError> {
    if let Some(what) = context_mismatch(&a.context, &b.context) {
        return Err(InputError::Invalid(format!("plans are for different scenarios: {what} differ")));
    }
    if a.steps.len() != b.steps.len() {
        return Err(InputError::Invalid("plans have different step counts".into()));
    }
    let ra = a.restored_per_step();
    let rb = b.restored_per_step();
    let steps = (0..ra.len())
        .map(|t| StepDelta { step: t + 1, restored_a: Num(ra[t]), restored_b: Num(rb[t]), delta: Num(rb[t] - ra[t]) })
        .collect();
    let mut switch_diff = Vec::new();
    for (t, (sa, sb)) in a.steps.iter().zip(&b.steps).enumerate() {
        for (l, id) in a.context.line_ids.iter().enumerate() {
            let (ca, cb) = (sa.line_closed.get(l), sb.line_closed.get(l));
            if ca != cb {
                switch_diff.push(SwitchChange {
                    step: t + 1,
                    line: id.clone(),
                    closed_a: ca.copied().unwrap_or(false),
                    closed_b: cb.copied().unwrap_or(false),
                });
            }
        }
    }
    Ok(CompareReport {
        mode_a: a.mode.clone(),
        mode_b: b.mode.clone(),
        feasible_a: a.feasible,
        feasible_b: b.feasible,
        objective_a: a.objective,
        objective_b: b.objective,
        objective_gap_pct: Num(objective_gap_pct(a.objective.0, b.objective.0)),
        steps,
        switch_diff,
    })
}
