//! Run manifests: everything needed to repeat a `solve` or `oracle` run.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use restora_core::{ConvergenceTrace, Mode, Phase, RestorationPlan, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{from_json, read_text, InputError};
use crate::num::Num;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub rho: f64,
    pub c: f64,
    pub eps: f64,
    pub relax_tol_factor: f64,
    pub max_iters: usize,
    pub max_prox_iters: usize,
    pub project_stable_iters: usize,
    pub big_m: f64,
    pub polygon_sides: usize,
    pub c1: f64,
    /// `null` means the default derived from load priorities.
    pub c2: Option<f64>,
    pub mode: String,
    pub qp_tol: f64,
    pub plan_tol: f64,
}

impl From<&SolverConfig> for ConfigDoc {
    fn from(c: &SolverConfig) -> ConfigDoc {
        ConfigDoc {
            rho: c.rho,
            c: c.c,
            eps: c.eps,
            relax_tol_factor: c.relax_tol_factor,
            max_iters: c.max_iters,
            max_prox_iters: c.max_prox_iters,
            project_stable_iters: c.project_stable_iters,
            big_m: c.big_m,
            polygon_sides: c.polygon_sides,
            c1: c.c1,
            c2: c.c2,
            mode: c.mode.as_str().into(),
            qp_tol: c.qp_tol,
            plan_tol: c.plan_tol,
        }
    }
}

impl ConfigDoc {
    pub fn to_config(&self) -> Result<SolverConfig, InputError> {
        let mode = Mode::parse(&self.mode).ok_or_else(|| InputError::Config(format!("unknown mode `{}`", self.mode)))?;
        Ok(SolverConfig {
            rho: self.rho,
            c: self.c,
            eps: self.eps,
            relax_tol_factor: self.relax_tol_factor,
            max_iters: self.max_iters,
            max_prox_iters: self.max_prox_iters,
            project_stable_iters: self.project_stable_iters,
            big_m: self.big_m,
            polygon_sides: self.polygon_sides,
            c1: self.c1,
            c2: self.c2,
            mode,
            qp_tol: self.qp_tol,
            plan_tol: self.plan_tol,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub feeder: String,
    /// Separate scenario file, when the feeder file has none.
    pub scenario: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringDoc {
    pub k: usize,
    pub r: usize,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    pub status: String,
    pub converged: bool,
    pub feasible: bool,
    pub objective: Num,
    pub iterations: usize,
    pub iterations_per_phase: BTreeMap<String, usize>,
    pub final_r_p: Option<Num>,
    pub final_r_d: Option<Num>,
    pub violations: usize,
}

impl Convergence {
    pub fn new(plan: &RestorationPlan, trace: Option<&ConvergenceTrace>) -> Convergence {
        let last = trace.and_then(|t| t.last());
        Convergence {
            status: plan.status.as_str().into(),
            converged: plan.converged(),
            feasible: plan.is_feasible(),
            objective: Num(plan.objective),
            iterations: plan.iterations,
            iterations_per_phase: trace
                .map(|t| {
                    [Phase::Relax, Phase::Drive, Phase::Project, Phase::Polish]
                        .into_iter()
                        .map(|p| (p.as_str().to_string(), t.iterations_in(p)))
                        .collect()
                })
                .unwrap_or_default(),
            final_r_p: last.map(|r| Num(r.r_p)),
            final_r_d: last.map(|r| Num(r.r_d)),
            violations: plan.feasibility.violations.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Inputs,
    pub mode: String,
    pub config: ConfigDoc,
    pub clustering: Option<ClusteringDoc>,
    pub threads: usize,
    /// Milliseconds since the Unix epoch.
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Output kind (`plan`, `trace`, `oracle`, `manifest`) to path.
    pub outputs: BTreeMap<String, String>,
    pub convergence: Convergence,
}

impl RunManifest {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<RunManifest, InputError> {
        let m: RunManifest = from_json(text)?;
        m.config.to_config()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<RunManifest, InputError> {
        RunManifest::from_json_str(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }
}

pub fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}
