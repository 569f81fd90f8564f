//! Cluster agents running non-convex consensus ADMM.
//!
//! Each cluster owns an agent with its local convex program. A run is a
//! sequence of synchronous rounds: every agent solves, the agents' boundary
//! values are averaged into consensus values, and the scaled multipliers are
//! updated. The relaxed binaries are steered to Boolean values in four phases:
//!
//! 1. relax: plain consensus on the convex relaxation;
//! 2. drive: the Boolean targets are pulled toward their rounding by a
//!    proximal factor that grows with the inverse residuals;
//! 3. project: the targets are rounded outright until they stop changing;
//! 4. polish: binaries are fixed and consensus runs on the continuous part.
//!
//! [`Mode::Projection`] rounds from the first round instead (the baseline).

mod check;
mod plan;

pub use check::{plan_feasibility_check, FeasibilityReport, PlanViolation, ViolationKind, CHECK_TOL};
pub use plan::{plan_objective, restored_energy, PlanStatus, RestorationPlan, StepPlan};

pub(crate) use check::check_steps;
#[cfg(test)]
pub(crate) use check::topology_violations;
pub(crate) use plan::assemble;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::clustering::{ClusterId, Clustering};
use crate::feeder::{ConfigError, Feeder, Mode, Scenario, ScenarioError, SolverConfig};
use crate::math;
use crate::qp::{polygonize_program, solve, QpSettings, QpWorkspace, SolveError, SolveStatus};
use crate::subproblem::{
    attach_penalties, build_local_program, classify_variables, fix_binaries, penalty_slots,
    ConvexProgram, PenaltySlot, Quantity, SharedKey, SubproblemError, VarIndex, VarKey,
};

/// Smallest residual used when growing the proximal factor.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Rounds to the nearest Boolean value; ties go to 1.
pub fn project_boolean(w: f64) -> f64 {
    if w >= 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Proximal step toward the rounding of `w` with factor `t_tilde >= 0`.
pub fn prox_boolean(w: f64, t_tilde: f64) -> f64 {
    (w + t_tilde * project_boolean(w)) / (1.0 + t_tilde)
}

/// Grows the proximal factor by `c` times the inverse residuals.
pub fn update_t(t_tilde: f64, c: f64, r_p: f64, r_d: f64) -> f64 {
    t_tilde + c * (1.0 / r_p.max(RESIDUAL_FLOOR) + 1.0 / r_d.max(RESIDUAL_FLOOR))
}

/// How Boolean targets are formed from the averaged relaxed values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BooleanUpdate {
    Prox(f64),
    /// The infinite-factor limit: plain rounding.
    Snap,
}

/// Average of `value + multiplier` over the clusters holding a shared value.
pub fn consensus_continuous(copies: &[(f64, f64)]) -> f64 {
    copies.iter().map(|(x, u)| x + u).sum::<f64>() / copies.len() as f64
}

/// Boolean target from the relaxed copies. Averages are clamped to the unit
/// interval first.
pub fn consensus_binary(copies: &[(f64, f64)], update: BooleanUpdate) -> f64 {
    let w = consensus_continuous(copies).clamp(0.0, 1.0);
    match update {
        BooleanUpdate::Prox(t) => prox_boolean(w, t),
        BooleanUpdate::Snap => project_boolean(w),
    }
}

/// Scaled multiplier after one round: the old value plus the local copy's
/// distance from the consensus value.
pub fn multiplier_update(u: f64, local: f64, consensus: f64) -> f64 {
    u + local - consensus
}

/// Primal and dual residuals from the per-copy consensus gaps and the
/// per-copy change of the consensus values. Without a previous round the dual
/// residual is infinite.
pub fn residuals(
    rho: f64,
    binary_gaps: &[f64],
    continuous_gaps: &[f64],
    change: Option<(&[f64], &[f64])>,
) -> (f64, f64) {
    let norm = |v: &[f64]| math::norm2(v.iter().copied());
    let r_p = norm(binary_gaps) + norm(continuous_gaps);
    let r_d = match change {
        Some((dz, dx)) => rho * norm(dz) + rho * norm(dx),
        None => f64::INFINITY,
    };
    (r_p, r_d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Relax,
    Drive,
    Project,
    Polish,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Relax => "relax",
            Phase::Drive => "drive",
            Phase::Project => "project",
            Phase::Polish => "polish",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        [Phase::Relax, Phase::Drive, Phase::Project, Phase::Polish].into_iter().find(|p| p.as_str() == s)
    }
}

/// One global round.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub phase: Phase,
    /// Infinite while rounding outright.
    pub t_tilde: f64,
    pub r_p: f64,
    pub r_d: f64,
    /// Sum of the agents' local objectives (larger is better).
    pub objective: f64,
    /// Priority-weighted pickup over the horizon, per cluster.
    pub restored_load: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub clusters: Vec<ClusterId>,
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn iterations_in(&self, phase: Phase) -> usize {
        self.records.iter().filter(|r| r.phase == phase).count()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Values one agent contributes to a round: its copies of binding continuous
/// values and of its relaxed binaries, each with its scaled multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMessage {
    pub sender: ClusterId,
    pub iteration: usize,
    pub shared: Vec<(SharedKey, f64, f64)>,
    pub binaries: Vec<(VarKey, f64, f64)>,
}

/// Runs the agents' solves of one round. Implementations may run them in
/// parallel; results must not depend on the order.
pub trait Executor {
    fn for_each_mut<T: Send, F: Fn(&mut T) + Sync>(&self, items: &mut [T], f: F);
}

/// Solves agents one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn for_each_mut<T: Send, F: Fn(&mut T) + Sync>(&self, items: &mut [T], f: F) {
        for it in items {
            f(it);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Config(ConfigError),
    Scenario(ScenarioError),
    Subproblem(SubproblemError),
    Solver(SolveError),
    /// The clustering does not cover every node of the feeder.
    Clustering(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Scenario(e) => write!(f, "{e}"),
            RunError::Subproblem(e) => write!(f, "{e}"),
            RunError::Solver(e) => write!(f, "{e}"),
            RunError::Clustering(m) => write!(f, "clustering: {m}"),
        }
    }
}

impl core::error::Error for RunError {}

impl From<SubproblemError> for RunError {
    fn from(e: SubproblemError) -> Self {
        RunError::Subproblem(e)
    }
}

impl From<SolveError> for RunError {
    fn from(e: SolveError) -> Self {
        RunError::Solver(e)
    }
}

/// Per-cluster state: layout, program, multipliers and last local solution.
struct Agent {
    id: ClusterId,
    idx: VarIndex,
    /// Penalized program with the normalized objective.
    prog: ConvexProgram,
    /// Unpenalized program solved in the first round.
    opening: Option<ConvexProgram>,
    slots: Vec<PenaltySlot>,
    /// Scaled multipliers, one per penalty slot.
    u: Vec<f64>,
    ws: QpWorkspace,
    x: Vec<f64>,
    status: SolveStatus,
    /// `(variable, weight)` of the restored-load measure.
    pickup: Vec<(usize, f64)>,
    /// Divisor applied to the objective before adding penalties.
    scale: f64,
}

/// Consensus values visible to every agent in a round.
#[derive(Debug, Clone, Default)]
struct Consensus {
    xbar: BTreeMap<SharedKey, f64>,
    z: BTreeMap<VarKey, f64>,
}

impl Agent {
    fn new(
        f: &Feeder,
        sc: &Scenario,
        cl: &Clustering,
        id: ClusterId,
        cfg: &SolverConfig,
        qp: &QpSettings,
    ) -> Result<Agent, RunError> {
        let idx = classify_variables(f, sc, cl, id)?;
        let scale = objective_scale(f, cfg);
        let mut local = build_local_program(&idx, f, sc, cfg);
        let opening = polygonize_program(&local, cfg.polygon_sides)?;
        for c in &mut local.cost {
            *c /= scale;
        }
        let slots = penalty_slots(&idx);
        attach_penalties(&mut local, &slots, &vec![0.0; slots.len()], cfg.rho);
        let prog = polygonize_program(&local, cfg.polygon_sides)?;
        let ws = QpWorkspace::new(&prog, qp)?;
        let mut pickup = Vec::new();
        for (j, key) in idx.keys.iter().enumerate() {
            if let Quantity::LoadP { load, phase } = key.qty {
                pickup.push((j, f.loads()[load].priority[phase]));
            }
        }
        let x = vec![0.0; idx.len()];
        let u = vec![0.0; slots.len()];
        Ok(Agent { id, idx, prog, opening: Some(opening), slots, u, ws, x, status: SolveStatus::Optimal, pickup, scale })
    }

    fn center(&self, i: usize, c: &Consensus) -> f64 {
        let target = match self.slots[i] {
            PenaltySlot::Shared { key, .. } => c.xbar.get(&key).copied().unwrap_or(0.0),
            PenaltySlot::Boolean { var } => c.z.get(&self.idx.keys[var]).copied().unwrap_or(0.0),
        };
        target - self.u[i]
    }

    fn solve(&mut self, c: &Consensus, qp: &QpSettings) {
        if let Some(open) = self.opening.take() {
            match solve(&open, qp) {
                Ok(sol) => {
                    self.status = sol.status;
                    self.x = sol.x;
                }
                Err(_) => self.status = SolveStatus::Infeasible,
            }
            return;
        }
        for i in 0..self.slots.len() {
            self.prog.penalties[i].center = self.center(i, c);
        }
        if self.ws.update_objective(&self.prog).is_err() {
            self.status = SolveStatus::Infeasible;
            return;
        }
        self.ws.warm_start(&self.x);
        let sol = self.ws.solve(&self.prog);
        self.status = sol.status;
        if sol.x.iter().all(|v| v.is_finite()) {
            self.x = sol.x;
        }
    }

    fn message(&self, iteration: usize) -> BoundaryMessage {
        let mut shared = Vec::new();
        let mut binaries = Vec::new();
        for (i, s) in self.slots.iter().enumerate() {
            match *s {
                PenaltySlot::Shared { var, key } => shared.push((key, self.x[var], self.u[i])),
                PenaltySlot::Boolean { var } => binaries.push((self.idx.keys[var], self.x[var], self.u[i])),
            }
        }
        BoundaryMessage { sender: self.id, iteration, shared, binaries }
    }

    fn local_objective(&self) -> f64 {
        -self.scale * self.prog.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum::<f64>()
    }

    fn restored_load(&self) -> f64 {
        self.pickup.iter().map(|(j, w)| w * self.x[*j]).sum()
    }

    /// Switches to the polish program: binaries fixed to `z`, continuous
    /// penalties only, multipliers carried over.
    fn enter_polish(
        &mut self,
        f: &Feeder,
        sc: &Scenario,
        cfg: &SolverConfig,
        qp: &QpSettings,
        z: &BTreeMap<VarKey, f64>,
    ) -> Result<(), String> {
        let mut local = build_local_program(&self.idx, f, sc, cfg);
        for c in &mut local.cost {
            *c /= self.scale;
        }
        let mut slots = Vec::new();
        let mut u = Vec::new();
        for (i, s) in self.slots.iter().enumerate() {
            if let PenaltySlot::Shared { .. } = s {
                slots.push(*s);
                u.push(self.u[i]);
            }
        }
        attach_penalties(&mut local, &slots, &vec![0.0; slots.len()], cfg.rho);
        let mut fixed = BTreeMap::new();
        for j in self.idx.binaries() {
            let key = self.idx.keys[j];
            let v = z.get(&key).copied().map(project_boolean).unwrap_or(0.0);
            fixed.insert(key, v);
            self.x[j] = v;
        }
        fix_binaries(&mut local, &self.idx, &fixed).map_err(|e| format!("cluster {}: {e}", self.id))?;
        let prog = polygonize_program(&local, cfg.polygon_sides).map_err(|e| format!("{e}"))?;
        self.ws = QpWorkspace::new(&prog, qp).map_err(|e| format!("{e}"))?;
        self.prog = prog;
        self.slots = slots;
        self.u = u;
        Ok(())
    }
}

/// Outcome of the consensus and multiplier updates of one round.
struct RoundUpdate {
    r_p: f64,
    r_d: f64,
    z_changed: bool,
}

fn exchange(
    agents: &mut [Agent],
    cons: &mut Consensus,
    update: BooleanUpdate,
    rho: f64,
    iteration: usize,
    first: bool,
) -> RoundUpdate {
    let messages: Vec<BoundaryMessage> = agents.iter().map(|a| a.message(iteration)).collect();
    let mut shared: BTreeMap<SharedKey, Vec<(f64, f64)>> = BTreeMap::new();
    let mut bins: BTreeMap<VarKey, Vec<(f64, f64)>> = BTreeMap::new();
    for m in &messages {
        for (k, x, u) in &m.shared {
            shared.entry(*k).or_default().push((*x, *u));
        }
        for (k, y, u) in &m.binaries {
            bins.entry(*k).or_default().push((*y, *u));
        }
    }
    let xbar: BTreeMap<SharedKey, f64> = shared.iter().map(|(k, v)| (*k, consensus_continuous(v))).collect();
    let z: BTreeMap<VarKey, f64> = bins.iter().map(|(k, v)| (*k, consensus_binary(v, update))).collect();
    let z_changed = z.iter().any(|(k, v)| cons.z.get(k) != Some(v));

    let mut bin_gap = Vec::new();
    let mut cont_gap = Vec::new();
    let mut dz = Vec::new();
    let mut dx = Vec::new();
    for a in agents.iter_mut() {
        for i in 0..a.slots.len() {
            match a.slots[i] {
                PenaltySlot::Shared { var, key } => {
                    let gap = a.x[var] - xbar[&key];
                    a.u[i] = multiplier_update(a.u[i], a.x[var], xbar[&key]);
                    cont_gap.push(gap);
                    dx.push(xbar[&key] - cons.xbar.get(&key).copied().unwrap_or(0.0));
                }
                PenaltySlot::Boolean { var } => {
                    let key = a.idx.keys[var];
                    let gap = a.x[var] - z[&key];
                    a.u[i] = multiplier_update(a.u[i], a.x[var], z[&key]);
                    bin_gap.push(gap);
                    dz.push(z[&key] - cons.z.get(&key).copied().unwrap_or(0.0));
                }
            }
        }
    }
    let change = if first { None } else { Some((dz.as_slice(), dx.as_slice())) };
    let (r_p, r_d) = residuals(rho, &bin_gap, &cont_gap, change);
    cons.xbar = xbar;
    if !z.is_empty() {
        cons.z = z;
    }
    RoundUpdate { r_p, r_d, z_changed }
}

/// Largest weight on a unit of restored load; agents divide their objective
/// by it so consensus penalties and rewards are on the same scale.
pub fn objective_scale(f: &Feeder, cfg: &SolverConfig) -> f64 {
    let w = f.loads().iter().flat_map(|l| l.priority.iter().copied()).fold(0.0_f64, f64::max);
    let s = cfg.c1 * w;
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

fn check_clustering(f: &Feeder, cl: &Clustering) -> Result<(), RunError> {
    for n in f.nodes() {
        if !cl.assignment.contains_key(&n.id) {
            return Err(RunError::Clustering(format!("node {} has no cluster", n.id)));
        }
    }
    Ok(())
}

/// Runs the full restoration with agents solved one after another.
pub fn run_restoration(
    f: &Feeder,
    sc: &Scenario,
    cl: &Clustering,
    cfg: &SolverConfig,
) -> Result<(RestorationPlan, ConvergenceTrace), RunError> {
    run_restoration_with(f, sc, cl, cfg, &Sequential)
}

/// Runs the full restoration, dispatching agent solves through `exec`.
pub fn run_restoration_with<E: Executor>(
    f: &Feeder,
    sc: &Scenario,
    cl: &Clustering,
    cfg: &SolverConfig,
    exec: &E,
) -> Result<(RestorationPlan, ConvergenceTrace), RunError> {
    cfg.validate().map_err(RunError::Config)?;
    sc.validate(f).map_err(RunError::Scenario)?;
    check_clustering(f, cl)?;
    let qp = QpSettings::with_tol(cfg.qp_tol);

    let mut agents = Vec::new();
    for id in cl.ids() {
        agents.push(Agent::new(f, sc, cl, id, cfg, &qp)?);
    }
    let scale = math::sqrt(agents.len() as f64);
    let tol = cfg.eps * scale;
    let relax_tol = cfg.relax_tol_factor * tol;

    let mut cons = Consensus::default();
    let mut trace = ConvergenceTrace { clusters: agents.iter().map(|a| a.id).collect(), records: Vec::new() };
    let mut phase = match cfg.mode {
        Mode::NcAdmm => Phase::Relax,
        Mode::Projection => Phase::Project,
    };
    let mut t_tilde = 0.0;
    let mut drive_rounds = 0;
    let mut stable = 0;
    let mut polish_first = true;
    let mut converged = false;
    let mut diagnostics = Vec::new();
    let mut infeasible = false;
    let mut iterations = 0;

    for k in 0..cfg.max_iters {
        iterations = k + 1;
        exec.for_each_mut(&mut agents, |a| a.solve(&cons, &qp));

        let failed: Vec<ClusterId> =
            agents.iter().filter(|a| a.status == SolveStatus::Infeasible).map(|a| a.id).collect();
        if !failed.is_empty() {
            infeasible = true;
            for c in failed {
                diagnostics.push(if phase == Phase::Polish {
                    format!("cluster {c}: no continuous solution for the fixed Boolean decisions")
                } else {
                    format!("cluster {c}: local program infeasible in {} phase", phase.as_str())
                });
            }
            break;
        }

        let update = match phase {
            Phase::Relax => BooleanUpdate::Prox(0.0),
            Phase::Drive => BooleanUpdate::Prox(t_tilde),
            Phase::Project | Phase::Polish => BooleanUpdate::Snap,
        };
        let first = k == 0 || (phase == Phase::Polish && polish_first);
        let r = exchange(&mut agents, &mut cons, update, cfg.rho, iterations, first);
        trace.push(TraceRecord {
            iter: iterations,
            phase,
            t_tilde: match phase {
                Phase::Relax => 0.0,
                Phase::Drive => t_tilde,
                _ => f64::INFINITY,
            },
            r_p: r.r_p,
            r_d: r.r_d,
            objective: agents.iter().map(Agent::local_objective).sum(),
            restored_load: agents.iter().map(Agent::restored_load).collect(),
        });
        log::debug!(
            "iter {iterations} {} r_p={:.3e} r_d={:.3e} t={:.3e}",
            phase.as_str(),
            r.r_p,
            r.r_d,
            t_tilde
        );

        let within = |tol: f64| r.r_p <= tol && r.r_d <= tol;
        match phase {
            Phase::Relax => {
                if within(relax_tol) {
                    t_tilde = update_t(0.0, cfg.c, r.r_p, r.r_d);
                    phase = Phase::Drive;
                }
            }
            Phase::Drive => {
                drive_rounds += 1;
                t_tilde = update_t(t_tilde, cfg.c, r.r_p, r.r_d);
                if within(tol) || drive_rounds >= cfg.max_prox_iters {
                    phase = Phase::Project;
                    stable = 0;
                }
            }
            Phase::Project => {
                let leave = match cfg.mode {
                    Mode::NcAdmm => {
                        stable = if r.z_changed { 0 } else { stable + 1 };
                        stable >= cfg.project_stable_iters
                    }
                    Mode::Projection => within(tol),
                };
                if leave {
                    phase = Phase::Polish;
                    for a in agents.iter_mut() {
                        if let Err(d) = a.enter_polish(f, sc, cfg, &qp, &cons.z) {
                            diagnostics.push(d);
                            infeasible = true;
                        }
                    }
                    if infeasible {
                        break;
                    }
                }
            }
            Phase::Polish => {
                if !polish_first && within(tol) {
                    converged = true;
                }
                polish_first = false;
                if converged && within(cfg.plan_tol) {
                    break;
                }
            }
        }
    }

    let parts: Vec<(&VarIndex, &[f64])> = agents.iter().map(|a| (&a.idx, a.x.as_slice())).collect();
    let steps = assemble(f, sc, &parts, (phase == Phase::Polish).then_some(&cons.xbar));
    if !converged && !infeasible {
        diagnostics.push(format!(
            "iteration cap {} reached in {} phase",
            cfg.max_iters,
            phase.as_str()
        ));
    }
    let status = if infeasible {
        PlanStatus::Infeasible
    } else if converged {
        PlanStatus::Converged
    } else {
        PlanStatus::NotConverged
    };
    let feasibility = check_steps(&steps, f, sc);
    for v in feasibility.violations.iter().take(20) {
        log::info!("plan check: {v}");
    }
    let plan = RestorationPlan {
        mode: cfg.mode,
        objective: plan_objective(&steps, f, sc, cfg),
        restored_energy: restored_energy(&steps, sc),
        steps,
        status,
        iterations,
        diagnostics,
        feasibility,
    };
    Ok((plan, trace))
}

#[cfg(test)]
mod tests;
