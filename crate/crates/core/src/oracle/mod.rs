//! Exhaustive reference solver for small feeders.
//!
//! Boolean decisions are enumerated per step (switch status, substation
//! energization, pickup of non-dispatchable loads); node energization and line
//! orientation are derived from them. Steps are combined into monotone
//! sequences, screened with cheap necessary conditions, ordered by an upper
//! bound and solved exactly with the binaries fixed until the bound drops
//! below the incumbent.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::clustering::{ClusterId, Clustering};
use crate::feeder::{ConfigError, Feeder, ScenarioError, Scenario, SolverConfig};
use crate::ncadmm::{assemble, check_steps, plan_objective, restored_energy, PlanStatus, RestorationPlan};
use crate::qp::{polygonize_program, solve, QpSettings, SolveStatus};
use crate::subproblem::{build_local_program, classify_variables, fix_binaries, Dir, Quantity, VarIndex, VarKey};

/// Most free binaries the oracle accepts over the whole horizon.
pub const MAX_FREE_BINARIES: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    TooManyBinaries { count: usize, cap: usize },
    Config(ConfigError),
    Scenario(ScenarioError),
    Solver(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooManyBinaries { count, cap } => {
                write!(f, "{count} free binaries exceed the enumeration cap of {cap}")
            }
            OracleError::Config(e) => write!(f, "{e}"),
            OracleError::Scenario(e) => write!(f, "{e}"),
            OracleError::Solver(e) => write!(f, "solver: {e}"),
        }
    }
}

impl core::error::Error for OracleError {}

/// Boolean decisions of one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepAssignment {
    /// Every line; plain lines are closed unless faulted.
    pub line_closed: Vec<bool>,
    pub node_on: Vec<bool>,
    /// Every load; dispatchable entries follow their node.
    pub load_on: Vec<bool>,
    /// Parent side of each non-faulted line that carries an orientation.
    pub parent: Vec<Option<Dir>>,
}

impl StepAssignment {
    /// Values for every binary of `idx` at `step`.
    pub fn values(&self, step: usize, idx: &VarIndex) -> BTreeMap<VarKey, f64> {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        let mut out = BTreeMap::new();
        for key in idx.keys.iter().filter(|k| k.step == step && k.qty.is_binary()) {
            let v = match key.qty {
                Quantity::LoadOn { load } => b(self.load_on[load]),
                Quantity::NodeOn { node } => b(self.node_on[node]),
                Quantity::LineOn { line } => b(self.line_closed[line]),
                Quantity::Parent { line, dir } => b(self.parent[line] == Some(dir)),
                _ => continue,
            };
            out.insert(*key, v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub plan: RestorationPlan,
    /// Joint assignments that survived topology pruning.
    pub enumerated: usize,
    /// Assignments whose continuous program was solved.
    pub evaluated: usize,
    /// Solved assignments with a feasible continuous program.
    pub feasible: usize,
}

fn free_switches(f: &Feeder, sc: &Scenario) -> Vec<usize> {
    (0..f.lines().len()).filter(|&l| f.lines()[l].is_switchable() && !sc.is_faulted(l)).collect()
}

fn free_loads(f: &Feeder, sc: &Scenario) -> Vec<usize> {
    let isolated = sc.isolated_nodes(f);
    (0..f.loads().len())
        .filter(|&k| !f.loads()[k].dispatchable && !isolated.contains(&f.load_node(k)))
        .collect()
}

fn supplied(sc: &Scenario, step: usize) -> bool {
    sc.substation_profile[step].p > 0.0
}

/// Size of the switch-status space: two states per non-faulted switchable line.
pub fn alpha_space(f: &Feeder, sc: &Scenario) -> usize {
    1usize << free_switches(f, sc).len()
}

/// Free binaries over the horizon: switch status, substation energization
/// and non-dispatchable pickup.
pub fn free_binary_count(f: &Feeder, sc: &Scenario) -> usize {
    let per_step = free_switches(f, sc).len() + free_loads(f, sc).len();
    (0..sc.horizon).map(|t| per_step + usize::from(supplied(sc, t))).sum()
}

/// Radiality and isolation test on one step's switch and energization
/// status: faulted lines open with dead ends, plain lines closed, every
/// closed line joining nodes of equal status, closed switches live, and the
/// live lines forming a single tree rooted at a supplied substation.
pub fn topology_admissible(f: &Feeder, sc: &Scenario, step: usize, line_closed: &[bool], node_on: &[bool]) -> bool {
    let sub = f.substation_index();
    if node_on[sub] && !supplied(sc, step) {
        return false;
    }
    let mut live_lines = 0usize;
    for (li, l) in f.lines().iter().enumerate() {
        let (a, b) = f.ends(li);
        if sc.is_faulted(li) {
            if line_closed[li] || node_on[a] || node_on[b] {
                return false;
            }
            continue;
        }
        if !line_closed[li] {
            if !l.is_switchable() {
                return false;
            }
            continue;
        }
        match (node_on[a], node_on[b]) {
            (true, true) => live_lines += 1,
            (false, false) if !l.is_switchable() => {}
            _ => return false,
        }
    }
    let live = node_on.iter().filter(|&&v| v).count();
    if live == 0 {
        return true;
    }
    if !node_on[sub] || live_lines != live - 1 {
        return false;
    }
    // A connected graph on `live` nodes with `live - 1` edges is a tree.
    let reached = live_tree(f, sc, line_closed, node_on).iter().filter(|p| p.is_some()).count();
    reached == live
}

/// Breadth-first parents over closed live lines from the substation:
/// `Some(None)` for the substation, `Some(Some(line))` for reached nodes.
fn live_tree(f: &Feeder, sc: &Scenario, line_closed: &[bool], node_on: &[bool]) -> Vec<Option<Option<usize>>> {
    let sub = f.substation_index();
    let mut via = vec![None; f.nodes().len()];
    if !node_on[sub] {
        return via;
    }
    via[sub] = Some(None);
    let mut queue = VecDeque::from([sub]);
    while let Some(n) = queue.pop_front() {
        for &li in f.incident(n) {
            if sc.is_faulted(li) || !line_closed[li] {
                continue;
            }
            let (a, b) = f.ends(li);
            let m = if a == n { b } else { a };
            if node_on[m] && via[m].is_none() {
                via[m] = Some(Some(li));
                queue.push_back(m);
            }
        }
    }
    via
}

/// Orientation of every non-faulted closed line: the live tree hangs from the
/// substation, dead plain-line components hang from the substation when it is
/// dead, else from their lowest-index node.
pub fn orient(f: &Feeder, sc: &Scenario, line_closed: &[bool], node_on: &[bool]) -> Vec<Option<Dir>> {
    let mut parent = vec![None; f.lines().len()];
    let set = |parent: &mut Vec<Option<Dir>>, li: usize, from_node: usize| {
        let (a, _) = f.ends(li);
        parent[li] = Some(if a == from_node { Dir::Forward } else { Dir::Reverse });
    };
    let via = live_tree(f, sc, line_closed, node_on);
    for n in 0..f.nodes().len() {
        if let Some(Some(li)) = via[n] {
            let (a, b) = f.ends(li);
            set(&mut parent, li, if b == n { a } else { b });
        }
    }
    let sub = f.substation_index();
    let mut seen: Vec<bool> = node_on.to_vec();
    let roots = core::iter::once(sub).chain(0..f.nodes().len());
    for root in roots {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(n) = queue.pop_front() {
            for &li in f.incident(n) {
                if sc.is_faulted(li) || f.lines()[li].is_switchable() || parent[li].is_some() {
                    continue;
                }
                let (a, b) = f.ends(li);
                let m = if a == n { b } else { a };
                if !seen[m] {
                    seen[m] = true;
                    set(&mut parent, li, n);
                    queue.push_back(m);
                }
            }
        }
    }
    parent
}

/// Switch and energization pattern of one step with its free bits.
#[derive(Debug, Clone)]
struct Topology {
    line_closed: Vec<bool>,
    node_on: Vec<bool>,
    parent: Vec<Option<Dir>>,
    bits: Vec<bool>,
}

fn topologies(f: &Feeder, sc: &Scenario, step: usize) -> Vec<Topology> {
    let switches = free_switches(f, sc);
    let isolated = sc.isolated_nodes(f);
    let sub = f.substation_index();
    let mut out = Vec::new();
    for sub_on in [false, true] {
        if sub_on && !supplied(sc, step) {
            continue;
        }
        for mask in 0..(1usize << switches.len()) {
            // Most significant bit is the first switch, so masks count in lexicographic order.
            let mut bits: Vec<bool> =
                (0..switches.len()).map(|i| mask >> (switches.len() - 1 - i) & 1 == 1).collect();
            let line_closed: Vec<bool> = (0..f.lines().len())
                .map(|l| {
                    if sc.is_faulted(l) {
                        false
                    } else if let Some(i) = switches.iter().position(|&s| s == l) {
                        bits[i]
                    } else {
                        true
                    }
                })
                .collect();
            let mut node_on = vec![false; f.nodes().len()];
            if sub_on {
                let all = vec![true; f.nodes().len()];
                for (n, v) in live_tree(f, sc, &line_closed, &all).iter().enumerate() {
                    node_on[n] = v.is_some();
                }
            }
            if node_on.iter().enumerate().any(|(n, &on)| on && isolated.contains(&n)) {
                continue;
            }
            if !topology_admissible(f, sc, step, &line_closed, &node_on) {
                continue;
            }
            debug_assert_eq!(node_on[sub], sub_on);
            let parent = orient(f, sc, &line_closed, &node_on);
            bits.push(sub_on);
            out.push(Topology { line_closed, node_on, parent, bits });
        }
    }
    out
}

/// Every admissible Boolean assignment of one step, in lexicographic order of
/// (switch status, substation on, non-dispatchable pickup).
pub fn enumerate_assignments(f: &Feeder, sc: &Scenario, step: usize) -> Result<Vec<StepAssignment>, OracleError> {
    sc.validate(f).map_err(OracleError::Scenario)?;
    let count = free_binary_count(f, sc);
    if count > MAX_FREE_BINARIES {
        return Err(OracleError::TooManyBinaries { count, cap: MAX_FREE_BINARIES });
    }
    let loads = free_loads(f, sc);
    let mut out = Vec::new();
    for topo in topologies(f, sc, step) {
        let live: Vec<usize> = loads.iter().copied().filter(|&k| topo.node_on[f.load_node(k)]).collect();
        for mask in 0..(1usize << live.len()) {
            let mut load_on: Vec<bool> = (0..f.loads().len())
                .map(|k| f.loads()[k].dispatchable && topo.node_on[f.load_node(k)])
                .collect();
            for (i, &k) in live.iter().enumerate() {
                load_on[k] = mask >> (live.len() - 1 - i) & 1 == 1;
            }
            out.push(StepAssignment {
                line_closed: topo.line_closed.clone(),
                node_on: topo.node_on.clone(),
                load_on,
                parent: topo.parent.clone(),
            });
        }
    }
    Ok(out)
}

/// A joint assignment: one topology per step plus the first step each
/// non-dispatchable load is picked up (`horizon` for never).
#[derive(Debug, Clone)]
struct Candidate {
    topo: Vec<usize>,
    first_on: Vec<usize>,
    bound: f64,
    key: Vec<bool>,
}

fn step_assignment(f: &Feeder, topo: &Topology, loads: &[usize], first_on: &[usize], step: usize) -> StepAssignment {
    let mut load_on: Vec<bool> =
        (0..f.loads().len()).map(|k| f.loads()[k].dispatchable && topo.node_on[f.load_node(k)]).collect();
    for (i, &k) in loads.iter().enumerate() {
        load_on[k] = first_on[i] <= step;
    }
    StepAssignment {
        line_closed: topo.line_closed.clone(),
        node_on: topo.node_on.clone(),
        load_on,
        parent: topo.parent.clone(),
    }
}

/// Necessary capacity conditions on one step and an upper bound on its
/// objective; `None` when the step cannot be served.
fn screen_step(f: &Feeder, sc: &Scenario, cfg: &SolverConfig, step: usize, a: &StepAssignment) -> Option<f64> {
    let ph = f.phase_count();
    let n = f.nodes().len();
    // Net firm demand and local supply hanging below each node.
    let mut firm_p = vec![0.0; n];
    let mut firm_q = vec![0.0; n];
    let mut supply = vec![0.0; n];
    let mut q_support = vec![0.0; n];
    for (k, load) in f.loads().iter().enumerate() {
        if !load.dispatchable && a.load_on[k] {
            let node = f.load_node(k);
            firm_p[node] += load.p_max.iter().sum::<f64>();
            firm_q[node] += load.q_max.iter().sum::<f64>();
        }
    }
    for d in f.ders() {
        let node = f.node_index(d.node).expect("validated feeder");
        if a.node_on[node] {
            supply[node] += d.s_inv_max.iter().sum::<f64>();
            q_support[node] += d.s_inv_max.iter().sum::<f64>();
        }
    }
    for c in f.caps() {
        let node = f.node_index(c.node).expect("validated feeder");
        if a.node_on[node] {
            q_support[node] += c.q_cap_max.iter().sum::<f64>();
        }
    }
    let sub = f.substation_index();
    if !a.node_on[sub] {
        return if firm_p.iter().any(|&p| p > 0.0) { None } else { Some(0.0) };
    }
    // Children before parents: reverse breadth-first order of the live tree.
    let via = live_tree(f, sc, &a.line_closed, &a.node_on);
    let mut order = vec![sub];
    let mut i = 0;
    while i < order.len() {
        let v = order[i];
        for m in 0..n {
            if let Some(Some(li)) = via[m] {
                let (x, y) = f.ends(li);
                if (x == v || y == v) && m != v {
                    order.push(m);
                }
            }
        }
        i += 1;
    }
    for &m in order.iter().rev() {
        let Some(Some(li)) = via[m] else { continue };
        let (x, y) = f.ends(li);
        let up = if x == m { y } else { x };
        let s_total: f64 = f.lines()[li].s_max.iter().sum();
        if firm_p[m] - supply[m] > s_total + 1e-9 {
            return None;
        }
        firm_p[up] += firm_p[m];
        firm_q[up] += firm_q[m];
        supply[up] += supply[m];
        q_support[up] += q_support[m];
    }
    let cap = sc.substation_profile[step];
    let headroom = cap.p + supply[sub] - firm_p[sub];
    if headroom < -1e-9 || firm_q[sub] - q_support[sub] > cap.q + 1e-9 {
        return None;
    }

    let mut bound = 0.0;
    let mut flexible = Vec::new();
    for (k, load) in f.loads().iter().enumerate() {
        let node = f.load_node(k);
        for p in 0..ph {
            if !load.dispatchable && a.load_on[k] {
                bound += cfg.c1 * load.priority[p] * load.p_max[p];
            } else if load.dispatchable && a.node_on[node] {
                flexible.push((cfg.c1 * load.priority[p], load.p_max[p]));
            }
        }
    }
    flexible.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal));
    let mut room = headroom.max(0.0);
    for (w, p) in flexible {
        let take = p.min(room);
        bound += w * take;
        room -= take;
    }
    let c2 = cfg.resolved_c2(f);
    for (li, l) in f.lines().iter().enumerate() {
        if l.is_switchable() && !sc.is_faulted(li) && a.line_closed[li] {
            bound += c2 * l.switch_priority;
        }
    }
    Some(bound)
}

/// Monotone topology sequences: the live set never shrinks.
fn topology_sequences(per_step: &[Vec<Topology>]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(per_step: &[Vec<Topology>], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let t = cur.len();
        if t == per_step.len() {
            out.push(cur.clone());
            return;
        }
        for (i, topo) in per_step[t].iter().enumerate() {
            if let Some(&prev) = cur.last() {
                let before = &per_step[t - 1][prev].node_on;
                if before.iter().zip(&topo.node_on).any(|(&b, &a)| b && !a) {
                    continue;
                }
            }
            cur.push(i);
            rec(per_step, cur, out);
            cur.pop();
        }
    }
    rec(per_step, &mut cur, &mut out);
    out
}

fn single_index(f: &Feeder, sc: &Scenario) -> Result<VarIndex, OracleError> {
    classify_variables(f, sc, &Clustering::single(f), ClusterId(0)).map_err(|e| OracleError::Solver(format!("{e}")))
}

/// Objective of the single-cluster program with every binary relaxed to [0, 1].
pub fn lp_relaxation(f: &Feeder, sc: &Scenario, cfg: &SolverConfig) -> Result<f64, OracleError> {
    cfg.validate().map_err(OracleError::Config)?;
    sc.validate(f).map_err(OracleError::Scenario)?;
    let idx = single_index(f, sc)?;
    let prog = build_local_program(&idx, f, sc, cfg);
    let poly = polygonize_program(&prog, cfg.polygon_sides).map_err(|e| OracleError::Solver(format!("{e}")))?;
    let settings = QpSettings { max_iter: 200_000, ..QpSettings::with_tol(cfg.qp_tol) };
    let sol = solve(&poly, &settings).map_err(|e| OracleError::Solver(format!("{e}")))?;
    if sol.status != SolveStatus::Optimal {
        return Err(OracleError::Solver(format!("relaxation ended {}", sol.status.as_str())));
    }
    Ok(-poly.cost.iter().zip(&sol.x).map(|(c, x)| c * x).sum::<f64>())
}

/// Best plan over all admissible Boolean assignments. Ties within a relative
/// 1e-7 go to the lexicographically smallest assignment.
pub fn oracle_solve(f: &Feeder, sc: &Scenario, cfg: &SolverConfig) -> Result<OracleResult, OracleError> {
    cfg.validate().map_err(OracleError::Config)?;
    sc.validate(f).map_err(OracleError::Scenario)?;
    let count = free_binary_count(f, sc);
    if count > MAX_FREE_BINARIES {
        return Err(OracleError::TooManyBinaries { count, cap: MAX_FREE_BINARIES });
    }
    let horizon = sc.horizon;
    let loads = free_loads(f, sc);
    let per_step: Vec<Vec<Topology>> = (0..horizon).map(|t| topologies(f, sc, t)).collect();

    let mut candidates = Vec::new();
    for seq in topology_sequences(&per_step) {
        // Earliest step each free load's node is live; live sets only grow.
        let earliest: Vec<usize> = loads
            .iter()
            .map(|&k| {
                let node = f.load_node(k);
                (0..horizon).find(|&t| per_step[t][seq[t]].node_on[node]).unwrap_or(horizon)
            })
            .collect();
        let mut first_on: Vec<usize> = earliest.clone();
        loop {
            let forced = loads.iter().enumerate().all(|(i, &k)| {
                sc.initial_pickup[k].iter().all(|&v| v <= 0.0) || first_on[i] == 0
            });
            if forced {
                let mut bound = 0.0;
                let mut ok = true;
                for t in 0..horizon {
                    let a = step_assignment(f, &per_step[t][seq[t]], &loads, &first_on, t);
                    match screen_step(f, sc, cfg, t, &a) {
                        Some(b) => bound += b,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    let mut key = Vec::new();
                    for t in 0..horizon {
                        key.extend(&per_step[t][seq[t]].bits);
                        key.extend(first_on.iter().map(|&s| s <= t));
                    }
                    candidates.push(Candidate { topo: seq.clone(), first_on: first_on.clone(), bound, key });
                }
            }
            // Next schedule: each load walks from its earliest live step up to "never".
            let mut i = 0;
            loop {
                if i == loads.len() {
                    break;
                }
                if first_on[i] < horizon {
                    first_on[i] += 1;
                    break;
                }
                first_on[i] = earliest[i];
                i += 1;
            }
            if i == loads.len() {
                break;
            }
        }
    }
    let enumerated = candidates.len();
    candidates.sort_by(|a, b| b.bound.partial_cmp(&a.bound).unwrap_or(Ordering::Equal).then_with(|| a.key.cmp(&b.key)));

    let idx = single_index(f, sc)?;
    let base = build_local_program(&idx, f, sc, cfg);
    let qp = QpSettings::with_tol(cfg.qp_tol);
    let mut best: Option<(f64, Vec<bool>, Vec<f64>)> = None;
    let mut evaluated = 0;
    let mut feasible = 0;
    for cand in &candidates {
        if let Some((obj, _, _)) = &best {
            if cand.bound < obj - tie_tol(*obj) {
                break;
            }
        }
        let mut fixed = BTreeMap::new();
        for t in 0..horizon {
            fixed.extend(step_assignment(f, &per_step[t][cand.topo[t]], &loads, &cand.first_on, t).values(t, &idx));
        }
        let mut prog = base.clone();
        fix_binaries(&mut prog, &idx, &fixed).map_err(|e| OracleError::Solver(format!("{e}")))?;
        let poly = polygonize_program(&prog, cfg.polygon_sides).map_err(|e| OracleError::Solver(format!("{e}")))?;
        evaluated += 1;
        let sol = match solve(&poly, &qp) {
            Ok(s) if s.status == SolveStatus::Optimal => s,
            _ => continue,
        };
        feasible += 1;
        let steps = assemble(f, sc, &[(&idx, sol.x.as_slice())], None);
        let obj = plan_objective(&steps, f, sc, cfg);
        let better = match &best {
            None => true,
            Some((b, key, _)) => obj > b + tie_tol(*b) || (obj >= b - tie_tol(*b) && cand.key < *key),
        };
        if better {
            best = Some((obj, cand.key.clone(), sol.x));
        }
    }

    let steps = match &best {
        Some((_, _, x)) => assemble(f, sc, &[(&idx, x.as_slice())], None),
        None => (0..horizon).map(|_| crate::ncadmm::StepPlan::dead(f, sc)).collect(),
    };
    let objective = plan_objective(&steps, f, sc, cfg);
    let feasibility = check_steps(&steps, f, sc);
    let mut diagnostics = Vec::new();
    if best.is_none() {
        diagnostics.push(String::from("no feasible assignment; returning the all-zero plan"));
    }
    let plan = RestorationPlan {
        mode: cfg.mode,
        objective,
        restored_energy: restored_energy(&steps, sc),
        steps,
        status: PlanStatus::Converged,
        iterations: evaluated,
        diagnostics,
        feasibility,
    };
    Ok(OracleResult { objective, plan, enumerated, evaluated, feasible })
}

fn tie_tol(obj: f64) -> f64 {
    1e-7 * obj.abs().max(1.0)
}
