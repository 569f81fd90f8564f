//! Embedded QP solver for [`ConvexProgram`]s.
//!
//! Disk constraints are first replaced by inscribed polygons
//! ([`polygonize_soc`]). Fixed variables are eliminated, variable bounds become
//! identity rows and the rest is handed to an operator-splitting solver whose
//! factorization is cached in a [`QpWorkspace`], so repeated solves with new
//! penalty centers only pay for iterations.

mod admm;
mod linalg;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::math;
use crate::subproblem::{ConvexProgram, DiskCap, Row};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    /// Absolute bound on the primal and dual residuals; the gap must be within ten times it.
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation in (0, 2).
    pub alpha: f64,
    pub scaling_iters: usize,
    /// Iterations between step-size updates; 0 keeps the step size fixed.
    pub adaptive_rho_interval: usize,
    pub check_interval: usize,
    pub polish: bool,
    pub infeasibility_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-6,
            max_iter: 10_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            adaptive_rho_interval: 500,
            check_interval: 5,
            polish: true,
            infeasibility_tol: 1e-5,
        }
    }
}

impl QpSettings {
    pub fn with_tol(tol: f64) -> Self {
        QpSettings { tol, ..QpSettings::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "iteration_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    /// Full-length primal point (fixed variables included).
    pub x: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub polished: bool,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    /// Disk constraints must be polygonized first.
    UnpolygonizedCones(usize),
    /// Polygons need an even number of sides, at least 8.
    InvalidSides(usize),
    NonFinite,
    /// The program passed to a workspace update differs in structure.
    StructureChanged,
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::UnpolygonizedCones(n) => {
                write!(f, "{n} disk constraints left; polygonize the program before solving")
            }
            SolveError::InvalidSides(k) => write!(f, "polygon sides must be even and >= 8 (got {k})"),
            SolveError::NonFinite => write!(f, "program data contains NaN or infinite costs"),
            SolveError::StructureChanged => write!(f, "program structure differs from the workspace"),
        }
    }
}

impl core::error::Error for SolveError {}

/// Inscribed regular polygon of a (possibly gated) disk.
///
/// Side normals sit at angles `(2j+1) pi / K`, so the vertices are at
/// `2 pi j / K` on the circle itself. Each side reads
/// `cos(t) p + sin(t) q <= radius * cos(pi / K) * gate`.
pub fn polygonize_soc(cap: &DiskCap, sides: usize) -> Result<Vec<Row>, SolveError> {
    if sides < 8 || sides % 2 != 0 {
        return Err(SolveError::InvalidSides(sides));
    }
    let k = sides as f64;
    let rhs = cap.radius * math::cos(PI / k);
    let mut rows = Vec::with_capacity(sides);
    for j in 0..sides {
        let theta = (2 * j + 1) as f64 * PI / k;
        let (c, s) = (math::cos(theta), math::sin(theta));
        let mut terms = vec![(cap.p, c), (cap.q, s)];
        let upper = match cap.gate {
            Some(g) => {
                terms.push((g, -rhs));
                0.0
            }
            None => rhs,
        };
        rows.push(Row { terms, lower: f64::NEG_INFINITY, upper, tag: cap.tag });
    }
    Ok(rows)
}

/// Copy of `prog` with every disk replaced by its inscribed polygon.
pub fn polygonize_program(prog: &ConvexProgram, sides: usize) -> Result<ConvexProgram, SolveError> {
    let mut out = prog.clone();
    out.cones.clear();
    for c in &prog.cones {
        out.rows.extend(polygonize_soc(c, sides)?);
    }
    Ok(out)
}

const FIX_TOL: f64 = 1e-12;
const ROW_TOL: f64 = 1e-9;

/// Program with fixed variables eliminated, in solver form.
#[derive(Debug, Clone)]
struct Presolved {
    n_full: usize,
    free: Vec<usize>,
    pos: Vec<Option<usize>>,
    fixed: Vec<f64>,
    a: linalg::Csr,
    l: Vec<f64>,
    u: Vec<f64>,
    infeasible: bool,
}

impl Presolved {
    fn new(prog: &ConvexProgram) -> Presolved {
        let n_full = prog.vars.len();
        let mut free = Vec::new();
        let mut pos = vec![None; n_full];
        let mut fixed = vec![0.0; n_full];
        let mut infeasible = false;
        for (j, v) in prog.vars.iter().enumerate() {
            if v.lower > v.upper + FIX_TOL {
                infeasible = true;
            }
            if v.upper - v.lower <= FIX_TOL {
                fixed[j] = v.lower;
            } else {
                pos[j] = Some(free.len());
                free.push(j);
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut l = Vec::new();
        let mut u = Vec::new();
        for r in &prog.rows {
            let mut konst = 0.0;
            let mut terms = Vec::new();
            for &(j, a) in &r.terms {
                match pos[j] {
                    Some(p) => terms.push((p, a)),
                    None => konst += a * fixed[j],
                }
            }
            if terms.iter().all(|(_, a)| *a == 0.0) {
                let scale = 1.0 + konst.abs();
                if konst < r.lower - ROW_TOL * scale || konst > r.upper + ROW_TOL * scale {
                    infeasible = true;
                }
                continue;
            }
            rows.push(terms);
            l.push(r.lower - konst);
            u.push(r.upper - konst);
        }
        for (p, &j) in free.iter().enumerate() {
            let v = &prog.vars[j];
            if v.lower.is_finite() || v.upper.is_finite() {
                rows.push(vec![(p, 1.0)]);
                l.push(v.lower);
                u.push(v.upper);
            }
        }
        let a = linalg::Csr::from_rows(free.len(), &rows);
        Presolved { n_full, free, pos, fixed, a, l, u, infeasible }
    }

    /// Diagonal quadratic and linear term of the reduced objective.
    fn objective(&self, prog: &ConvexProgram) -> (Vec<f64>, Vec<f64>) {
        let n = self.free.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for (j, c) in prog.cost.iter().enumerate() {
            if let Some(k) = self.pos[j] {
                q[k] += c;
            }
        }
        for pen in &prog.penalties {
            if let Some(k) = self.pos[pen.var] {
                p[k] += 2.0 * pen.weight;
                q[k] -= 2.0 * pen.weight * pen.center;
            }
        }
        (p, q)
    }

    fn expand(&self, xr: &[f64]) -> Vec<f64> {
        let mut x = self.fixed.clone();
        for (k, &j) in self.free.iter().enumerate() {
            x[j] = xr[k];
        }
        x
    }
}

fn check_program(prog: &ConvexProgram) -> Result<(), SolveError> {
    if !prog.cones.is_empty() {
        return Err(SolveError::UnpolygonizedCones(prog.cones.len()));
    }
    let finite = prog.cost.iter().all(|c| c.is_finite())
        && prog.penalties.iter().all(|p| p.center.is_finite() && p.weight.is_finite() && p.weight >= 0.0);
    if finite {
        Ok(())
    } else {
        Err(SolveError::NonFinite)
    }
}

/// Solver state reusable across solves of programs that differ only in
/// cost and penalty centers.
#[derive(Debug, Clone)]
pub struct QpWorkspace {
    pre: Presolved,
    engine: Option<admm::Admm>,
    p: Vec<f64>,
    n_rows: usize,
    n_penalties: usize,
}

impl QpWorkspace {
    pub fn new(prog: &ConvexProgram, settings: &QpSettings) -> Result<QpWorkspace, SolveError> {
        check_program(prog)?;
        let pre = Presolved::new(prog);
        let (p, q) = pre.objective(prog);
        let engine = if pre.infeasible || pre.free.is_empty() {
            None
        } else {
            Some(admm::Admm::new(p.clone(), q, pre.a.clone(), pre.l.clone(), pre.u.clone(), settings.clone()))
        };
        Ok(QpWorkspace { pre, engine, p, n_rows: prog.rows.len(), n_penalties: prog.penalties.len() })
    }

    /// Takes the new cost and penalty centers of `prog`. Bounds, rows and
    /// penalty weights must be unchanged.
    pub fn update_objective(&mut self, prog: &ConvexProgram) -> Result<(), SolveError> {
        check_program(prog)?;
        if prog.vars.len() != self.pre.n_full
            || prog.rows.len() != self.n_rows
            || prog.penalties.len() != self.n_penalties
        {
            return Err(SolveError::StructureChanged);
        }
        let (p, q) = self.pre.objective(prog);
        if p != self.p {
            return Err(SolveError::StructureChanged);
        }
        if let Some(e) = self.engine.as_mut() {
            e.set_q(&q);
        }
        Ok(())
    }

    /// Seeds the next solve from a full-length primal point.
    pub fn warm_start(&mut self, x: &[f64]) {
        if let Some(e) = self.engine.as_mut() {
            let xr: Vec<f64> = self.pre.free.iter().map(|&j| x[j]).collect();
            e.warm_start(&xr);
        }
    }

    pub fn solve(&mut self, prog: &ConvexProgram) -> Solution {
        if self.pre.infeasible {
            return Solution {
                status: SolveStatus::Infeasible,
                x: self.pre.fixed.clone(),
                objective: f64::INFINITY,
                primal_residual: f64::INFINITY,
                dual_residual: 0.0,
                gap: 0.0,
                iterations: 0,
                polished: false,
            };
        }
        let Some(engine) = self.engine.as_mut() else {
            let x = self.pre.fixed.clone();
            return Solution {
                status: SolveStatus::Optimal,
                objective: prog.objective(&x),
                x,
                primal_residual: 0.0,
                dual_residual: 0.0,
                gap: 0.0,
                iterations: 0,
                polished: false,
            };
        };
        let out = engine.run();
        let x = self.pre.expand(&out.x);
        Solution {
            status: out.status,
            objective: prog.objective(&x),
            x,
            primal_residual: out.primal_residual,
            dual_residual: out.dual_residual,
            gap: out.gap,
            iterations: out.iterations,
            polished: out.polished,
        }
    }
}

/// One-shot solve of a polygonized program.
pub fn solve(prog: &ConvexProgram, settings: &QpSettings) -> Result<Solution, SolveError> {
    let mut ws = QpWorkspace::new(prog, settings)?;
    Ok(ws.solve(prog))
}

#[cfg(test)]
mod tests;
