//! Operator-splitting solver for `min 1/2 x'Px + q'x  s.t.  l <= Ax <= u`
//! with diagonal `P`, in the style of OSQP: Ruiz equilibration, a cached
//! factorization of the reduced KKT matrix, over-relaxation, step-size
//! adaptation, infeasibility certificates and active-set polishing.

use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{Cholesky, Csr};
use super::{QpSettings, SolveStatus};
use crate::math::{self, norm_inf};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const POLISH_DELTA: f64 = 1e-6;
const POLISH_REFINE: usize = 10;

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub polished: bool,
}

struct Residuals {
    prim: f64,
    dual: f64,
    dual_tol: f64,
    gap: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Admm {
    n: usize,
    m: usize,
    p0: Vec<f64>,
    q0: Vec<f64>,
    a0: Csr,
    l0: Vec<f64>,
    u0: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    a: Csr,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    rho: f64,
    rho_vec: Vec<f64>,
    chol: Cholesky,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    settings: QpSettings,
}

impl Admm {
    pub fn new(p0: Vec<f64>, q0: Vec<f64>, a0: Csr, l0: Vec<f64>, u0: Vec<f64>, settings: QpSettings) -> Admm {
        let n = p0.len();
        let m = a0.rows;
        let mut s = Admm {
            n,
            m,
            p: p0.clone(),
            q: q0.clone(),
            a: a0.clone(),
            l: l0.clone(),
            u: u0.clone(),
            p0,
            q0,
            a0,
            l0,
            u0,
            d: vec![1.0; n],
            e: vec![1.0; m],
            c: 1.0,
            rho: settings.rho,
            rho_vec: vec![settings.rho; m],
            chol: Cholesky::default(),
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            settings,
        };
        s.equilibrate();
        s.set_rho(s.settings.rho);
        s
    }

    fn equilibrate(&mut self) {
        let (n, m) = (self.n, self.m);
        let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
        for _ in 0..self.settings.scaling_iters {
            let mut col = vec![0.0_f64; n];
            let mut row = vec![0.0_f64; m];
            for j in 0..n {
                col[j] = self.p[j].abs();
            }
            for i in 0..m {
                for (j, a) in self.a.row(i) {
                    col[j] = col[j].max(a.abs());
                    row[i] = row[i].max(a.abs());
                }
            }
            let dj: Vec<f64> = col.iter().map(|v| 1.0 / math::sqrt(clamp(*v))).collect();
            let ei: Vec<f64> = row.iter().map(|v| 1.0 / math::sqrt(clamp(*v))).collect();
            for j in 0..n {
                self.p[j] *= dj[j] * dj[j];
                self.q[j] *= dj[j];
                self.d[j] *= dj[j];
            }
            self.a.scale(&ei, &dj);
            for i in 0..m {
                self.e[i] *= ei[i];
            }
            let mean_p = if n > 0 { self.p.iter().map(|v| v.abs()).sum::<f64>() / n as f64 } else { 0.0 };
            let gamma = 1.0 / clamp(mean_p.max(norm_inf(&self.q)));
            for j in 0..n {
                self.p[j] *= gamma;
                self.q[j] *= gamma;
            }
            self.c *= gamma;
        }
        for i in 0..m {
            self.l[i] = scale_bound(self.l0[i], self.e[i]);
            self.u[i] = scale_bound(self.u0[i], self.e[i]);
        }
    }

    fn set_rho(&mut self, rho: f64) {
        self.rho = rho.clamp(RHO_MIN, RHO_MAX);
        for i in 0..self.m {
            self.rho_vec[i] = if self.l[i] == self.u[i] {
                RHO_EQ_FACTOR * self.rho
            } else if self.l[i] == f64::NEG_INFINITY && self.u[i] == f64::INFINITY {
                RHO_MIN
            } else {
                self.rho
            };
        }
        let n = self.n;
        let mut k = vec![0.0; n * n];
        for j in 0..n {
            k[j * n + j] = self.p[j] + self.settings.sigma;
        }
        self.a.add_gram(&self.rho_vec, &mut k);
        self.chol = Cholesky::factor(n, &k).expect("KKT matrix is positive definite");
    }

    /// Replaces the linear cost, keeping the factorization and iterates.
    pub fn set_q(&mut self, q0: &[f64]) {
        self.q0.copy_from_slice(q0);
        for j in 0..self.n {
            self.q[j] = self.c * self.d[j] * q0[j];
        }
    }

    /// Seeds the primal iterate from an unscaled point.
    pub fn warm_start(&mut self, x0: &[f64]) {
        for j in 0..self.n {
            self.x[j] = x0[j] / self.d[j];
        }
        let mut ax = vec![0.0; self.m];
        self.a.mul(&self.x, &mut ax);
        for i in 0..self.m {
            self.z[i] = ax[i].clamp(self.l[i], self.u[i]);
        }
    }

    fn step(&mut self, work: &mut Work) {
        let (n, m) = (self.n, self.m);
        let alpha = self.settings.alpha;
        for i in 0..m {
            work.tm[i] = self.rho_vec[i] * self.z[i] - self.y[i];
        }
        self.a.tmul(&work.tm, &mut work.tn);
        for j in 0..n {
            work.tn[j] += self.settings.sigma * self.x[j] - self.q[j];
        }
        self.chol.solve(&mut work.tn);
        self.a.mul(&work.tn, &mut work.tm);
        for j in 0..n {
            self.x[j] = alpha * work.tn[j] + (1.0 - alpha) * self.x[j];
        }
        for i in 0..m {
            let w = alpha * work.tm[i] + (1.0 - alpha) * self.z[i];
            let z_new = (w + self.y[i] / self.rho_vec[i]).clamp(self.l[i], self.u[i]);
            self.y[i] += self.rho_vec[i] * (w - z_new);
            self.z[i] = z_new;
        }
    }

    fn unscaled(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..self.n).map(|j| self.d[j] * self.x[j]).collect();
        let z: Vec<f64> = (0..self.m).map(|i| self.z[i] / self.e[i]).collect();
        let y: Vec<f64> = (0..self.m).map(|i| self.e[i] * self.y[i] / self.c).collect();
        (x, z, y)
    }

    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        // Multipliers on an infinite bound are zero up to round-off.
        let y: Vec<f64> = (0..self.m)
            .map(|i| {
                if self.u0[i] == f64::INFINITY {
                    y[i].min(0.0)
                } else if self.l0[i] == f64::NEG_INFINITY {
                    y[i].max(0.0)
                } else {
                    y[i]
                }
            })
            .collect();
        let y = y.as_slice();
        let mut ax = vec![0.0; self.m];
        self.a0.mul(x, &mut ax);
        let prim = ax.iter().zip(z).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        let mut aty = vec![0.0; self.n];
        self.a0.tmul(y, &mut aty);
        let mut dual = 0.0_f64;
        let mut px_norm = 0.0_f64;
        let mut quad = 0.0;
        let mut lin = 0.0;
        for j in 0..self.n {
            let px = self.p0[j] * x[j];
            px_norm = px_norm.max(px.abs());
            dual = dual.max((px + self.q0[j] + aty[j]).abs());
            quad += px * x[j];
            lin += self.q0[j] * x[j];
        }
        let scale = px_norm.max(norm_inf(&aty)).max(norm_inf(&self.q0));
        let support = support(&self.l0, &self.u0, y);
        Residuals {
            prim,
            dual,
            dual_tol: self.settings.tol * (1.0 + scale),
            gap: (quad + lin + support).abs(),
        }
    }

    fn converged(&self, r: &Residuals) -> bool {
        let tol = self.settings.tol;
        r.prim <= tol && r.dual <= tol && r.gap <= 10.0 * tol
    }

    fn adapt_rho(&mut self, work: &mut Work) {
        let (n, m) = (self.n, self.m);
        self.a.mul(&self.x, &mut work.tm);
        let ax_norm = norm_inf(&work.tm);
        let prim = (0..m).fold(0.0_f64, |acc, i| acc.max((work.tm[i] - self.z[i]).abs()));
        let prim_scale = ax_norm.max(norm_inf(&self.z));
        self.a.tmul(&self.y, &mut work.tn);
        let aty_norm = norm_inf(&work.tn);
        let mut dual = 0.0_f64;
        let mut px_norm = 0.0_f64;
        for j in 0..n {
            let px = self.p[j] * self.x[j];
            px_norm = px_norm.max(px.abs());
            dual = dual.max((px + self.q[j] + work.tn[j]).abs());
        }
        let dual_scale = px_norm.max(aty_norm).max(norm_inf(&self.q));
        let ratio = (prim / (prim_scale + 1e-10)) / (dual / (dual_scale + 1e-10) + 1e-10);
        let new_rho = (self.rho * math::sqrt(ratio)).clamp(RHO_MIN, RHO_MAX);
        if new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho {
            self.set_rho(new_rho);
        }
    }

    pub fn run(&mut self) -> Outcome {
        let mut work = Work { tn: vec![0.0; self.n], tm: vec![0.0; self.m] };
        let s = self.settings.clone();
        let mut prev_y: Option<Vec<f64>> = None;
        let mut prev_x: Option<Vec<f64>> = None;
        let mut last_polish: Option<usize> = None;
        let mut last = None;
        for k in 1..=s.max_iter {
            self.step(&mut work);
            if k % s.check_interval == 0 || k == s.max_iter {
                let (x, z, y) = self.unscaled();
                let r = self.residuals(&x, &z, &y);
                if self.converged(&r) {
                    if s.polish {
                        if let Some(out) = self.polish(&z, &y, k) {
                            return out;
                        }
                    }
                    return Outcome {
                        status: SolveStatus::Optimal,
                        x,
                        iterations: k,
                        primal_residual: r.prim,
                        dual_residual: r.dual,
                        gap: r.gap,
                        polished: false,
                    };
                }
                let near = r.prim <= 1e3 * s.tol && r.dual <= 1e3 * r.dual_tol;
                if s.polish && near && last_polish.is_none_or(|p| k >= p + 50) {
                    last_polish = Some(k);
                    if let Some(out) = self.polish(&z, &y, k) {
                        return out;
                    }
                }
                if let (Some(py), Some(px)) = (&prev_y, &prev_x) {
                    if self.primal_infeasible(&y, py) {
                        return self.terminal(SolveStatus::Infeasible, x, k, &r);
                    }
                    if self.dual_infeasible(&x, px) {
                        return self.terminal(SolveStatus::Unbounded, x, k, &r);
                    }
                }
                prev_y = Some(y.clone());
                prev_x = Some(x.clone());
                last = Some((x, r));
            }
            if s.adaptive_rho_interval > 0 && k % s.adaptive_rho_interval == 0 {
                self.adapt_rho(&mut work);
            }
        }
        let (x, r) = last.expect("at least one residual check");
        self.terminal(SolveStatus::MaxIterations, x, s.max_iter, &r)
    }

    fn terminal(&self, status: SolveStatus, x: Vec<f64>, k: usize, r: &Residuals) -> Outcome {
        Outcome {
            status,
            x,
            iterations: k,
            primal_residual: r.prim,
            dual_residual: r.dual,
            gap: r.gap,
            polished: false,
        }
    }

    fn primal_infeasible(&self, y: &[f64], prev: &[f64]) -> bool {
        let eps = self.settings.infeasibility_tol;
        let dy: Vec<f64> = y.iter().zip(prev).map(|(a, b)| a - b).collect();
        let norm = norm_inf(&dy);
        if norm < 1e-10 {
            return false;
        }
        let mut atdy = vec![0.0; self.n];
        self.a0.tmul(&dy, &mut atdy);
        if norm_inf(&atdy) > eps * norm {
            return false;
        }
        support(&self.l0, &self.u0, &dy) < -eps * norm
    }

    fn dual_infeasible(&self, x: &[f64], prev: &[f64]) -> bool {
        let eps = self.settings.infeasibility_tol;
        let dx: Vec<f64> = x.iter().zip(prev).map(|(a, b)| a - b).collect();
        let norm = norm_inf(&dx);
        if norm < 1e-10 {
            return false;
        }
        if (0..self.n).any(|j| (self.p0[j] * dx[j]).abs() > eps * norm) {
            return false;
        }
        let qdx: f64 = self.q0.iter().zip(&dx).map(|(a, b)| a * b).sum();
        if qdx > -eps * norm {
            return false;
        }
        let mut adx = vec![0.0; self.m];
        self.a0.mul(&dx, &mut adx);
        (0..self.m).all(|i| {
            let hi_ok = self.u0[i] == f64::INFINITY || adx[i] <= eps * norm;
            let lo_ok = self.l0[i] == f64::NEG_INFINITY || adx[i] >= -eps * norm;
            hi_ok && lo_ok
        })
    }

    /// Solves the equality-constrained problem on a guessed active set.
    fn polish(&self, z: &[f64], y: &[f64], k: usize) -> Option<Outcome> {
        let n = self.n;
        let mut act: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.m {
            if self.l0[i] == self.u0[i] {
                act.push((i, self.l0[i]));
            } else if z[i] - self.l0[i] < -y[i] {
                act.push((i, self.l0[i]));
            } else if self.u0[i] - z[i] < y[i] {
                act.push((i, self.u0[i]));
            }
        }
        let delta = POLISH_DELTA;
        let mut kmat = vec![0.0; n * n];
        for j in 0..n {
            kmat[j * n + j] = self.p0[j] + delta;
        }
        let w: Vec<f64> = vec![1.0 / delta; act.len()];
        let rows: Vec<Vec<(usize, f64)>> = act.iter().map(|(i, _)| self.a0.row(*i).collect()).collect();
        let aa = Csr::from_rows(n, &rows);
        aa.add_gram(&w, &mut kmat);
        let chol = Cholesky::factor(n, &kmat)?;
        let b: Vec<f64> = act.iter().map(|(_, b)| *b).collect();
        let mut xp = vec![0.0; n];
        let mut ya = vec![0.0; act.len()];
        let mut r2 = vec![0.0; act.len()];
        let mut tmp = vec![0.0; n];
        let mut adx = vec![0.0; act.len()];
        for _ in 0..=POLISH_REFINE {
            // r1 = -q - Px - A'y, r2 = b - Ax
            aa.tmul(&ya, &mut tmp);
            let mut rhs: Vec<f64> = (0..n).map(|j| -self.q0[j] - self.p0[j] * xp[j] - tmp[j]).collect();
            aa.mul(&xp, &mut r2);
            for (ri, bi) in r2.iter_mut().zip(&b) {
                *ri = bi - *ri;
            }
            let scaled: Vec<f64> = r2.iter().map(|v| v / delta).collect();
            aa.tmul(&scaled, &mut tmp);
            for j in 0..n {
                rhs[j] += tmp[j];
            }
            chol.solve(&mut rhs);
            aa.mul(&rhs, &mut adx);
            for j in 0..n {
                xp[j] += rhs[j];
            }
            for t in 0..act.len() {
                ya[t] += (adx[t] - r2[t]) / delta;
            }
        }
        if xp.iter().chain(&ya).any(|v| !v.is_finite()) {
            return None;
        }
        let mut yp = vec![0.0; self.m];
        for (t, (i, _)) in act.iter().enumerate() {
            yp[*i] = ya[t];
        }
        let mut zp = vec![0.0; self.m];
        self.a0.mul(&xp, &mut zp);
        for i in 0..self.m {
            zp[i] = zp[i].clamp(self.l0[i], self.u0[i]);
        }
        let r = self.residuals(&xp, &zp, &yp);
        if !self.converged(&r) {
            return None;
        }
        Some(Outcome {
            status: SolveStatus::Optimal,
            x: xp,
            iterations: k,
            primal_residual: r.prim,
            dual_residual: r.dual,
            gap: r.gap,
            polished: true,
        })
    }
}

struct Work {
    tn: Vec<f64>,
    tm: Vec<f64>,
}

fn scale_bound(b: f64, e: f64) -> f64 {
    if b.is_finite() {
        b * e
    } else {
        b
    }
}

/// Support function of the box `[l, u]` at `y`.
fn support(l: &[f64], u: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        if y[i] > 0.0 {
            s += u[i] * y[i];
        } else if y[i] < 0.0 {
            s += l[i] * y[i];
        }
    }
    s
}
