use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub start: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Builds from per-row term lists; duplicate columns within a row are summed
    /// and explicit zeros dropped.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Csr {
        let mut start = Vec::with_capacity(rows.len() + 1);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        start.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in rows {
            scratch.clear();
            scratch.extend_from_slice(r);
            scratch.sort_unstable_by_key(|t| t.0);
            let mut k = 0;
            while k < scratch.len() {
                let j = scratch[k].0;
                let mut a = 0.0;
                while k < scratch.len() && scratch[k].0 == j {
                    a += scratch[k].1;
                    k += 1;
                }
                if a != 0.0 {
                    idx.push(j);
                    val.push(a);
                }
            }
            start.push(idx.len());
        }
        Csr { rows: rows.len(), cols, start, idx, val }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.start[i], self.start[i + 1]);
        self.idx[a..b].iter().copied().zip(self.val[a..b].iter().copied())
    }

    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    pub fn tmul(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, yi) in y.iter().enumerate().take(self.rows) {
            if *yi != 0.0 {
                for (j, a) in self.row(i) {
                    out[j] += a * yi;
                }
            }
        }
    }

    pub fn scale(&mut self, row_scale: &[f64], col_scale: &[f64]) {
        for i in 0..self.rows {
            for k in self.start[i]..self.start[i + 1] {
                self.val[k] *= row_scale[i] * col_scale[self.idx[k]];
            }
        }
    }

    /// Adds `sum_i w_i a_i a_i^T` into a dense `cols x cols` matrix (row-major).
    pub fn add_gram(&self, w: &[f64], dense: &mut [f64]) {
        let n = self.cols;
        for i in 0..self.rows {
            let (a, b) = (self.start[i], self.start[i + 1]);
            for p in a..b {
                let (jp, vp) = (self.idx[p], self.val[p] * w[i]);
                for q in a..b {
                    dense[jp * n + self.idx[q]] += vp * self.val[q];
                }
            }
        }
    }
}

/// Dense Cholesky factor `M = L L^T`, lower triangle stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric positive definite matrix; `None` if a pivot is not positive.
    pub fn factor(n: usize, m: &[f64]) -> Option<Cholesky> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = m[i * n + j];
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * n + i] = math::sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.l[i * n + k] * b[k]).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.l[k * n + i] * b[k]).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_merges_duplicates_and_multiplies() {
        let a = Csr::from_rows(3, &[vec![(0, 1.0), (2, 2.0), (0, 1.0)], vec![(1, 0.0)], vec![(1, -1.0)]]);
        assert_eq!(a.row(0).collect::<Vec<_>>(), vec![(0, 2.0), (2, 2.0)]);
        assert_eq!(a.row(1).count(), 0);
        let mut out = [0.0; 3];
        a.mul(&[1.0, 2.0, 3.0], &mut out);
        assert_eq!(out, [8.0, 0.0, -2.0]);
        let mut back = [0.0; 3];
        a.tmul(&[1.0, 5.0, 1.0], &mut back);
        assert_eq!(back, [2.0, -1.0, 2.0]);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let m = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let c = Cholesky::factor(3, &m).unwrap();
        let x = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| m[i * 3 + j] * x[j]).sum()).collect();
        c.solve(&mut b);
        for (a, e) in b.iter().zip(x) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!(Cholesky::factor(2, &[1.0, 2.0, 2.0, 1.0]).is_none());
    }
}
