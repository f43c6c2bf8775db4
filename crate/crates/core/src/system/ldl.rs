//! Up-looking sparse LDLᵀ factorization driven by the elimination tree.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{ordering, CscMatrix};
use crate::{Error, Result};

const NONE: usize = usize::MAX;

/// `P A Pᵀ = L D Lᵀ` with unit lower-triangular `L` stored by columns.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    /// Factorizes a symmetric matrix; only entries on or above the diagonal
    /// of the permuted matrix are read.
    pub fn factorize(a: &CscMatrix, blocks: usize) -> Result<LdlFactor> {
        let n = a.n;
        let perm = ordering::block_minimum_degree(a, blocks);
        let mut pinv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }

        // symbolic: elimination tree and column counts
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (row, _) in a.column(perm[k]) {
                let mut i = pinv[row];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        // numeric
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        lnz.fill(0);
        flag.fill(NONE);
        let max_diag = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pivot_floor = 1e-14 * max_diag;
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for (row, v) in a.column(perm[k]) {
                let mut i = pinv[row];
                if i <= k {
                    y[i] += v;
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let end = lp[i] + lnz[i];
                for p in lp[i]..end {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[end] = k;
                lx[end] = l_ki;
                lnz[i] += 1;
            }
            if !(d[k].abs() > pivot_floor) {
                return Err(Error::SingularSystem(format!(
                    "pivot {:e} at unknown {} is below {:e} (max |diag| {:e})",
                    d[k], perm[k], pivot_floor, max_diag
                )));
            }
        }
        Ok(LdlFactor {
            n,
            perm,
            pinv,
            lp,
            li,
            lx,
            d,
        })
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    /// `min |D| / max |D|`, a cheap conditioning diagnostic.
    pub fn pivot_ratio(&self) -> f64 {
        let (lo, hi) = self
            .d
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        lo / hi
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..self.n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..self.n).rev() {
            let mut xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                xj -= self.lx[p] * x[self.li[p]];
            }
            x[j] = xj;
        }
        (0..self.n).map(|i| x[self.pinv[i]]).collect()
    }
}
