use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{norm2, CscMatrix};
use crate::{Error, Result};

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite matrix, iterating until `‖b − A x‖₂ ≤ tol`.
pub fn solve(a: &CscMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.n;
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::SingularSystem(format!(
            "nonpositive diagonal {:e} at unknown {i}; conjugate gradients needs a positive definite matrix",
            diag[i]
        )));
    }
    let inv: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(ri, m)| ri * m).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = (10 * n).max(1000);
    for _ in 0..max_iter {
        if norm2(&r) <= tol {
            return Ok(x);
        }
        let ap = a.multiply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SingularSystem(format!(
                "conjugate gradients met curvature {pap:e} <= 0"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SingularSystem(format!(
        "conjugate gradients did not reach residual {tol:e} in {max_iter} iterations"
    )))
}
