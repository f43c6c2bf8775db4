//! Block-sparse symmetric systems and their solution.
//!
//! Systems are accumulated from 3×3 blocks as triplets (duplicates sum) and
//! solved by a sparse LDLᵀ factorization under a block minimum-degree
//! ordering, or by Jacobi-preconditioned conjugate gradients above
//! [`DIRECT_SOLVE_LIMIT`] unknowns.

mod cg;
pub mod ldl;
pub mod ordering;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{Matrix3, Vec3};
use crate::{Error, Result};

pub use ldl::LdlFactor;

/// Largest dimension solved by direct factorization.
pub const DIRECT_SOLVE_LIMIT: usize = 50_000;

/// Relative tolerance for treating an assembled matrix as symmetric.
const SYMMETRY_TOL: f64 = 1e-12;

/// Square system `A x = b` assembled from 3×3 blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    dim: usize,
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl BlockSystem {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim % 3 != 0 {
            return Err(Error::InvalidConfig(format!(
                "system dimension {dim} must be a positive multiple of 3"
            )));
        }
        Ok(BlockSystem {
            dim,
            triplets: Vec::new(),
            rhs: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> usize {
        self.dim / 3
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    fn check_blocks(&self, row: usize, col: usize) -> Result<()> {
        if 3 * row + 2 < self.dim && 3 * col + 2 < self.dim {
            Ok(())
        } else {
            Err(Error::BlockOutOfRange { row, col, dim: self.dim })
        }
    }

    /// Accumulates `m` into the `(block_row, block_col)` slot.
    pub fn add_block(&mut self, block_row: usize, block_col: usize, m: &Matrix3) -> Result<()> {
        self.check_blocks(block_row, block_col)?;
        for (i, row) in m.rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    self.triplets.push((3 * block_row + i, 3 * block_col + j, v));
                }
            }
        }
        Ok(())
    }

    pub fn add_rhs(&mut self, block: usize, v: Vec3) -> Result<()> {
        self.check_blocks(block, block)?;
        for (k, c) in v.to_array().into_iter().enumerate() {
            self.rhs[3 * block + k] += c;
        }
        Ok(())
    }

    /// Adds `λ I` to a diagonal block.
    pub fn add_diagonal(&mut self, block: usize, lambda: f64) -> Result<()> {
        if lambda != 0.0 {
            self.add_block(block, block, &Matrix3::diagonal(lambda))?;
        }
        Ok(())
    }

    /// Accumulates the normal equations of one weighted residual
    /// `w ‖Σ_b J_b v_b − c‖²`: `A_ab += w J_aᵀ J_b` and `b_a += w J_aᵀ c`.
    ///
    /// The resulting rows are half the gradient of the residual, so a system
    /// built only from residuals is symmetric positive semidefinite.
    pub fn add_residual(&mut self, weight: f64, terms: &[(usize, Matrix3)], target: Vec3) -> Result<()> {
        if weight == 0.0 {
            return Ok(());
        }
        for &(a, ja) in terms {
            let jat = ja.transpose();
            for &(b, jb) in terms {
                self.add_block(a, b, &((jat * jb) * weight))?;
            }
            self.add_rhs(a, (jat * target) * weight)?;
        }
        Ok(())
    }

    /// Compressed column form with duplicates summed.
    pub fn to_csc(&self) -> CscMatrix {
        CscMatrix::from_triplets(self.dim, &self.triplets)
    }

    /// Dense copy, row major. Intended for small systems and checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.dim]; self.dim];
        for &(r, c, v) in &self.triplets {
            a[r][c] += v;
        }
        a
    }

    /// `max |A − Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        self.to_csc().asymmetry()
    }
}

/// Square matrix in compressed sparse column form.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        CscMatrix {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (c, &xc) in x.iter().enumerate().take(self.n) {
            if xc != 0.0 {
                for (r, v) in self.column(c) {
                    y[r] += v * xc;
                }
            }
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|c| self.column(c).filter(|&(r, _)| r == c).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn asymmetry(&self) -> f64 {
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.values.len() * 2);
        for c in 0..self.n {
            for (r, v) in self.column(c) {
                t.push((r, c, v));
                t.push((c, r, -v));
            }
        }
        CscMatrix::from_triplets(self.n, &t).max_abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    /// `‖A x − b‖₂`
    pub residual_norm: f64,
    pub method: SolveMethod,
    /// Seconds; zero without the `std` feature.
    pub factor_time: f64,
    pub solve_time: f64,
}

pub fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn residual(a: &CscMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.multiply(x);
    b.iter().zip(ax).map(|(bi, axi)| bi - axi).collect()
}

/// Residual bound every solution must meet: `1e-8 · max(1, ‖b‖₂)`.
pub fn residual_tolerance(b: &[f64]) -> f64 {
    1e-8 * norm2(b).max(1.0)
}

/// Solves with the direct method up to [`DIRECT_SOLVE_LIMIT`] unknowns and
/// with conjugate gradients above.
pub fn solve(sys: &BlockSystem) -> Result<SolveReport> {
    let method = if sys.dim <= DIRECT_SOLVE_LIMIT {
        SolveMethod::Direct
    } else {
        SolveMethod::Iterative
    };
    solve_with(sys, method)
}

pub fn solve_with(sys: &BlockSystem, method: SolveMethod) -> Result<SolveReport> {
    let a = sys.to_csc();
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let b = &sys.rhs;
    let tol = residual_tolerance(b);
    let clock = Clock::start();
    let (x, factor_time, diagnostic) = match method {
        SolveMethod::Direct => {
            let factor = LdlFactor::factorize(&a, sys.blocks())?;
            let factor_time = clock.elapsed();
            let mut x = factor.solve(b);
            // refinement sweeps push the residual well below `tol`
            for _ in 0..3 {
                let r = residual(&a, &x, b);
                let dx = factor.solve(&r);
                x.iter_mut().zip(dx).for_each(|(xi, di)| *xi += di);
                if norm2(&residual(&a, &x, b)) <= 1e-6 * tol {
                    break;
                }
            }
            (x, factor_time, factor.pivot_ratio())
        }
        SolveMethod::Iterative => {
            let x = cg::solve(&a, b, 1e-3 * tol)?;
            (x, 0.0, f64::NAN)
        }
    };
    let solve_time = clock.elapsed() - factor_time;
    let residual_norm = norm2(&residual(&a, &x, b));
    if !(residual_norm <= tol) {
        return Err(Error::SingularSystem(format!(
            "residual {residual_norm:e} exceeds {tol:e} (pivot ratio {diagnostic:e})"
        )));
    }
    Ok(SolveReport {
        solution: x,
        residual_norm,
        method,
        factor_time,
        solve_time,
    })
}

#[cfg(feature = "std")]
struct Clock(std::time::Instant);

#[cfg(feature = "std")]
impl Clock {
    fn start() -> Self {
        Clock(std::time::Instant::now())
    }

    fn elapsed(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(not(feature = "std"))]
struct Clock;

#[cfg(not(feature = "std"))]
impl Clock {
    fn start() -> Self {
        Clock
    }

    fn elapsed(&self) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_blocks_sum() {
        let mut sys = BlockSystem::new(6).unwrap();
        sys.add_block(0, 0, &Matrix3::IDENTITY).unwrap();
        sys.add_block(0, 0, &Matrix3::IDENTITY).unwrap();
        let a = sys.to_dense();
        assert_eq!(a[0][0], 2.0);
        assert_eq!(a[2][2], 2.0);
        assert_eq!(a[0][1], 0.0);
        assert_eq!(sys.to_csc().diagonal(), vec![2.0, 2.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_blocks_are_rejected() {
        let mut sys = BlockSystem::new(6).unwrap();
        assert!(matches!(
            sys.add_block(2, 0, &Matrix3::IDENTITY),
            Err(Error::BlockOutOfRange { .. })
        ));
        assert!(sys.add_rhs(5, Vec3::ZERO).is_err());
        assert!(BlockSystem::new(7).is_err());
    }

    #[test]
    fn identity_solve() {
        let mut sys = BlockSystem::new(6).unwrap();
        sys.add_diagonal(0, 1.0).unwrap();
        sys.add_diagonal(1, 1.0).unwrap();
        sys.add_rhs(0, Vec3::new(1.0, 2.0, 3.0)).unwrap();
        sys.add_rhs(1, Vec3::new(4.0, 5.0, 6.0)).unwrap();
        let rep = solve(&sys).unwrap();
        assert_eq!(rep.solution, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(rep.method, SolveMethod::Direct);
    }

    #[test]
    fn pure_regularizer() {
        let mut sys = BlockSystem::new(6).unwrap();
        sys.add_diagonal(0, 1e-6).unwrap();
        sys.add_diagonal(1, 1e-6).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        sys.add_rhs(0, Vec3::new(b[0], b[1], b[2])).unwrap();
        sys.add_rhs(1, Vec3::new(b[3], b[4], b[5])).unwrap();
        let x = solve(&sys).unwrap().solution;
        for (xi, bi) in x.iter().zip(b) {
            assert!((xi - bi / 1e-6).abs() <= 1e-9 * (bi / 1e-6).abs().max(1.0));
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let mut sys = BlockSystem::new(6).unwrap();
        sys.add_diagonal(0, 1.0).unwrap();
        sys.add_rhs(1, Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(matches!(solve(&sys), Err(Error::SingularSystem(_))));
        assert!(matches!(
            solve_with(&sys, SolveMethod::Iterative),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn asymmetric_system_is_rejected() {
        let mut sys = BlockSystem::new(3).unwrap();
        sys.add_block(0, 0, &Matrix3::new([[2.0, 1.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]])).unwrap();
        assert!(matches!(solve(&sys), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn residual_blocks_are_symmetric() {
        let mut sys = BlockSystem::new(9).unwrap();
        let j0 = Matrix3::new([[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [1.0, 0.0, 1.0]]);
        sys.add_residual(0.7, &[(0, j0), (2, -Matrix3::IDENTITY)], Vec3::new(1.0, 2.0, 3.0))
            .unwrap();
        assert!(sys.asymmetry() < 1e-15);
    }
}
