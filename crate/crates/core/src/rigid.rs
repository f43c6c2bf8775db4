//! Rigid registration: one joint `6 + 3N` solve per iteration.
//!
//! Unknowns are laid out in 3-blocks as `(r, t, z_1, …, z_N)`. Every system
//! row is half the gradient of the surrogate energy, which keeps the matrix
//! symmetric and avoids dividing by `w2`.

use alloc::vec::Vec;

use crate::energy::{eval_energy, eval_gradient, EnergyBreakdown, RegistrationState, Weights};
use crate::geom::{skew, Matrix3, Point3, RigidTransform, SmallMotion, Vec3};
use crate::mesh::Mesh;
use crate::spatial::{estimate_normals, KdTree, Projection};
use crate::system::{solve, BlockSystem};
use crate::{Error, Result};

/// Neighborhood size for normals estimated on face-less targets.
pub const NORMAL_NEIGHBORS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidConfig {
    pub weights: Weights,
    pub max_iters: usize,
    /// Stop once `‖r‖ + ‖t‖` of a step falls below this.
    pub stop_tol: f64,
    pub use_point_to_plane: bool,
}

impl Default for RigidConfig {
    fn default() -> Self {
        RigidConfig {
            weights: Weights::rigid(),
            max_iters: 50,
            stop_tol: 1e-6,
            use_point_to_plane: false,
        }
    }
}

impl RigidConfig {
    /// Weights as actually used: no ARAP term, and no plane term unless
    /// enabled.
    pub fn effective_weights(&self) -> Weights {
        Weights {
            w3: 0.0,
            w4: if self.use_point_to_plane { self.weights.w4 } else { 0.0 },
            ..self.weights
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.effective_weights();
        w.validate()?;
        if !(w.w2 > 0.0) {
            return Err(Error::InvalidConfig("rigid registration needs w2 > 0".into()));
        }
        check_loop(self.max_iters, self.stop_tol)
    }
}

pub(crate) fn check_loop(max_iters: usize, stop_tol: f64) -> Result<()> {
    if max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
    }
    if !(stop_tol > 0.0) {
        return Err(Error::InvalidConfig("stop_tol must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iter: usize,
    /// Surrogate energies at the solved step.
    pub energies: EnergyBreakdown,
    /// Surrogate total energy of the null step (no motion, `z = x`).
    pub null_energy: f64,
    /// `‖∇E‖_∞` of the surrogate at the solved step.
    pub stationarity: f64,
    pub step_rot_norm: f64,
    pub step_trans_norm: f64,
    /// Root-mean-square distance from the new iterate to its projections.
    pub rmsd_to_projection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Accumulated global rigid motion.
    pub transform: RigidTransform,
    pub final_points: Vec<Point3>,
    pub reports: Vec<IterationReport>,
    pub converged: bool,
    /// RMSD of the untouched source to its projections.
    pub initial_rmsd: f64,
}

impl RegistrationResult {
    pub fn iterations(&self) -> usize {
        self.reports.len()
    }

    pub fn final_rmsd(&self) -> f64 {
        self.reports.last().map_or(self.initial_rmsd, |r| r.rmsd_to_projection)
    }
}

/// Solution of one linearized step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution {
    pub motion: SmallMotion,
    pub z: Vec<Point3>,
    /// Per-vertex rotations, ARAP only.
    pub local_rotations: Option<Vec<Vec3>>,
    pub energies: EnergyBreakdown,
    pub null_energy: f64,
    pub stationarity: f64,
}

/// Builds the projection tree, attaching target normals when the plane
/// term needs them (given normals first, then faces, then PCA).
pub fn prepare_target(target: &Mesh, need_normals: bool) -> Result<KdTree> {
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    target.validate()?;
    if !need_normals {
        return KdTree::build(target.vertices.clone());
    }
    let normals = match &target.normals {
        Some(n) => n.clone(),
        None => estimate_normals(&target.vertices, NORMAL_NEIGHBORS, Some(&target.faces))?,
    };
    KdTree::with_normals(target.vertices.clone(), normals)
}

pub(crate) fn rmsd(projections: &[Projection]) -> f64 {
    if projections.is_empty() {
        return 0.0;
    }
    let sum: f64 = projections.iter().map(|p| p.distance * p.distance).sum();
    libm::sqrt(sum / projections.len() as f64)
}

/// Per-point data residuals shared by both drivers: fit, plane and the
/// global rigid term. `z_block(i)` maps a point to its unknown block.
pub(crate) fn add_point_terms(
    sys: &mut BlockSystem,
    x: &[Point3],
    proj: &[Projection],
    w: &Weights,
    p2plane: bool,
    z_block: impl Fn(usize) -> usize,
) -> Result<()> {
    for (i, (&xi, pi)) in x.iter().zip(proj).enumerate() {
        let zb = z_block(i);
        // fit: z_i − Π_i
        sys.add_residual(w.w1, &[(zb, Matrix3::IDENTITY)], pi.point)?;
        // rigid: x_i + r × x_i + t − z_i  =  −[x_i]× r + t − z_i + x_i
        sys.add_residual(
            w.w2,
            &[(0, -skew(xi)), (1, Matrix3::IDENTITY), (zb, -Matrix3::IDENTITY)],
            -xi,
        )?;
        if p2plane && w.w4 > 0.0 {
            // plane: n nᵀ (z_i − Π_i), whose squared norm is (nᵀ(z_i − Π_i))²
            let n = pi.normal.ok_or(Error::MissingNormals)?;
            let nn = Matrix3::outer(n, n);
            sys.add_residual(w.w4, &[(zb, nn)], nn * pi.point)?;
        }
    }
    sys.add_diagonal(0, w.tikhonov)?;
    sys.add_diagonal(1, w.translation_tikhonov())
}

/// Assembles the `6 + 3N` system for the current iterate `x` and its frozen
/// projections.
pub fn assemble_rigid(x: &[Point3], proj: &[Projection], w: &Weights, p2plane: bool) -> Result<BlockSystem> {
    let n = x.len();
    if n < 3 {
        return Err(Error::Underdetermined { got: n, need: 3 });
    }
    if proj.len() != n {
        return Err(Error::LengthMismatch {
            what: "projections",
            got: proj.len(),
            expected: n,
        });
    }
    if !(w.w2 > 0.0) {
        return Err(Error::InvalidConfig("rigid registration needs w2 > 0".into()));
    }
    if p2plane && w.w4 > 0.0 && proj.iter().any(|p| p.normal.is_none()) {
        return Err(Error::MissingNormals);
    }
    let mut sys = BlockSystem::new(6 + 3 * n)?;
    add_point_terms(&mut sys, x, proj, w, p2plane, |i| 2 + i)?;
    Ok(sys)
}

/// Assembles and solves one step against already computed projections.
pub fn solve_rigid_step(x: &[Point3], proj: &[Projection], cfg: &RigidConfig) -> Result<StepSolution> {
    let w = cfg.effective_weights();
    let sys = assemble_rigid(x, proj, &w, cfg.use_point_to_plane)?;
    let report = solve(&sys)?;
    let null = RegistrationState::null_step(x, proj, false);
    let state = null.with_unknowns(&report.solution)?;
    let energies = eval_energy(&state, None, &w)?;
    let null_energy = eval_energy(&null, None, &w)?.e_total;
    let stationarity = inf_norm(&eval_gradient(&state, None, &w)?);
    Ok(StepSolution {
        motion: state.motion,
        z: state.z,
        local_rotations: None,
        energies,
        null_energy,
        stationarity,
    })
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Projects `x` onto the target and solves one step.
pub fn step_rigid(x: &[Point3], tree: &KdTree, cfg: &RigidConfig) -> Result<StepSolution> {
    let proj = tree.project_all(x);
    solve_rigid_step(x, &proj, cfg)
}

/// Iterates rigid steps, composing each exact rotation `exp([r]×)` and `t`
/// onto the running transform and re-transforming the original source.
pub fn register_rigid(source: &Mesh, target: &Mesh, cfg: &RigidConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    source.validate()?;
    if source.len() < 3 {
        return Err(Error::Underdetermined { got: source.len(), need: 3 });
    }
    let tree = prepare_target(target, cfg.use_point_to_plane && cfg.weights.w4 > 0.0)?;
    let original = &source.vertices;
    let mut transform = RigidTransform::IDENTITY;
    let mut x = original.clone();
    let mut proj = tree.project_all(&x);
    let initial_rmsd = rmsd(&proj);
    let mut reports = Vec::new();
    let mut converged = false;

    for iter in 0..cfg.max_iters {
        let step = solve_rigid_step(&x, &proj, cfg)?;
        transform = RigidTransform::compose(&step.motion.to_rigid(), &transform);
        if !transform.is_valid() {
            transform = transform.orthonormalized();
        }
        x = original.iter().map(|&p| transform.apply(p)).collect();
        proj = tree.project_all(&x);
        let step_rot_norm = step.motion.rotation.norm();
        let step_trans_norm = step.motion.translation.norm();
        reports.push(IterationReport {
            iter,
            energies: step.energies,
            null_energy: step.null_energy,
            stationarity: step.stationarity,
            step_rot_norm,
            step_trans_norm,
            rmsd_to_projection: rmsd(&proj),
        });
        if step_rot_norm + step_trans_norm < cfg.stop_tol {
            converged = true;
            break;
        }
    }

    Ok(RegistrationResult {
        transform,
        final_points: x,
        reports,
        converged,
        initial_rmsd,
    })
}
