//! As-rigid-as-possible registration: one joint `6 + 6N` solve per
//! iteration over `(r, t, r_1..r_N, z_1..z_N)`.
//!
//! Each directed edge `(i, k)` contributes the residual
//! `d_ik + r_i × d_ik − (z_k − z_i)` with `d_ik = x_k − x_i`, measured on
//! the current iterate. Edge weights are uniform.

use alloc::vec;
use alloc::vec::Vec;

use crate::energy::{eval_energy, eval_gradient, RegistrationState, Weights};
use crate::geom::{skew, Matrix3, Point3, RigidTransform};
use crate::mesh::Mesh;
use crate::rigid::{add_point_terms, check_loop, inf_norm, prepare_target, rmsd, IterationReport, RegistrationResult, StepSolution};
use crate::spatial::Projection;
use crate::system::{solve, BlockSystem};
use crate::{Error, Result};

/// Symmetric neighbor lists without self loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Graph over `n` nodes from undirected edges; duplicates and self loops
    /// are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidMesh(alloc::format!(
                    "edge ({a}, {b}) outside 0..{n}"
                )));
            }
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(AdjacencyGraph { neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Nodes without neighbors; their ARAP term is empty.
    pub fn isolated(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.neighbors[i].is_empty()).collect()
    }

    /// Combinatorial Laplacian `L = D − Adj` as sorted `(row, col, value)`
    /// entries.
    pub fn laplacian(&self) -> Vec<(usize, usize, f64)> {
        let mut entries = Vec::with_capacity(self.len() + 2 * self.edge_count());
        for (i, list) in self.neighbors.iter().enumerate() {
            let (lower, upper): (Vec<usize>, Vec<usize>) = list.iter().partition(|&&k| k < i);
            entries.extend(lower.into_iter().map(|k| (i, k, -1.0)));
            entries.push((i, i, list.len() as f64));
            entries.extend(upper.into_iter().map(|k| (i, k, -1.0)));
        }
        entries
    }

    /// `L v` through the neighbor lists.
    pub fn laplacian_apply(&self, v: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(i, list)| list.iter().map(|&k| v[i] - v[k]).sum())
            .collect()
    }
}

/// Graph of the mesh's triangle edges.
pub fn build_laplacian(mesh: &Mesh) -> Result<AdjacencyGraph> {
    mesh.validate()?;
    let edges = mesh.edges();
    if edges.is_empty() {
        return Err(Error::InvalidMesh("mesh has no edges".into()));
    }
    AdjacencyGraph::from_edges(mesh.len(), &edges)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArapConfig {
    pub weights: Weights,
    pub max_iters: usize,
    /// Stop once the largest per-point displacement of a step falls below
    /// this.
    pub stop_tol: f64,
    pub use_point_to_plane: bool,
}

impl Default for ArapConfig {
    fn default() -> Self {
        ArapConfig {
            weights: Weights::arap(),
            max_iters: 100,
            stop_tol: 1e-6,
            use_point_to_plane: false,
        }
    }
}

impl ArapConfig {
    pub fn effective_weights(&self) -> Weights {
        Weights {
            w4: if self.use_point_to_plane { self.weights.w4 } else { 0.0 },
            ..self.weights
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.effective_weights();
        w.validate()?;
        if !(w.w3 > 0.0) {
            return Err(Error::InvalidConfig("ARAP registration needs w3 > 0".into()));
        }
        check_loop(self.max_iters, self.stop_tol)
    }
}

/// Assembles the `6 + 6N` system. Blocks: `0 = r`, `1 = t`, `2 + i = r_i`,
/// `2 + N + i = z_i`.
pub fn assemble_arap(
    x: &[Point3],
    proj: &[Projection],
    graph: &AdjacencyGraph,
    w: &Weights,
    p2plane: bool,
) -> Result<BlockSystem> {
    let n = x.len();
    if graph.len() != n {
        return Err(Error::LengthMismatch {
            what: "graph",
            got: graph.len(),
            expected: n,
        });
    }
    if proj.len() != n {
        return Err(Error::LengthMismatch {
            what: "projections",
            got: proj.len(),
            expected: n,
        });
    }
    if !(w.w3 > 0.0) {
        return Err(Error::InvalidConfig("ARAP registration needs w3 > 0".into()));
    }
    if p2plane && w.w4 > 0.0 && proj.iter().any(|p| p.normal.is_none()) {
        return Err(Error::MissingNormals);
    }
    let mut sys = BlockSystem::new(6 + 6 * n)?;
    let z_block = |i: usize| 2 + n + i;
    add_point_terms(&mut sys, x, proj, w, p2plane, z_block)?;
    for i in 0..n {
        // d + r_i × d − (z_k − z_i)  =  −[d]× r_i + z_i − z_k + d
        for &k in graph.neighbors(i) {
            let d = x[k] - x[i];
            sys.add_residual(
                w.w3,
                &[(2 + i, -skew(d)), (z_block(i), Matrix3::IDENTITY), (z_block(k), -Matrix3::IDENTITY)],
                -d,
            )?;
        }
        sys.add_diagonal(2 + i, w.tikhonov)?;
    }
    Ok(sys)
}

/// Assembles and solves one ARAP step against computed projections.
pub fn solve_arap_step(
    x: &[Point3],
    proj: &[Projection],
    graph: &AdjacencyGraph,
    cfg: &ArapConfig,
) -> Result<StepSolution> {
    let w = cfg.effective_weights();
    let sys = assemble_arap(x, proj, graph, &w, cfg.use_point_to_plane)?;
    let report = solve(&sys)?;
    let null = RegistrationState::null_step(x, proj, true);
    let state = null.with_unknowns(&report.solution)?;
    let energies = eval_energy(&state, Some(graph), &w)?;
    let null_energy = eval_energy(&null, Some(graph), &w)?.e_total;
    let stationarity = inf_norm(&eval_gradient(&state, Some(graph), &w)?);
    Ok(StepSolution {
        motion: state.motion,
        z: state.z,
        local_rotations: state.local_rotations,
        energies,
        null_energy,
        stationarity,
    })
}

/// Non-rigid registration: the next iterate is the solved `z`. The global
/// motion of each step is accumulated for reporting only.
pub fn register_arap(source: &Mesh, target: &Mesh, cfg: &ArapConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    if source.len() < 3 {
        return Err(Error::Underdetermined { got: source.len(), need: 3 });
    }
    let graph = build_laplacian(source)?;
    let tree = prepare_target(target, cfg.use_point_to_plane && cfg.weights.w4 > 0.0)?;
    let mut x = source.vertices.clone();
    let mut proj = tree.project_all(&x);
    let initial_rmsd = rmsd(&proj);
    let mut transform = RigidTransform::IDENTITY;
    let mut reports = Vec::new();
    let mut converged = false;

    for iter in 0..cfg.max_iters {
        let step = solve_arap_step(&x, &proj, &graph, cfg)?;
        transform = RigidTransform::compose(&step.motion.to_rigid(), &transform);
        if !transform.is_valid() {
            transform = transform.orthonormalized();
        }
        let displacement = x
            .iter()
            .zip(&step.z)
            .fold(0.0f64, |m, (a, b)| m.max(a.distance(*b)));
        x = step.z;
        proj = tree.project_all(&x);
        reports.push(IterationReport {
            iter,
            energies: step.energies,
            null_energy: step.null_energy,
            stationarity: step.stationarity,
            step_rot_norm: step.motion.rotation.norm(),
            step_trans_norm: step.motion.translation.norm(),
            rmsd_to_projection: rmsd(&proj),
        });
        if displacement < cfg.stop_tol {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::synth;

    fn dense_laplacian(g: &AdjacencyGraph) -> Vec<Vec<f64>> {
        let mut l = vec![vec![0.0; g.len()]; g.len()];
        for (i, k, v) in g.laplacian() {
            l[i][k] += v;
        }
        l
    }

    fn exact(points: &[Point3]) -> Vec<Projection> {
        points
            .iter()
            .enumerate()
            .map(|(index, &point)| Projection { point, index, normal: None, distance: 0.0 })
            .collect()
    }

    #[test]
    fn path_laplacian() {
        let g = AdjacencyGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(
            dense_laplacian(&g),
            vec![vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]
        );
    }

    #[test]
    fn triangle_laplacian() {
        let mesh = Mesh::new(vec![Vec3::ZERO; 3], vec![[0, 1, 2]]);
        let l = dense_laplacian(&build_laplacian(&mesh).unwrap());
        for (i, row) in l.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == k { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_graph_is_symmetric() {
        let mesh = synth::make_sphere(2);
        let g = build_laplacian(&mesh).unwrap();
        for row in dense_laplacian(&g) {
            assert_eq!(row.iter().sum::<f64>(), 0.0);
        }
        for i in 0..g.len() {
            assert!(!g.neighbors(i).contains(&i));
            for &k in g.neighbors(i) {
                assert!(g.neighbors(k).contains(&i));
            }
        }
    }

    #[test]
    fn isolated_vertices_are_listed() {
        let mesh = Mesh::new(vec![Vec3::ZERO; 5], vec![[0, 1, 2]]);
        let g = build_laplacian(&mesh).unwrap();
        assert_eq!(g.isolated(), vec![3, 4]);
        assert!(build_laplacian(&Mesh::from_points(vec![Vec3::ZERO; 3])).is_err());
    }

    #[test]
    fn two_node_system_layout() {
        let x = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.5, 0.0)];
        let g = AdjacencyGraph::from_edges(2, &[(0, 1)]).unwrap();
        let w = Weights { w1: 0.7, w2: 1.3, w3: 2.0, ..Weights::arap() };
        let sys = assemble_arap(&x, &exact(&x), &g, &w, false).unwrap();
        assert_eq!(sys.dim(), 18);
        let a = sys.to_dense();
        // z rows: (w1 + w2) I + 2 w3 (L ⊗ I)
        let lap = [[1.0, -1.0], [-1.0, 1.0]];
        for (bi, lrow) in lap.iter().enumerate() {
            for (bk, &l) in lrow.iter().enumerate() {
                for c in 0..3 {
                    for c2 in 0..3 {
                        let got = a[3 * (4 + bi) + c][3 * (4 + bk) + c2];
                        let diag = if bi == bk { w.w1 + w.w2 } else { 0.0 };
                        let want = if c == c2 { diag + 2.0 * w.w3 * l } else { 0.0 };
                        assert!((got - want).abs() < 1e-12, "block ({bi},{bk}) [{c}][{c2}]");
                    }
                }
            }
        }
        assert!(sys.asymmetry() < 1e-12);
    }

    #[test]
    fn isolated_vertex_rotation_stays_zero() {
        let mut mesh = synth::make_grid(3, 3, 1.0);
        mesh.vertices.push(Vec3::new(5.0, 5.0, 0.0));
        mesh.normals = None;
        let g = build_laplacian(&mesh).unwrap();
        let targets: Vec<Point3> = mesh.vertices.iter().map(|&v| v + Vec3::new(0.1, 0.2, 0.3)).collect();
        let step = solve_arap_step(&mesh.vertices, &exact(&targets), &g, &ArapConfig::default()).unwrap();
        let locals = step.local_rotations.unwrap();
        assert!(locals[9].max_abs() < 1e-15);
        assert!(step.stationarity < 1e-8);
    }

    #[test]
    fn identity_registration() {
        let mesh = synth::make_grid(6, 6, 0.5);
        let res = register_arap(&mesh, &mesh, &ArapConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations(), 1);
        for (a, b) in res.final_points.iter().zip(&mesh.vertices) {
            assert!((*a - *b).max_abs() < 1e-12);
        }
    }

    #[test]
    fn zero_global_weight_gives_zero_global_motion() {
        let mesh = synth::make_grid(5, 5, 0.5);
        let g = build_laplacian(&mesh).unwrap();
        let targets: Vec<Point3> = mesh.vertices.iter().map(|&v| v + Vec3::new(0.2, 0.0, 0.1)).collect();
        let cfg = ArapConfig {
            weights: Weights { w2: 0.0, ..Weights::arap() },
            ..ArapConfig::default()
        };
        let step = solve_arap_step(&mesh.vertices, &exact(&targets), &g, &cfg).unwrap();
        assert!(step.motion.rotation.max_abs() < 1e-15);
        assert!(step.motion.translation.max_abs() < 1e-15);
        assert!(step.stationarity < 1e-8);
    }
}
