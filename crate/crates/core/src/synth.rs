//! Deterministic synthetic geometry and registration scenarios.
//!
//! All randomness comes from [`SynthRng`]: xoshiro256++ seeded through
//! splitmix64. Uniform doubles take the top 53 bits of each 64-bit output;
//! Gaussian samples use Box–Muller on two consecutive uniforms and return
//! the cosine branch first, then the sine branch. Every generator documents
//! the order in which it draws.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::geom::{rotation_from_small, Point3, RigidTransform, Vec3};
use crate::mesh::Mesh;
use crate::{Error, Result};

pub struct SynthRng {
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        SynthRng {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal sample.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(s) = self.spare.take() {
            return s;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }
}

/// A source/target pair, with the rigid motion mapping source onto target
/// when the pair is rigidly related.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub source: Mesh,
    pub target: Mesh,
    pub ground_truth: Option<RigidTransform>,
}

/// Icosphere of radius 1 after `n_subdiv` rounds of 4-way subdivision:
/// `10·4ⁿ + 2` vertices.
pub fn make_sphere(n_subdiv: u32) -> Mesh {
    assert!(n_subdiv <= 6, "icosphere subdivision level {n_subdiv} > 6");
    let phi = (1.0 + libm::sqrt(5.0)) / 2.0;
    let mut vertices: Vec<Point3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| unit(Vec3::new(x, y, z)))
    .collect();
    let mut faces: Vec<[usize; 3]> = alloc::vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..n_subdiv {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(unit((vertices[a] + vertices[b]) * 0.5));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces)
}

fn unit(v: Vec3) -> Vec3 {
    v * (1.0 / v.norm())
}

/// Planar `nx × ny` grid in `z = 0` with its corner at the origin; vertex
/// `(i, j)` sits at `(i·spacing, j·spacing, 0)` with index `j·nx + i`.
/// Triangles are counter-clockwise seen from +z.
pub fn make_grid(nx: usize, ny: usize, spacing: f64) -> Mesh {
    assert!(nx >= 2 && ny >= 2, "grid needs at least 2×2 vertices");
    let vertices = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0)))
        .collect();
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v00 = j * nx + i;
            let (v10, v01, v11) = (v00 + 1, v00 + nx, v00 + nx + 1);
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
    let mut mesh = Mesh::new(vertices, faces);
    mesh.normals = Some(alloc::vec![Vec3::new(0.0, 0.0, 1.0); nx * ny]);
    mesh
}

/// Rigid motion with a uniformly random axis, angle uniform in
/// `[0, max_angle]` and translation components uniform in
/// `[-max_trans, max_trans]`.
///
/// Draw order: axis `z` (uniform in [-1, 1]), axis azimuth, angle, then the
/// x, y, z translation components.
pub fn random_rigid(seed: u64, max_angle: f64, max_trans: f64) -> RigidTransform {
    assert!(max_angle <= PI, "max_angle must not exceed pi");
    let mut rng = SynthRng::new(seed);
    let cz = rng.uniform_in(-1.0, 1.0);
    let azimuth = rng.uniform_in(0.0, 2.0 * PI);
    let angle = rng.uniform() * max_angle;
    let s = libm::sqrt((1.0 - cz * cz).max(0.0));
    let axis = Vec3::new(s * libm::cos(azimuth), s * libm::sin(azimuth), cz);
    let translation = Vec3::new(
        rng.uniform_in(-max_trans, max_trans),
        rng.uniform_in(-max_trans, max_trans),
        rng.uniform_in(-max_trans, max_trans),
    );
    RigidTransform::new(rotation_from_small(axis * angle), translation)
}

/// `sin(u) / u`, exact at 0.
fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        1.0 - u * u / 6.0
    } else {
        libm::sin(u) / u
    }
}

/// Isometric cylindrical bend about the y axis:
/// `x → sin(κx)/κ`, `z → z + (1 − cos κx)/κ`.
pub fn bend(mesh: &Mesh, curvature: f64) -> Result<Mesh> {
    let extent = mesh.vertices.iter().fold(0.0f64, |m, v| m.max(v.x.abs()));
    if curvature.abs() * extent >= PI {
        return Err(Error::FoldingBend(curvature.abs() * extent));
    }
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            let u = curvature * v.x;
            let half = sinc(0.5 * u);
            // (1 - cos u)/κ = κ x² · ½ sinc²(u/2)
            Vec3::new(v.x * sinc(u), v.y, v.z + curvature * v.x * v.x * 0.5 * half * half)
        })
        .collect();
    Ok(mesh.with_vertices(vertices))
}

/// Independent Gaussian noise on every coordinate, drawn vertex by vertex
/// in x, y, z order.
pub fn add_noise(mesh: &Mesh, sigma: f64, seed: u64) -> Mesh {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    if sigma == 0.0 {
        return mesh.clone();
    }
    let mut rng = SynthRng::new(seed);
    let vertices = mesh
        .vertices
        .iter()
        .map(|&v| v + Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * sigma)
        .collect();
    mesh.with_vertices(vertices)
}

/// Subdivision level of the sphere scenario (642 vertices).
pub const SPHERE_SUBDIV: u32 = 3;
/// Largest rotation angle in the sphere scenario.
pub const SPHERE_MAX_ANGLE_DEG: f64 = 20.0;
/// Largest translation in the sphere scenario, as a fraction of the
/// bounding-box diagonal.
pub const SPHERE_MAX_TRANS_FRACTION: f64 = 0.3;

/// Rigid scenario on the unit icosphere: the target is the source moved by
/// a random rigid transform whose translation norm stays below `0.3 ×` the
/// bounding-box diagonal.
pub fn sphere_rigid_scenario(seed: u64) -> Scenario {
    let source = make_sphere(SPHERE_SUBDIV);
    let diag = source.bbox_diagonal();
    let max_trans = SPHERE_MAX_TRANS_FRACTION * diag / libm::sqrt(3.0);
    let gt = random_rigid(seed, SPHERE_MAX_ANGLE_DEG.to_radians(), max_trans);
    let target = source.transformed(&gt);
    Scenario {
        name: String::from("sphere-rigid"),
        source,
        target,
        ground_truth: Some(gt),
    }
}

/// Grid size, spacing and curvature of the bend scenario.
pub const BEND_GRID: usize = 20;
pub const BEND_SPACING: f64 = 0.5;
pub const BEND_CURVATURE: f64 = 0.05;

/// Non-rigid scenario: a flat grid centered on the y axis and its
/// cylindrically bent copy. Vertices with `x = 0` are fixed by the bend.
pub fn bend_scenario(curvature: f64) -> Result<Scenario> {
    let mut source = make_grid(BEND_GRID, BEND_GRID, BEND_SPACING);
    let half = 0.5 * (BEND_GRID - 1) as f64 * BEND_SPACING;
    for v in &mut source.vertices {
        v.x -= half;
        v.y -= half;
    }
    let target = bend(&source, curvature)?;
    Ok(Scenario {
        name: String::from("bend"),
        source,
        target,
        ground_truth: None,
    })
}

/// Incline scenario parameters: target grid size and spacing, source patch
/// size.
pub const INCLINE_TARGET_GRID: usize = 40;
pub const INCLINE_SPACING: f64 = 0.25;
pub const INCLINE_SOURCE_GRID: usize = 12;

/// Flat target grid and a smaller patch of it displaced mostly
/// tangentially, with a small offset along the normal.
///
/// Draw order: in-plane direction angle, tangential magnitude factor,
/// normal offset factor, then a small tilt axis angle and tilt factor.
pub fn incline_scenario(seed: u64) -> Scenario {
    let target = make_grid(INCLINE_TARGET_GRID, INCLINE_TARGET_GRID, INCLINE_SPACING);
    let mut rng = SynthRng::new(seed);
    let direction = rng.uniform_in(0.0, 2.0 * PI);
    let tangential = INCLINE_SPACING * rng.uniform_in(1.5, 3.0);
    let normal = INCLINE_SPACING * rng.uniform_in(0.2, 0.4);
    let tilt_axis = rng.uniform_in(0.0, 2.0 * PI);
    let tilt = rng.uniform_in(2.0, 4.0).to_radians();

    // source = the centered sub-patch, pushed off its true place
    let offset = (INCLINE_TARGET_GRID - INCLINE_SOURCE_GRID) / 2;
    let patch = make_grid(INCLINE_SOURCE_GRID, INCLINE_SOURCE_GRID, INCLINE_SPACING);
    let shift = Vec3::new(offset as f64 * INCLINE_SPACING, offset as f64 * INCLINE_SPACING, 0.0);
    let on_target: Vec<Point3> = patch.vertices.iter().map(|&v| v + shift).collect();
    let center = on_target.iter().fold(Vec3::ZERO, |s, &v| s + v) * (1.0 / on_target.len() as f64);

    let rot = rotation_from_small(Vec3::new(libm::cos(tilt_axis), libm::sin(tilt_axis), 0.0) * tilt);
    let translation = Vec3::new(
        tangential * libm::cos(direction),
        tangential * libm::sin(direction),
        normal,
    );
    // rotate about the patch center, then translate
    let displacement = RigidTransform::new(rot, center - rot * center + translation);
    let source = Mesh::new(
        on_target.iter().map(|&v| displacement.apply(v)).collect(),
        patch.faces.clone(),
    );
    Scenario {
        name: String::from("incline"),
        source,
        target,
        ground_truth: Some(displacement.inverse()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::estimate_normals;

    #[test]
    fn icosphere_counts() {
        let s0 = make_sphere(0);
        assert_eq!((s0.vertices.len(), s0.faces.len()), (12, 20));
        assert_eq!(make_sphere(1).vertices.len(), 42);
        for n in 0..=4 {
            let s = make_sphere(n);
            assert_eq!(s.vertices.len(), 10 * 4usize.pow(n) + 2);
            assert_eq!(s.faces.len(), 20 * 4usize.pow(n));
            assert!(s.validate().is_ok());
            for v in &s.vertices {
                assert!((v.norm() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn icosphere_faces_point_outward() {
        let s = make_sphere(2);
        for f in &s.faces {
            let [a, b, c] = f.map(|i| s.vertices[i]);
            assert!((b - a).cross(c - a).dot(a + b + c) > 0.0);
        }
    }

    #[test]
    fn grid_counts_and_normals() {
        let g = make_grid(2, 2, 1.0);
        assert_eq!((g.vertices.len(), g.faces.len()), (4, 2));
        let g = make_grid(3, 3, 1.0);
        assert_eq!((g.vertices.len(), g.faces.len()), (9, 8));
        for n in estimate_normals(&g.vertices, 3, Some(&g.faces)).unwrap() {
            assert_eq!(n, Vec3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn random_rigid_identity_and_determinism() {
        let id = random_rigid(42, 0.0, 0.0);
        assert_eq!(id.rotation, crate::geom::Matrix3::IDENTITY);
        assert_eq!(id.translation, Vec3::ZERO);
        assert_eq!(random_rigid(7, 1.0, 2.0), random_rigid(7, 1.0, 2.0));
        assert_ne!(random_rigid(7, 1.0, 2.0), random_rigid(8, 1.0, 2.0));
    }

    #[test]
    fn random_rigid_is_always_valid() {
        for seed in 0..1000 {
            let t = random_rigid(seed, PI, 5.0);
            assert!(t.is_valid(), "seed {seed}");
            assert!(crate::geom::rotation_angle(&t.rotation) <= PI + 1e-12);
            assert!(t.translation.max_abs() <= 5.0);
        }
    }

    #[test]
    fn bend_small_curvature_is_identity() {
        let g = make_grid(4, 3, 0.7);
        let b = bend(&g, 1e-12).unwrap();
        for (p, q) in g.vertices.iter().zip(&b.vertices) {
            assert!((*p - *q).max_abs() <= 1e-9);
        }
        assert_eq!(bend(&g, 0.0).unwrap().vertices, g.vertices);
    }

    #[test]
    fn bend_fixes_origin_and_preserves_edges() {
        let g = make_grid(2, 2, 1.0);
        for k in [0.1, 0.5, 2.0] {
            let b = bend(&g, k).unwrap();
            assert_eq!(b.vertices[0], Vec3::ZERO);
        }
        let b = bend(&g, 0.1).unwrap();
        for (i, j) in g.edges() {
            let before = g.vertices[i].distance(g.vertices[j]);
            let after = b.vertices[i].distance(b.vertices[j]);
            assert!((after / before - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn bend_matches_closed_form() {
        let g = Mesh::from_points(alloc::vec![Vec3::new(2.0, 1.0, 0.5)]);
        let k = 0.3;
        let b = bend(&g, k).unwrap();
        let v = b.vertices[0];
        assert!((v.x - libm::sin(0.6) / k).abs() < 1e-14);
        assert!((v.z - (0.5 + (1.0 - libm::cos(0.6)) / k)).abs() < 1e-14);
    }

    #[test]
    fn bend_rejects_folding() {
        let g = make_grid(3, 3, 1.0);
        assert!(matches!(bend(&g, 2.0), Err(Error::FoldingBend(_))));
    }

    #[test]
    fn noise_is_deterministic_and_calibrated() {
        let g = make_grid(3, 3, 1.0);
        assert_eq!(add_noise(&g, 0.0, 1).vertices, g.vertices);
        assert_eq!(add_noise(&g, 0.1, 5), add_noise(&g, 0.1, 5));

        let cloud = Mesh::from_points(alloc::vec![Vec3::ZERO; 33_334]);
        let noisy = add_noise(&cloud, 0.25, 11);
        let samples: Vec<f64> = noisy.vertices.iter().flat_map(|v| v.to_array()).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        assert!((libm::sqrt(var) / 0.25 - 1.0).abs() < 0.02);
    }

    #[test]
    fn sphere_scenario_ground_truth_is_exact() {
        let s = sphere_rigid_scenario(3);
        let gt = s.ground_truth.unwrap();
        assert_eq!(s.source.vertices.len(), 642);
        for (p, q) in s.source.vertices.iter().zip(&s.target.vertices) {
            assert_eq!(gt.apply(*p), *q);
        }
        assert!(gt.translation.norm() <= 0.3 * s.source.bbox_diagonal());
    }

    #[test]
    fn incline_scenario_is_displaced_and_invertible() {
        for seed in 0..3 {
            let s = incline_scenario(seed);
            let gt = s.ground_truth.unwrap();
            assert!(gt.is_valid());
            let tree = crate::spatial::KdTree::build(s.target.vertices.clone()).unwrap();
            let rmsd: f64 = s.source.vertices.iter().map(|&v| tree.project(v).distance.powi(2)).sum();
            assert!(rmsd > 0.0);
            let back = RigidTransform::compose(&gt.inverse(), &gt);
            assert!(back.orthogonality_error() < 1e-12);
            for v in &s.source.vertices {
                let t = gt.apply(*v);
                assert!(tree.project(t).distance < 1e-9);
            }
        }
    }
}
