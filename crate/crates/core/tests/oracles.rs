use proptest::prelude::*;
use surfreg_core::arap::{assemble_arap, build_laplacian, register_arap, solve_arap_step, AdjacencyGraph, ArapConfig};
use surfreg_core::energy::{eval_energy, eval_gradient, RegistrationState, Weights};
use surfreg_core::geom::{rotation_from_small, RigidTransform, SmallMotion, Vec3};
use surfreg_core::rigid::{assemble_rigid, register_rigid, solve_rigid_step, RigidConfig};
use surfreg_core::spatial::{KdTree, Projection};
use surfreg_core::synth::{self, SynthRng};
use surfreg_core::system::{solve, BlockSystem};
use surfreg_core::Mesh;

// Keeps energies near unit size so central-difference rounding (about
// eps·E/h) stays under the 1e-9 absolute floor.
const SCALE: f64 = 0.3;

const LEVELS: [f64; 3] = [0.5, 1.0, 2.0];

fn pick(rng: &mut SynthRng) -> f64 {
    LEVELS[(rng.uniform() * 3.0) as usize % 3]
}

fn vec_in(rng: &mut SynthRng, r: f64) -> Vec3 {
    Vec3::new(rng.uniform_in(-r, r), rng.uniform_in(-r, r), rng.uniform_in(-r, r))
}

fn unit(rng: &mut SynthRng) -> Vec3 {
    loop {
        if let Some(n) = vec_in(rng, 1.0).normalized() {
            return n;
        }
    }
}

struct Instance {
    state: RegistrationState,
    graph: Option<AdjacencyGraph>,
    weights: Weights,
}

fn random_graph(rng: &mut SynthRng, n: usize) -> AdjacencyGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for k in i + 1..n {
            if rng.uniform() < 0.3 {
                edges.push((i, k));
            }
        }
    }
    AdjacencyGraph::from_edges(n, &edges).unwrap()
}

/// Random state with every unknown away from the null step.
fn instance(seed: u64, n: usize, arap: bool) -> Instance {
    let mut rng = SynthRng::new(seed);
    let x: Vec<Vec3> = (0..n).map(|_| vec_in(&mut rng, SCALE)).collect();
    let w4 = if rng.uniform() < 0.5 { 0.0 } else { 1.0 };
    let projections: Vec<Projection> = (0..n)
        .map(|i| Projection {
            point: vec_in(&mut rng, SCALE),
            index: i,
            normal: Some(unit(&mut rng)),
            distance: 0.0,
        })
        .collect();
    let weights = Weights {
        w1: pick(&mut rng),
        w2: pick(&mut rng),
        w3: if arap { pick(&mut rng) } else { 0.0 },
        w4,
        tikhonov: pick(&mut rng),
    };
    let mut state = RegistrationState::null_step(&x, &projections, arap);
    state.z = (0..n).map(|_| vec_in(&mut rng, SCALE)).collect();
    state.motion = SmallMotion::new(vec_in(&mut rng, 0.3), vec_in(&mut rng, 0.5 * SCALE));
    if arap {
        state.local_rotations = Some((0..n).map(|_| vec_in(&mut rng, 0.3)).collect());
    }
    let graph = arap.then(|| random_graph(&mut rng, n));
    Instance { state, graph, weights }
}

fn assemble(inst: &Instance) -> BlockSystem {
    let s = &inst.state;
    let p2plane = inst.weights.w4 > 0.0;
    match &inst.graph {
        Some(g) => assemble_arap(&s.x, &s.projections, g, &inst.weights, p2plane).unwrap(),
        None => assemble_rigid(&s.x, &s.projections, &inst.weights, p2plane).unwrap(),
    }
}

fn finite_difference(inst: &Instance, h: f64) -> Vec<f64> {
    let v = inst.state.unknown_vector();
    let energy = |v: &[f64]| {
        let s = inst.state.with_unknowns(v).unwrap();
        eval_energy(&s, inst.graph.as_ref(), &inst.weights).unwrap().e_total
    };
    (0..v.len())
        .map(|j| {
            let mut p = v.clone();
            let mut m = v.clone();
            p[j] += h;
            m[j] -= h;
            (energy(&p) - energy(&m)) / (2.0 * h)
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..40 {
        let inst = instance(seed, 10, seed % 2 == 1);
        let g = eval_gradient(&inst.state, inst.graph.as_ref(), &inst.weights).unwrap();
        let fd = finite_difference(&inst, 1e-6);
        for (j, (a, b)) in g.iter().zip(&fd).enumerate() {
            let err = (a - b).abs();
            assert!(err <= 1e-9 || err <= 1e-6 * a.abs(), "seed {seed} entry {j}: {a} vs {b}");
        }
    }
}

#[test]
fn solved_systems_are_stationary_and_symmetric() {
    for seed in 0..40 {
        let inst = instance(100 + seed, 10, seed % 2 == 0);
        let sys = assemble(&inst);
        assert!(sys.asymmetry() < 1e-12);
        let sol = solve(&sys).unwrap().solution;
        let state = inst.state.with_unknowns(&sol).unwrap();
        let g = eval_gradient(&state, inst.graph.as_ref(), &inst.weights).unwrap();
        assert!(inf_norm(&g) < 1e-8, "seed {seed}: {}", inf_norm(&g));
    }
}

#[test]
fn sparse_solve_matches_dense_elimination() {
    for n in [3, 5, 10, 20] {
        for arap in [false, true] {
            let inst = instance(200 + n as u64, n, arap);
            let sys = assemble(&inst);
            let sparse = solve(&sys).unwrap().solution;
            let dense = dense_solve(sys.to_dense(), sys.rhs().to_vec());
            for (a, b) in sparse.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-9, "n {n} arap {arap}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn energy_terms_vanish_only_with_their_residuals() {
    let inst = instance(7, 10, true);
    let e = eval_energy(&inst.state, inst.graph.as_ref(), &inst.weights).unwrap();
    for t in [e.e_fit, e.e_rigid, e.e_arap, e.e_reg] {
        assert!(t > 0.0);
    }
    let mut s = inst.state.clone();
    s.z = s.projections.iter().map(|p| p.point).collect();
    let e = eval_energy(&s, inst.graph.as_ref(), &inst.weights).unwrap();
    assert_eq!(e.e_fit, 0.0);
    assert_eq!(e.e_plane, 0.0);
}

#[test]
fn arap_term_ignores_isolated_points() {
    let mut inst = instance(9, 10, true);
    inst.graph = Some(AdjacencyGraph::from_edges(10, &[(0, 1), (1, 2), (2, 3)]).unwrap());
    let before = eval_energy(&inst.state, inst.graph.as_ref(), &inst.weights).unwrap().e_arap;
    inst.state.z[7] = Vec3::new(40.0, -3.0, 2.0);
    let after = eval_energy(&inst.state, inst.graph.as_ref(), &inst.weights).unwrap().e_arap;
    assert_eq!(before, after);
}

#[test]
fn doubling_fit_weight_doubles_only_the_fit_term() {
    let inst = instance(11, 10, true);
    let e1 = eval_energy(&inst.state, inst.graph.as_ref(), &inst.weights).unwrap();
    let w = Weights { w1: 2.0 * inst.weights.w1, ..inst.weights };
    let e2 = eval_energy(&inst.state, inst.graph.as_ref(), &w).unwrap();
    assert_eq!(e2.e_fit, 2.0 * e1.e_fit);
    assert_eq!((e2.e_rigid, e2.e_arap, e2.e_plane, e2.e_reg), (e1.e_rigid, e1.e_arap, e1.e_plane, e1.e_reg));
}

#[test]
fn laplacian_lists_agree_with_matrix() {
    let mesh = synth::make_sphere(2);
    let g = build_laplacian(&mesh).unwrap();
    let mut rng = SynthRng::new(3);
    let v: Vec<f64> = (0..g.len()).map(|_| rng.gaussian()).collect();
    let lv = g.laplacian_apply(&v);
    let from_lists: f64 = v.iter().zip(&lv).map(|(a, b)| a * b).sum();
    let from_matrix: f64 = g.laplacian().iter().map(|&(i, k, l)| v[i] * l * v[k]).sum();
    assert!((from_lists - from_matrix).abs() < 1e-10 * from_matrix.abs().max(1.0));
    let edge_sum: f64 = (0..g.len())
        .flat_map(|i| g.neighbors(i).iter().map(move |&k| (i, k)))
        .map(|(i, k)| (v[i] - v[k]).powi(2))
        .sum::<f64>()
        / 2.0;
    assert!((edge_sum - from_matrix).abs() < 1e-10 * from_matrix.abs().max(1.0));
}

fn rotated(mesh: &Mesh, q: &RigidTransform) -> Mesh {
    Mesh::new(mesh.vertices.iter().map(|&v| q.apply(v)).collect(), mesh.faces.clone())
}

#[test]
fn rigid_registration_is_frame_equivariant() {
    let s = synth::sphere_rigid_scenario(1);
    let q = RigidTransform::new(rotation_from_small(Vec3::new(0.4, -1.1, 0.7)), Vec3::ZERO);
    let cfg = RigidConfig::default();
    let plain = register_rigid(&s.source, &s.target, &cfg).unwrap();
    let turned = register_rigid(&rotated(&s.source, &q), &rotated(&s.target, &q), &cfg).unwrap();
    for (a, b) in plain.final_points.iter().zip(&turned.final_points) {
        assert!((q.apply(*a) - *b).max_abs() < 1e-6);
    }
}

#[test]
fn arap_registration_is_frame_equivariant() {
    let s = synth::bend_scenario(0.08).unwrap();
    let q = RigidTransform::new(rotation_from_small(Vec3::new(-0.3, 0.9, 0.2)), Vec3::ZERO);
    let cfg = ArapConfig { max_iters: 10, ..ArapConfig::default() };
    let plain = register_arap(&s.source, &s.target, &cfg).unwrap();
    let turned = register_arap(&rotated(&s.source, &q), &rotated(&s.target, &q), &cfg).unwrap();
    for (a, b) in plain.final_points.iter().zip(&turned.final_points) {
        assert!((q.apply(*a) - *b).max_abs() < 1e-6);
    }
}

#[test]
fn stiff_arap_step_approaches_rigid_step() {
    let s = synth::sphere_rigid_scenario(4);
    let x = s.source.vertices.clone();
    let tree = KdTree::build(s.target.vertices.clone()).unwrap();
    let proj = tree.project_all(&x);
    let rigid = solve_rigid_step(&x, &proj, &RigidConfig::default()).unwrap();
    let graph = build_laplacian(&s.source).unwrap();
    let mut prev = f64::INFINITY;
    for w3 in [1e2, 1e4, 1e6] {
        let cfg = ArapConfig {
            weights: Weights { w3, ..Weights::arap() },
            ..ArapConfig::default()
        };
        let step = solve_arap_step(&x, &proj, &graph, &cfg).unwrap();
        let gap = step.z.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((*a - rigid.motion.apply_linearized(*b)).max_abs()));
        assert!(gap < prev);
        prev = gap;
    }
    assert!(prev < 1e-3, "{prev}");
}

#[test]
fn surrogate_descends_on_every_step() {
    let s = synth::bend_scenario(0.05).unwrap();
    let res = register_arap(&s.source, &s.target, &ArapConfig { max_iters: 15, ..ArapConfig::default() }).unwrap();
    for r in &res.reports {
        assert!(r.energies.e_total <= r.null_energy + 1e-10);
        assert!(r.stationarity < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_stationary_after_solve(seed in any::<u64>(), n in 3usize..12, arap in any::<bool>()) {
        let inst = instance(seed, n, arap);
        let sys = assemble(&inst);
        let sol = solve(&sys).unwrap().solution;
        let state = inst.state.with_unknowns(&sol).unwrap();
        let g = eval_gradient(&state, inst.graph.as_ref(), &inst.weights).unwrap();
        prop_assert!(inf_norm(&g) < 1e-8);
        let at_solution = eval_energy(&state, inst.graph.as_ref(), &inst.weights).unwrap().e_total;
        let null = RegistrationState::null_step(&inst.state.x, &inst.state.projections, arap);
        let at_null = eval_energy(&null, inst.graph.as_ref(), &inst.weights).unwrap().e_total;
        prop_assert!(at_solution <= at_null + 1e-10);
    }

    #[test]
    fn prop_energy_terms_nonnegative(seed in any::<u64>(), arap in any::<bool>()) {
        let inst = instance(seed, 6, arap);
        let e = eval_energy(&inst.state, inst.graph.as_ref(), &inst.weights).unwrap();
        for t in [e.e_fit, e.e_rigid, e.e_arap, e.e_plane, e.e_reg] {
            prop_assert!(t >= 0.0);
        }
    }

    #[test]
    fn prop_kd_tree_matches_scan(seed in any::<u64>(), n in 1usize..2000) {
        let mut rng = SynthRng::new(seed);
        // coarse lattice coordinates make exact ties common
        let points: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new((rng.uniform() * 8.0).floor(), (rng.uniform() * 8.0).floor(), rng.uniform()))
            .collect();
        let tree = KdTree::build(points.clone()).unwrap();
        for _ in 0..50 {
            let q = vec_in(&mut rng, 10.0);
            let (idx, d2) = tree.nearest(q);
            let mut best = (0, f64::INFINITY);
            for (i, p) in points.iter().enumerate() {
                let d = (*p - q).norm_squared();
                if d < best.1 {
                    best = (i, d);
                }
            }
            prop_assert_eq!(idx, best.0);
            prop_assert_eq!(d2.to_bits(), best.1.to_bits());
        }
    }
}

