//! Surrogate energy terms and their analytic gradients.
//!
//! The projections `Π(z_i^t)` are frozen inside one iteration, so every
//! term is quadratic in the unknowns `(r, t, r_1..r_N, z_1..z_N)`:
//!
//! * fit:   `w1 Σ ‖Π_i − z_i‖²`
//! * rigid: `w2 Σ ‖x_i + r × x_i + t − z_i‖²`
//! * arap:  `w3 Σ_i Σ_{k∈N(i)} ‖d_ik + r_i × d_ik − (z_k − z_i)‖²`, `d_ik = x_k − x_i`
//! * plane: `w4 Σ (n_iᵀ (Π_i − z_i))²`
//! * reg:   `λ (‖r‖² + Σ ‖r_i‖²)`, plus `λ ‖t‖²` when `w2 = 0`
//!
//! The gradient is written out term by term here and is deliberately not
//! shared with the system assembly, so each can be checked against the
//! other.

use alloc::vec;
use alloc::vec::Vec;

use crate::arap::AdjacencyGraph;
use crate::geom::{Point3, SmallMotion, Vec3};
use crate::spatial::Projection;
use crate::{Error, Result};

/// Term weights and the Tikhonov factor on the rotation unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub tikhonov: f64,
}

pub const DEFAULT_TIKHONOV: f64 = 1e-6;

impl Weights {
    /// `w1 = w2 = 1`, no ARAP or plane term.
    pub fn rigid() -> Self {
        Weights {
            w1: 1.0,
            w2: 1.0,
            w3: 0.0,
            w4: 0.0,
            tikhonov: DEFAULT_TIKHONOV,
        }
    }

    /// `w1 = w2 = w3 = 1`, no plane term.
    pub fn arap() -> Self {
        Weights {
            w3: 1.0,
            ..Weights::rigid()
        }
    }

    /// Regularization on the global translation. Only active when the
    /// global motion term is switched off, where `t` is otherwise free.
    pub fn translation_tikhonov(&self) -> f64 {
        if self.w2 == 0.0 {
            self.tikhonov
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3, self.w4, self.tikhonov];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "weights must be finite and nonnegative: {self:?}"
            )));
        }
        if self.w1 == 0.0 && self.w4 == 0.0 {
            return Err(Error::InvalidConfig("w1 or w4 must be positive".into()));
        }
        Ok(())
    }
}

/// One iteration's unknowns together with the fixed data.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationState {
    /// Current iterate `x_i^t`.
    pub x: Vec<Point3>,
    /// Candidate positions `z_i^{t+1}`.
    pub z: Vec<Point3>,
    pub motion: SmallMotion,
    /// Per-vertex linearized rotations, present in ARAP mode.
    pub local_rotations: Option<Vec<Vec3>>,
    /// `Π(z_i^t)` and target normals.
    pub projections: Vec<Projection>,
}

impl RegistrationState {
    /// The feasible "no motion" point: `z = x`, all rotations and the
    /// translation zero.
    pub fn null_step(x: &[Point3], projections: &[Projection], arap: bool) -> Self {
        RegistrationState {
            x: x.to_vec(),
            z: x.to_vec(),
            motion: SmallMotion::default(),
            local_rotations: arap.then(|| vec![Vec3::ZERO; x.len()]),
            projections: projections.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_arap(&self) -> bool {
        self.local_rotations.is_some()
    }

    /// `6 + 3N` (rigid) or `6 + 6N` (ARAP).
    pub fn unknowns(&self) -> usize {
        let per_point = if self.is_arap() { 6 } else { 3 };
        6 + per_point * self.len()
    }

    /// Block index of `z_i` in the unknown vector.
    pub fn z_block(&self, i: usize) -> usize {
        if self.is_arap() {
            2 + self.len() + i
        } else {
            2 + i
        }
    }

    /// Flattens the unknowns as `(r, t, r_1..r_N, z_1..z_N)`.
    pub fn unknown_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.unknowns());
        v.extend(self.motion.rotation.to_array());
        v.extend(self.motion.translation.to_array());
        if let Some(rs) = &self.local_rotations {
            v.extend(rs.iter().flat_map(|r| r.to_array()));
        }
        v.extend(self.z.iter().flat_map(|z| z.to_array()));
        v
    }

    /// Copy of the state with the unknowns replaced by `v`.
    pub fn with_unknowns(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.unknowns() {
            return Err(Error::LengthMismatch {
                what: "unknown vector",
                got: v.len(),
                expected: self.unknowns(),
            });
        }
        let block = |b: usize| Vec3::new(v[3 * b], v[3 * b + 1], v[3 * b + 2]);
        let n = self.len();
        Ok(RegistrationState {
            x: self.x.clone(),
            z: (0..n).map(|i| block(self.z_block(i))).collect(),
            motion: SmallMotion::new(block(0), block(1)),
            local_rotations: self
                .local_rotations
                .as_ref()
                .map(|_| (0..n).map(|i| block(2 + i)).collect()),
            projections: self.projections.clone(),
        })
    }
}

/// Per-term surrogate energies. `e_total` includes the Tikhonov term
/// `e_reg`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub e_fit: f64,
    pub e_rigid: f64,
    pub e_arap: f64,
    pub e_plane: f64,
    pub e_reg: f64,
    pub e_total: f64,
}

fn check(state: &RegistrationState, graph: Option<&AdjacencyGraph>, w: &Weights) -> Result<()> {
    let n = state.len();
    if n == 0 {
        return Err(Error::Underdetermined { got: 0, need: 1 });
    }
    let lens = [
        ("z", state.z.len()),
        ("projections", state.projections.len()),
        ("local rotations", state.local_rotations.as_ref().map_or(n, Vec::len)),
        ("graph", graph.map_or(n, AdjacencyGraph::len)),
    ];
    for (what, got) in lens {
        if got != n {
            return Err(Error::LengthMismatch { what, got, expected: n });
        }
    }
    if w.w3 > 0.0 && (graph.is_none() || !state.is_arap()) {
        return Err(Error::MissingGraph);
    }
    if w.w4 > 0.0 && state.projections.iter().any(|p| p.normal.is_none()) {
        return Err(Error::MissingNormals);
    }
    Ok(())
}

pub fn eval_energy(state: &RegistrationState, graph: Option<&AdjacencyGraph>, w: &Weights) -> Result<EnergyBreakdown> {
    check(state, graph, w)?;
    let SmallMotion { rotation: r, translation: t } = state.motion;
    let mut e = EnergyBreakdown::default();
    for (i, (&x, &z)) in state.x.iter().zip(&state.z).enumerate() {
        let proj = &state.projections[i];
        e.e_fit += (proj.point - z).norm_squared();
        e.e_rigid += (x + r.cross(x) + t - z).norm_squared();
        if w.w4 > 0.0 {
            let n = proj.normal.ok_or(Error::MissingNormals)?;
            let d = n.dot(proj.point - z);
            e.e_plane += d * d;
        }
    }
    if let (Some(graph), Some(locals)) = (graph, &state.local_rotations) {
        if w.w3 > 0.0 {
            for i in 0..state.len() {
                for &k in graph.neighbors(i) {
                    let d = state.x[k] - state.x[i];
                    e.e_arap += (d + locals[i].cross(d) - (state.z[k] - state.z[i])).norm_squared();
                }
            }
        }
    }
    let mut reg = r.norm_squared();
    if let Some(locals) = &state.local_rotations {
        reg += locals.iter().map(|v| v.norm_squared()).sum::<f64>();
    }
    e.e_fit *= w.w1;
    e.e_rigid *= w.w2;
    e.e_arap *= w.w3;
    e.e_plane *= w.w4;
    e.e_reg = w.tikhonov * reg + w.translation_tikhonov() * t.norm_squared();
    e.e_total = e.e_fit + e.e_rigid + e.e_arap + e.e_plane + e.e_reg;
    Ok(e)
}

/// Gradient of `e_total` over `(r, t, r_1..r_N, z_1..z_N)`, projections
/// held constant.
pub fn eval_gradient(state: &RegistrationState, graph: Option<&AdjacencyGraph>, w: &Weights) -> Result<Vec<f64>> {
    check(state, graph, w)?;
    let n = state.len();
    let SmallMotion { rotation: r, translation: t } = state.motion;
    let mut g_r = r * (2.0 * w.tikhonov);
    let mut g_t = t * (2.0 * w.translation_tikhonov());
    let mut g_local: Vec<Vec3> = match &state.local_rotations {
        Some(locals) => locals.iter().map(|&v| v * (2.0 * w.tikhonov)).collect(),
        None => Vec::new(),
    };
    let mut g_z = vec![Vec3::ZERO; n];

    for i in 0..n {
        let (x, z, proj) = (state.x[i], state.z[i], &state.projections[i]);
        // rigid residual e = x + r×x + t − z:  ∂/∂r = 2 x × e, ∂/∂t = 2e, ∂/∂z = −2e
        let e = x + r.cross(x) + t - z;
        g_r += x.cross(e) * (2.0 * w.w2);
        g_t += e * (2.0 * w.w2);
        g_z[i] += (z - proj.point) * (2.0 * w.w1) - e * (2.0 * w.w2);
        if w.w4 > 0.0 {
            let nrm = proj.normal.ok_or(Error::MissingNormals)?;
            g_z[i] += nrm * (2.0 * w.w4 * nrm.dot(z - proj.point));
        }
    }

    if let (Some(graph), Some(locals)) = (graph, &state.local_rotations) {
        if w.w3 > 0.0 {
            for i in 0..n {
                for &k in graph.neighbors(i) {
                    let d = state.x[k] - state.x[i];
                    let e = d + locals[i].cross(d) - (state.z[k] - state.z[i]);
                    g_local[i] += d.cross(e) * (2.0 * w.w3);
                    g_z[i] += e * (2.0 * w.w3);
                    g_z[k] -= e * (2.0 * w.w3);
                }
            }
        }
    }

    let mut out = Vec::with_capacity(state.unknowns());
    out.extend(g_r.to_array());
    out.extend(g_t.to_array());
    out.extend(g_local.iter().flat_map(|v| v.to_array()));
    out.extend(g_z.iter().flat_map(|v| v.to_array()));
    Ok(out)
}
