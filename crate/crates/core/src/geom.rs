//! Points, 3×3 matrices, rigid transforms and the small-rotation
//! linearization.

use core::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

/// A 3-vector of `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Positions share the vector representation.
pub type Point3 = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.norm_squared())
    }

    /// Unit vector in the same direction, or `None` for a zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Vec3) -> f64 {
        (self - o).norm_squared()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn component_min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn component_max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Matrix3 {
    pub rows: [[f64; 3]; 3],
}

impl Matrix3 {
    pub const ZERO: Matrix3 = Matrix3 { rows: [[0.0; 3]; 3] };
    pub const IDENTITY: Matrix3 = Matrix3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const fn new(rows: [[f64; 3]; 3]) -> Self {
        Matrix3 { rows }
    }

    pub fn diagonal(d: f64) -> Self {
        Matrix3::IDENTITY * d
    }

    /// `a bᵀ`
    pub fn outer(a: Vec3, b: Vec3) -> Self {
        let (a, b) = (a.to_array(), b.to_array());
        let mut rows = [[0.0; 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i] * b[j];
            }
        }
        Matrix3 { rows }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn transpose(&self) -> Matrix3 {
        let r = &self.rows;
        Matrix3::new([
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.rows[0][0] + self.rows[1][1] + self.rows[2][2]
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.rows.iter().flatten().map(|v| v * v).sum::<f64>())
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    pub fn inverse(&self) -> Option<Matrix3> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let r = &self.rows;
        let cof = |a: usize, b: usize, c: usize, d: usize| r[a][b] * r[c][d] - r[a][d] * r[c][b];
        let adj = Matrix3::new([
            [cof(1, 1, 2, 2), -cof(0, 1, 2, 2), cof(0, 1, 1, 2)],
            [-cof(1, 0, 2, 2), cof(0, 0, 2, 2), -cof(0, 0, 1, 2)],
            [cof(1, 0, 2, 1), -cof(0, 0, 2, 1), cof(0, 0, 1, 1)],
        ]);
        Some(adj * (1.0 / det))
    }
}

impl Add for Matrix3 {
    type Output = Matrix3;
    fn add(self, o: Matrix3) -> Matrix3 {
        let mut out = self;
        for (a, b) in out.rows.iter_mut().flatten().zip(o.rows.iter().flatten()) {
            *a += b;
        }
        out
    }
}

impl Sub for Matrix3 {
    type Output = Matrix3;
    fn sub(self, o: Matrix3) -> Matrix3 {
        self + o * -1.0
    }
}

impl AddAssign for Matrix3 {
    fn add_assign(&mut self, o: Matrix3) {
        *self = *self + o;
    }
}

impl Neg for Matrix3 {
    type Output = Matrix3;
    fn neg(self) -> Matrix3 {
        self * -1.0
    }
}

impl Mul<f64> for Matrix3 {
    type Output = Matrix3;
    fn mul(self, s: f64) -> Matrix3 {
        let mut out = self;
        out.rows.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }
}

impl Mul<Vec3> for Matrix3 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }
}

impl Mul for Matrix3 {
    type Output = Matrix3;
    fn mul(self, o: Matrix3) -> Matrix3 {
        let mut rows = [[0.0; 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        Matrix3 { rows }
    }
}

/// Cross-product matrix: `skew(v) * w == v.cross(w)`.
pub fn skew(v: Vec3) -> Matrix3 {
    Matrix3::new([[0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0]])
}

/// Exact rotation for a linearized rotation vector: `exp(skew(r))`
/// (Rodrigues). Small angles fall back to the Taylor coefficients.
pub fn rotation_from_small(r: Vec3) -> Matrix3 {
    let theta2 = r.norm_squared();
    let (a, b) = if theta2 < 1e-12 {
        // sin(θ)/θ and (1 - cos θ)/θ² to O(θ⁴)
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = libm::sqrt(theta2);
        (libm::sin(theta) / theta, (1.0 - libm::cos(theta)) / theta2)
    };
    let k = skew(r);
    Matrix3::IDENTITY + k * a + (k * k) * b
}

/// Rotation angle of a rotation matrix, in `[0, π]`.
pub fn rotation_angle(rot: &Matrix3) -> f64 {
    let c = ((rot.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    libm::acos(c)
}

/// The per-iteration linearized motion: rotation vector and translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmallMotion {
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl SmallMotion {
    pub fn new(rotation: Vec3, translation: Vec3) -> Self {
        SmallMotion {
            rotation,
            translation,
        }
    }

    /// `x + r × x + t`, the linearized motion applied to a point.
    pub fn apply_linearized(&self, p: Point3) -> Point3 {
        p + self.rotation.cross(p) + self.translation
    }

    /// The motion as a proper rigid transform.
    pub fn to_rigid(&self) -> RigidTransform {
        RigidTransform {
            rotation: rotation_from_small(self.rotation),
            translation: self.translation,
        }
    }
}

/// `p ↦ R p + t` with `R ∈ SO(3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Orthogonality tolerance on `max |RᵀR − I|` and `|det R − 1|`.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Matrix3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Matrix3, translation: Vec3) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        RigidTransform::new(Matrix3::IDENTITY, translation)
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `outer ∘ inner`: applies `inner` first.
    pub fn compose(outer: &RigidTransform, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: outer.rotation * inner.rotation,
            translation: outer.rotation * inner.translation + outer.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `max |RᵀR − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::IDENTITY).max_abs()
    }

    pub fn is_valid(&self) -> bool {
        self.rotation.is_finite()
            && self.translation.is_finite()
            && self.orthogonality_error() <= ORTHOGONALITY_TOL
            && (self.rotation.determinant() - 1.0).abs() <= ORTHOGONALITY_TOL
    }

    /// Projects the rotation back onto SO(3) with a few Newton steps of the
    /// polar decomposition, `R ← (R + R⁻ᵀ) / 2`.
    pub fn orthonormalized(&self) -> RigidTransform {
        let mut r = self.rotation;
        for _ in 0..8 {
            let Some(inv) = r.inverse() else { break };
            let next = (r + inv.transpose()) * 0.5;
            let delta = (next - r).max_abs();
            r = next;
            if delta < 1e-16 {
                break;
            }
        }
        RigidTransform::new(r, self.translation)
    }
}
