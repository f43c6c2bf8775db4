use alloc::format;
use alloc::vec::Vec;

use crate::geom::{Point3, RigidTransform, Vec3};
use crate::{Error, Result};

/// Triangle mesh. A point cloud is a mesh without faces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
    /// Per-vertex unit normals, when known.
    pub normals: Option<Vec<Vec3>>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Self {
        Mesh {
            vertices,
            faces,
            normals: None,
        }
    }

    pub fn from_points(vertices: Vec<Point3>) -> Self {
        Mesh::new(vertices, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Checks face indices, degenerate faces, finite coordinates and the
    /// normal count.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(i) = self.vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references a vertex outside 0..{n}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex")));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::LengthMismatch {
                    what: "normals",
                    got: normals.len(),
                    expected: n,
                });
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds, `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<(Point3, Point3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), &v| (lo.component_min(v), hi.component_max(v))),
        )
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounding_box().map_or(0.0, |(lo, hi)| (hi - lo).norm())
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted and deduplicated.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Same connectivity, vertices (and normals) moved by `t`.
    pub fn transformed(&self, t: &RigidTransform) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|&v| t.apply(v)).collect(),
            faces: self.faces.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|&n| t.rotation * n).collect()),
        }
    }

    /// Same connectivity with new positions; normals are dropped since they
    /// no longer match.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Mesh {
        Mesh::new(vertices, self.faces.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn validate_rejects_bad_faces() {
        let v = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert!(Mesh::new(v.clone(), vec![[0, 1, 2]]).validate().is_ok());
        assert!(Mesh::new(v.clone(), vec![[0, 1, 3]]).validate().is_err());
        assert!(Mesh::new(v, vec![[0, 1, 1]]).validate().is_err());
    }

    #[test]
    fn edges_are_deduplicated() {
        let v = vec![Vec3::ZERO; 4];
        let m = Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.edges(), vec![(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)]);
    }
}
