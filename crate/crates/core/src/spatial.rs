//! Closest-point queries against the target and normal estimation.
//!
//! The projection is closest-vertex: the target is treated as the sampled
//! point set, never as a continuous surface.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{Matrix3, Point3, Vec3};
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Balanced k-d tree over an immutable point array.
///
/// Splits on the axis of largest extent at the median; leaves hold at most
/// eight points. Exact ties in distance resolve to the lowest point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    normals: Option<Vec<Vec3>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Result of projecting a query onto the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: Point3,
    pub index: usize,
    pub normal: Option<Vec3>,
    pub distance: f64,
}

/// Nearest-first ordering with the lowest index winning exact ties.
fn better(d2: f64, idx: usize, best_d2: f64, best_idx: usize) -> bool {
    d2 < best_d2 || (d2 == best_d2 && idx < best_idx)
}

impl KdTree {
    pub fn build(points: Vec<Point3>) -> Result<KdTree> {
        if points.is_empty() {
            return Err(Error::EmptyTarget);
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(&points, &mut order, 0, &mut nodes);
        Ok(KdTree {
            points,
            normals: None,
            order,
            nodes,
        })
    }

    /// Tree whose projections carry the given per-point normals.
    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vec3>) -> Result<KdTree> {
        if normals.len() != points.len() {
            return Err(Error::LengthMismatch {
                what: "normals",
                got: normals.len(),
                expected: points.len(),
            });
        }
        let mut tree = KdTree::build(points)?;
        tree.normals = Some(normals);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: Point3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(0, q, &mut best);
        best
    }

    fn nearest_in(&self, node: usize, q: Point3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = self.points[i].distance_squared(q);
                    if better(d2, i, best.1, best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                if diff * diff <= best.1 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points as `(index, squared distance)`, nearest first.
    pub fn k_nearest(&self, q: Point3, k: usize) -> Vec<(usize, f64)> {
        let mut found = Vec::with_capacity(k + 1);
        if k > 0 {
            self.k_nearest_in(0, q, k, &mut found);
        }
        found
    }

    fn k_nearest_in(&self, node: usize, q: Point3, k: usize, found: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = self.points[i].distance_squared(q);
                    if found.len() == k {
                        let (wi, wd) = found[k - 1];
                        if !better(d2, i, wd, wi) {
                            continue;
                        }
                        found.pop();
                    }
                    let pos = found.partition_point(|&(j, dj)| better(dj, j, d2, i));
                    found.insert(pos, (i, d2));
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.k_nearest_in(near, q, k, found);
                if found.len() < k || diff * diff <= found[k - 1].1 {
                    self.k_nearest_in(far, q, k, found);
                }
            }
        }
    }

    /// Closest-vertex projection of `q` onto the target.
    pub fn project(&self, q: Point3) -> Projection {
        let (index, d2) = self.nearest(q);
        Projection {
            point: self.points[index],
            index,
            normal: self.normals.as_ref().map(|n| n[index]),
            distance: libm::sqrt(d2),
        }
    }

    pub fn project_all(&self, queries: &[Point3]) -> Vec<Projection> {
        queries.iter().map(|&q| self.project(q)).collect()
    }
}

fn build_node(points: &[Point3], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let (lo, hi) = order.iter().fold(
        (Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), &i| (lo.component_min(points[i]), hi.component_max(points[i])),
    );
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_part, right_part) = order.split_at_mut(mid);
    let left = build_node(points, left_part, offset, nodes);
    let right = build_node(points, right_part, offset + mid, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi sweeps.
/// Eigenvalues ascend; eigenvectors are unit length.
pub fn symmetric_eigen(m: &Matrix3) -> ([f64; 3], [Vec3; 3]) {
    let mut a = m.rows;
    let mut v = Matrix3::IDENTITY.rows;
    for _ in 0..50 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let scale = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2] + off;
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / libm::sqrt(t * t + 1.0);
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = idx.map(|i| a[i][i]);
    let vectors = idx.map(|i| Vec3::new(v[0][i], v[1][i], v[2][i]));
    (values, vectors)
}

/// Per-vertex unit normals.
///
/// With faces, each normal is the normalized sum of the unit normals of the
/// incident triangles. Without faces, it is the smallest principal axis of
/// the `k` nearest neighbors (the point included), oriented by
/// breadth-first propagation over the neighbor graph from the highest point,
/// whose normal is made to point toward +z.
pub fn estimate_normals(points: &[Point3], k: usize, faces: Option<&[[usize; 3]]>) -> Result<Vec<Vec3>> {
    match faces {
        Some(faces) if !faces.is_empty() => face_normals(points, faces),
        _ => pca_normals(points, k),
    }
}

fn face_normals(points: &[Point3], faces: &[[usize; 3]]) -> Result<Vec<Vec3>> {
    let mut acc = vec![Vec3::ZERO; points.len()];
    for f in faces {
        if f.iter().any(|&i| i >= points.len()) {
            return Err(Error::InvalidMesh(alloc::format!("face {f:?} out of range")));
        }
        let n = (points[f[1]] - points[f[0]]).cross(points[f[2]] - points[f[0]]);
        if let Some(unit) = n.normalized() {
            for &i in f {
                acc[i] += unit;
            }
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(index, n)| n.normalized().ok_or(Error::DegenerateNormal { index }))
        .collect()
}

fn pca_normals(points: &[Point3], k: usize) -> Result<Vec<Vec3>> {
    if k < 3 {
        return Err(Error::InvalidConfig(alloc::format!(
            "normal estimation needs k >= 3, got {k}"
        )));
    }
    let tree = KdTree::build(points.to_vec())?;
    let mut normals = Vec::with_capacity(points.len());
    let mut neighbors = Vec::with_capacity(points.len());
    for (index, &p) in points.iter().enumerate() {
        let knn = tree.k_nearest(p, k);
        let inv = 1.0 / knn.len() as f64;
        let mean = knn.iter().fold(Vec3::ZERO, |s, &(j, _)| s + points[j]) * inv;
        let cov = knn.iter().fold(Matrix3::ZERO, |c, &(j, _)| {
            let d = points[j] - mean;
            c + Matrix3::outer(d, d)
        }) * inv;
        let (values, vectors) = symmetric_eigen(&cov);
        if !(values[2] > 0.0) || values[1] <= 1e-12 * values[2] {
            return Err(Error::DegenerateNormal { index });
        }
        normals.push(vectors[0]);
        neighbors.push(knn.into_iter().map(|(j, _)| j).collect::<Vec<_>>());
    }

    let mut visited = vec![false; points.len()];
    let mut queue = VecDeque::new();
    loop {
        // highest unvisited point seeds the next component
        let seed = (0..points.len())
            .filter(|&i| !visited[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if points[b].z >= points[i].z => Some(b),
                _ => Some(i),
            });
        let Some(seed) = seed else { break };
        if normals[seed].z < 0.0 {
            normals[seed] = -normals[seed];
        }
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            for &j in &neighbors[i] {
                if !visited[j] {
                    if normals[j].dot(normals[i]) < 0.0 {
                        normals[j] = -normals[j];
                    }
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(normals)
}
