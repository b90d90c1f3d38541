//! Core geometric types: meshes, point sets, node sets, and the unit-sphere
//! normalization applied to every shape before any field work.
//!
//! Vertex order is semantically meaningful throughout the crate (it carries
//! correspondence information), so no operation here ever permutes it.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::par::par_map_range;

/// Minimum separation between two nodes before they count as coincident.
pub const NODE_COINCIDENCE_TOL: f64 = 1e-9;

/// A triangle mesh with optional per-vertex segment labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub labels: Option<Vec<i32>>,
}

impl TriMesh {
    /// Build a mesh, validating face indices, degeneracy, and label length.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        labels: Option<Vec<i32>>,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::EmptyGeometry("mesh has no vertices".into()));
        }
        let nv = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i as usize >= nv {
                    return Err(Error::FaceIndexOutOfRange {
                        face: fi,
                        index: i as usize,
                        vertex_count: nv,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace {
                    face: fi,
                    indices: *f,
                });
            }
        }
        if let Some(l) = &labels {
            if l.len() != nv {
                return Err(Error::Labels(format!(
                    "expected {} labels, got {}",
                    nv,
                    l.len()
                )));
            }
        }
        Ok(Self {
            vertices,
            faces,
            labels,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Area of face `f` (half the cross-product norm).
    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let pa = self.vertices[a as usize];
        let pb = self.vertices[b as usize];
        let pc = self.vertices[c as usize];
        0.5 * (pb - pa).cross(&(pc - pa)).norm()
    }

    /// Unit normal of face `f`; zero vector for zero-area faces.
    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[f];
        let pa = self.vertices[a as usize];
        let pb = self.vertices[b as usize];
        let pc = self.vertices[c as usize];
        let n = (pb - pa).cross(&(pc - pa));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// Sum of all triangle areas.
    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Undirected edge adjacency with Euclidean edge lengths, for graph
    /// geodesics.
    pub fn edge_adjacency(&self) -> Vec<Vec<(u32, f64)>> {
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.vertices.len()];
        let mut push = |a: u32, b: u32| {
            if !adj[a as usize].iter().any(|&(v, _)| v == b) {
                let len = (self.vertices[a as usize] - self.vertices[b as usize]).norm();
                adj[a as usize].push((b, len));
            }
        };
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                push(a, b);
                push(b, a);
            }
        }
        adj
    }
}

/// An unordered point cloud with optional per-point labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<Point3<f64>>,
    pub labels: Option<Vec<i32>>,
}

impl PointSet {
    pub fn new(points: Vec<Point3<f64>>, labels: Option<Vec<i32>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGeometry("point set is empty".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidGeometry(format!(
                    "point {} has non-finite coordinates",
                    i
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::Labels(format!(
                    "expected {} labels, got {}",
                    points.len(),
                    l.len()
                )));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Either kind of loaded shape. Meshes keep connectivity; point clouds do not.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeData {
    Mesh(TriMesh),
    Points(PointSet),
}

impl ShapeData {
    pub fn points(&self) -> &[Point3<f64>] {
        match self {
            ShapeData::Mesh(m) => &m.vertices,
            ShapeData::Points(p) => &p.points,
        }
    }

    pub fn labels(&self) -> Option<&[i32]> {
        match self {
            ShapeData::Mesh(m) => m.labels.as_deref(),
            ShapeData::Points(p) => p.labels.as_deref(),
        }
    }

    pub fn as_mesh(&self) -> Option<&TriMesh> {
        match self {
            ShapeData::Mesh(m) => Some(m),
            ShapeData::Points(_) => None,
        }
    }
}

/// The fixed skeleton of the reduced representation: node positions with
/// compact support radii.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    pub positions: Vec<Point3<f64>>,
    pub radii: Vec<f64>,
    pub labels: Option<Vec<i32>>,
}

impl NodeSet {
    /// Validates the node-set invariants: at least 4 nodes, positive radii,
    /// no coincident pair.
    pub fn new(
        positions: Vec<Point3<f64>>,
        radii: Vec<f64>,
        labels: Option<Vec<i32>>,
    ) -> Result<Self> {
        if positions.len() < 4 {
            return Err(Error::InvalidGeometry(format!(
                "node set needs at least 4 nodes, got {}",
                positions.len()
            )));
        }
        if radii.len() != positions.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                got: radii.len(),
                context: "one radius per node",
            });
        }
        for (i, &r) in radii.iter().enumerate() {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidGeometry(format!(
                    "node {} has non-positive radius {}",
                    i, r
                )));
            }
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                if (positions[i] - positions[j]).norm() < NODE_COINCIDENCE_TOL {
                    return Err(Error::InvalidGeometry(format!(
                        "nodes {} and {} coincide",
                        i, j
                    )));
                }
            }
        }
        if let Some(l) = &labels {
            if l.len() != positions.len() {
                return Err(Error::Labels(format!(
                    "expected {} node labels, got {}",
                    positions.len(),
                    l.len()
                )));
            }
        }
        Ok(Self {
            positions,
            radii,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// The similarity transform that took an input shape to normalized
/// coordinates: `x' = (x - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRecord {
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl NormalizationRecord {
    pub fn identity() -> Self {
        Self {
            center: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p.coords - self.center) * self.scale)
    }

    pub fn invert(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords / self.scale + self.center)
    }
}

fn normalize_points(points: &[Point3<f64>]) -> Result<(Vec<Point3<f64>>, NormalizationRecord)> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / n;
    let max_dist = points
        .iter()
        .map(|p| (p.coords - centroid).norm())
        .fold(0.0_f64, f64::max);
    if max_dist <= 0.0 {
        return Err(Error::InvalidGeometry(
            "all points coincide; unit-sphere scale is undefined".into(),
        ));
    }
    let scale = 1.0 / max_dist;
    let record = NormalizationRecord {
        center: centroid,
        scale,
    };
    let out = points.iter().map(|p| record.apply(p)).collect();
    Ok((out, record))
}

/// Center a shape at its centroid and scale it so the farthest vertex sits on
/// the unit sphere. Faces and labels are carried over untouched.
pub fn normalize_unit_sphere(shape: &ShapeData) -> Result<(ShapeData, NormalizationRecord)> {
    match shape {
        ShapeData::Mesh(m) => {
            let (vertices, rec) = normalize_points(&m.vertices)?;
            Ok((
                ShapeData::Mesh(TriMesh {
                    vertices,
                    faces: m.faces.clone(),
                    labels: m.labels.clone(),
                }),
                rec,
            ))
        }
        ShapeData::Points(p) => {
            let (points, rec) = normalize_points(&p.points)?;
            Ok((
                ShapeData::Points(PointSet {
                    points,
                    labels: p.labels.clone(),
                }),
                rec,
            ))
        }
    }
}

/// Exact shape diameter: maximum pairwise distance between points.
pub fn diameter(points: &[Point3<f64>]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let per_point = par_map_range!(n, |i| {
        let mut best = 0.0_f64;
        for j in (i + 1)..n {
            let d2 = (points[i] - points[j]).norm_squared();
            if d2 > best {
                best = d2;
            }
        }
        best
    });
    per_point.into_iter().fold(0.0_f64, f64::max).sqrt()
}

/// Dijkstra shortest-path distances over a weighted adjacency list.
///
/// `cutoff` truncates the search: vertices farther than the cutoff keep
/// distance `f64::INFINITY`. Unreachable vertices are also `INFINITY`.
pub fn dijkstra(adj: &[Vec<(u32, f64)>], source: usize, cutoff: Option<f64>) -> Vec<f64> {
    use std::cmp::Ordering;
    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Entry(f64, u32);
    impl Eq for Entry {}
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            // min-heap on distance, ties by vertex index for determinism
            other
                .0
                .partial_cmp(&self.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| other.1.cmp(&self.1))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source as u32));
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        if let Some(c) = cutoff {
            if d > c {
                break;
            }
        }
        for &(w, len) in &adj[v as usize] {
            let nd = d + len;
            if nd < dist[w as usize] {
                dist[w as usize] = nd;
                heap.push(Entry(nd, w));
            }
        }
    }
    if let Some(c) = cutoff {
        for d in dist.iter_mut() {
            if *d > c {
                *d = f64::INFINITY;
            }
        }
    }
    dist
}

/// Distance from a point to a triangle (closest-point projection onto the
/// triangle, its edges, or its corners).
pub fn point_triangle_distance(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> f64 {
    // Ericson, "Real-Time Collision Detection", closest-point cases.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm();
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm();
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm();
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm()
}

/// Distance from a point to the closest triangle of a mesh (brute force over
/// all faces).
pub fn point_mesh_distance(p: &Point3<f64>, mesh: &TriMesh) -> f64 {
    mesh.faces
        .iter()
        .map(|&[a, b, c]| {
            point_triangle_distance(
                p,
                &mesh.vertices[a as usize],
                &mesh.vertices[b as usize],
                &mesh.vertices[c as usize],
            )
        })
        .fold(f64::INFINITY, f64::min)
}
