//! Node sampling: dense candidate generation around the template, rejection
//! policies (labels, geodesic reach), farthest-point selection until every
//! surface point is covered, and the auxiliary cube corners for volumetric
//! domains.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{diameter, dijkstra, NodeSet, PointSet, ShapeData, TriMesh};
use crate::kdtree::KdTree;
use crate::mls::support_and_sigma_min;
use crate::par::par_map_range;

/// Per-point coverage diagnostics: how many nodes support each point and
/// whether the moment matrix there is comfortably invertible.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    /// Nodes whose support ball contains the point (boundary inclusive).
    pub counts: Vec<usize>,
    /// Smallest eigenvalue of the 4x4 moment matrix at the point.
    pub sigma_min: Vec<f64>,
    /// `counts >= 4` and `sigma_min > tol`.
    pub covered: Vec<bool>,
}

impl CoverageReport {
    pub fn all_covered(&self) -> bool {
        self.covered.iter().all(|&c| c)
    }

    pub fn uncovered_indices(&self) -> Vec<usize> {
        self.covered
            .iter()
            .enumerate()
            .filter(|(_, &c)| !c)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Coverage of every point under the given nodes.
pub fn check_coverage(
    points: &[Point3<f64>],
    nodes: &NodeSet,
    singularity_tol: f64,
) -> CoverageReport {
    let rows = par_map_range!(points.len(), |i| {
        let (count, sigma) = support_and_sigma_min(&points[i], nodes);
        (count, sigma, count >= 4 && sigma > singularity_tol)
    });
    let mut counts = Vec::with_capacity(rows.len());
    let mut sigma_min = Vec::with_capacity(rows.len());
    let mut covered = Vec::with_capacity(rows.len());
    for (c, s, ok) in rows {
        counts.push(c);
        sigma_min.push(s);
        covered.push(ok);
    }
    CoverageReport {
        counts,
        sigma_min,
        covered,
    }
}

/// Dense node candidates around a template.
///
/// Meshes are sampled by area-weighted barycentric draws, jittered along the
/// face normal by a uniform amount in `[-offset, offset]`. Point-cloud
/// templates are augmented with Gaussian noise of standard deviation
/// `offset` instead. Deterministic for a fixed seed.
pub fn generate_candidates(
    template: &ShapeData,
    count: usize,
    offset: f64,
    seed: u64,
) -> Result<PointSet> {
    if count == 0 {
        return Err(Error::Config("candidate count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = match template {
        ShapeData::Mesh(mesh) => {
            let cumulative: Vec<f64> = mesh
                .faces
                .iter()
                .enumerate()
                .scan(0.0, |acc, (f, _)| {
                    *acc += mesh.face_area(f);
                    Some(*acc)
                })
                .collect();
            let total = cumulative.last().copied().unwrap_or(0.0);
            if !(total > 0.0) {
                return Err(Error::InvalidGeometry("mesh has zero surface area".into()));
            }
            (0..count)
                .map(|_| {
                    let target = rng.random_range(0.0..total);
                    let f = cumulative
                        .partition_point(|&c| c <= target)
                        .min(mesh.faces.len() - 1);
                    let (mut r0, mut r1): (f64, f64) = (rng.random(), rng.random());
                    if r0 + r1 > 1.0 {
                        r0 = 1.0 - r0;
                        r1 = 1.0 - r1;
                    }
                    let [a, b, c] = mesh.faces[f];
                    let pa = mesh.vertices[a as usize];
                    let pb = mesh.vertices[b as usize];
                    let pc = mesh.vertices[c as usize];
                    let on_face = pa + (pb - pa) * r0 + (pc - pa) * r1;
                    if offset > 0.0 {
                        let jitter: f64 = rng.random_range(-offset..offset);
                        on_face + mesh.face_normal(f) * jitter
                    } else {
                        on_face
                    }
                })
                .collect()
        }
        ShapeData::Points(cloud) => (0..count)
            .map(|_| {
                let base = cloud.points[rng.random_range(0..cloud.points.len())];
                base + gaussian3(&mut rng) * offset
            })
            .collect(),
    };
    PointSet::new(points, None)
}

/// Standard normal 3-vector via Box-Muller.
fn gaussian3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let mut pair = || {
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (-2.0 * u1.ln()).sqrt();
        (r * u2.cos(), r * u2.sin())
    };
    let (a, b) = pair();
    let (c, _) = pair();
    Vector3::new(a, b, c)
}

/// Keep only candidates whose radius ball touches template vertices of at
/// most one distinct label.
pub fn reject_by_labels(
    candidates: &PointSet,
    template: &TriMesh,
    radius: f64,
) -> Result<PointSet> {
    let labels = template
        .labels
        .as_deref()
        .ok_or_else(|| Error::Labels("label rejection needs a labeled template".into()))?;
    if !(radius > 0.0) {
        return Err(Error::Config("rejection radius must be positive".into()));
    }
    let tree = KdTree::build(&template.vertices);
    let keep = par_map_range!(candidates.len(), |i| {
        let touched = tree.within_radius(&candidates.points[i], radius);
        let mut seen: Option<i32> = None;
        for v in touched {
            let l = labels[v as usize];
            match seen {
                None => seen = Some(l),
                Some(s) if s != l => return false,
                Some(_) => {}
            }
        }
        true
    });
    filter_points(candidates, &keep)
}

/// Remove candidates whose radius ball contains two template vertices that
/// are geodesically farther apart than `fraction` of the shape diameter.
/// Disconnected vertex pairs inside one ball count as exceeding the
/// threshold. An infinite fraction keeps everything.
///
/// In-ball geodesics reach `2 * radius` even on flat regions, so `radius`
/// must stay below half the threshold or the policy rejects everything.
pub fn reject_by_geodesic(
    candidates: &PointSet,
    template: &TriMesh,
    radius: f64,
    fraction: f64,
) -> Result<PointSet> {
    if !(radius > 0.0) {
        return Err(Error::Config("rejection radius must be positive".into()));
    }
    if fraction.is_infinite() {
        return Ok(candidates.clone());
    }
    let threshold = fraction * diameter(&template.vertices);
    let adj = template.edge_adjacency();
    let tree = KdTree::build(&template.vertices);
    let keep = par_map_range!(candidates.len(), |i| {
        let ball = tree.within_radius(&candidates.points[i], radius);
        // all-pairs check via truncated single-source sweeps; early exit on
        // the first pair past the threshold
        for &s in &ball {
            let dist = dijkstra(&adj, s as usize, Some(threshold));
            for &t in &ball {
                if dist[t as usize] > threshold {
                    return false;
                }
            }
        }
        true
    });
    filter_points(candidates, &keep)
}

fn filter_points(candidates: &PointSet, keep: &[bool]) -> Result<PointSet> {
    let points: Vec<Point3<f64>> = candidates
        .points
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(p, _)| *p)
        .collect();
    let labels = candidates.labels.as_ref().map(|l| {
        l.iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(v, _)| *v)
            .collect()
    });
    if points.is_empty() {
        return Err(Error::CoverageFailure {
            uncovered: 0,
            first: Vec::new(),
        });
    }
    PointSet::new(points, labels)
}

/// Farthest-point selection from the candidates until every surface point is
/// covered by four non-planar nodes.
///
/// The first node is the candidate farthest from the candidate centroid;
/// each subsequent node maximizes the minimum distance to the selected set.
/// All distance ties break to the lowest candidate index, making the
/// selection fully deterministic. All radii are set to `radius`.
pub fn fps_until_coverage(
    candidates: &PointSet,
    surface: &[Point3<f64>],
    radius: f64,
    singularity_tol: f64,
) -> Result<NodeSet> {
    if !(radius > 0.0) {
        return Err(Error::Config("node radius must be positive".into()));
    }
    if surface.is_empty() {
        return Err(Error::EmptyGeometry("no surface points to cover".into()));
    }
    let cand = &candidates.points;
    let n = cand.len();

    let centroid = cand.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / n as f64;
    let first = (0..n)
        .max_by(|&a, &b| {
            let da = (cand[a].coords - centroid).norm_squared();
            let db = (cand[b].coords - centroid).norm_squared();
            da.partial_cmp(&db).unwrap().then_with(|| b.cmp(&a))
        })
        .unwrap();

    let mut selected: Vec<usize> = vec![first];
    let mut min_dist2: Vec<f64> = cand
        .iter()
        .map(|p| (p - cand[first]).norm_squared())
        .collect();

    // Incremental coverage bookkeeping. Support counts update per added
    // node; the sigma_min check reruns only for points whose support grew,
    // and a point once covered stays covered (adding a node only adds a PSD
    // term to the moment matrix).
    let mut counts = vec![0usize; surface.len()];
    let mut covered = vec![false; surface.len()];
    let mut uncovered_left = surface.len();

    let add_node = |node: usize,
                    selected: &mut Vec<usize>,
                    counts: &mut [usize],
                    covered: &mut [bool],
                    uncovered_left: &mut usize| {
        let q = cand[node];
        let touched: Vec<usize> = (0..surface.len())
            .filter(|&k| (surface[k] - q).norm() <= radius)
            .collect();
        for &k in &touched {
            counts[k] += 1;
        }
        let nodes_so_far = NodeSet {
            positions: selected.iter().map(|&i| cand[i]).collect(),
            radii: vec![radius; selected.len()],
            labels: None,
        };
        for &k in &touched {
            if !covered[k] && counts[k] >= 4 {
                let (_, sigma) = support_and_sigma_min(&surface[k], &nodes_so_far);
                if sigma > singularity_tol {
                    covered[k] = true;
                    *uncovered_left -= 1;
                }
            }
        }
    };

    add_node(
        first,
        &mut selected,
        &mut counts,
        &mut covered,
        &mut uncovered_left,
    );
    while uncovered_left > 0 {
        if selected.len() == n {
            let first_uncovered: Vec<usize> = covered
                .iter()
                .enumerate()
                .filter(|(_, &c)| !c)
                .map(|(i, _)| i)
                .take(8)
                .collect();
            return Err(Error::CoverageFailure {
                uncovered: uncovered_left,
                first: first_uncovered,
            });
        }
        let next = (0..n).filter(|i| min_dist2[*i] > 0.0).max_by(|&a, &b| {
            min_dist2[a]
                .partial_cmp(&min_dist2[b])
                .unwrap()
                .then_with(|| b.cmp(&a))
        });
        let next = match next {
            Some(i) => i,
            None => {
                // every remaining candidate coincides with a selected node
                let first_uncovered: Vec<usize> = covered
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| !c)
                    .map(|(i, _)| i)
                    .take(8)
                    .collect();
                return Err(Error::CoverageFailure {
                    uncovered: uncovered_left,
                    first: first_uncovered,
                });
            }
        };
        selected.push(next);
        for i in 0..n {
            let d2 = (cand[i] - cand[next]).norm_squared();
            if d2 < min_dist2[i] {
                min_dist2[i] = d2;
            }
        }
        add_node(
            next,
            &mut selected,
            &mut counts,
            &mut covered,
            &mut uncovered_left,
        );
    }

    NodeSet::new(
        selected.iter().map(|&i| cand[i]).collect(),
        vec![radius; selected.len()],
        None,
    )
}

/// Half diagonal of the unit cube `[-0.5, 0.5]^3`, the minimum auxiliary
/// radius (anything smaller cannot reach the cube center from a corner).
pub const CUBE_HALF_DIAGONAL: f64 = 0.8660254037844386;

/// Append the eight unit-cube corner nodes with radius `aux_radius`, for
/// volumetric domains normalized to `[-0.5, 0.5]^3`.
pub fn add_auxiliary_cube_nodes(nodes: &NodeSet, aux_radius: f64) -> Result<NodeSet> {
    if aux_radius < CUBE_HALF_DIAGONAL {
        return Err(Error::Config(format!(
            "auxiliary radius {} is below the cube half-diagonal {}",
            aux_radius, CUBE_HALF_DIAGONAL
        )));
    }
    let mut positions = nodes.positions.clone();
    let mut radii = nodes.radii.clone();
    let mut labels = nodes.labels.clone();
    for i in 0..8 {
        let corner = Point3::new(
            if i & 1 == 0 { -0.5 } else { 0.5 },
            if i & 2 == 0 { -0.5 } else { 0.5 },
            if i & 4 == 0 { -0.5 } else { 0.5 },
        );
        positions.push(corner);
        radii.push(aux_radius);
        if let Some(l) = &mut labels {
            l.push(-1);
        }
    }
    NodeSet::new(positions, radii, labels)
}
