//! Dense correspondence extraction and evaluation.
//!
//! A correspondence between two deformed copies of one template is the
//! composition of two nearest-neighbor searches; quality is scored as a
//! graph-geodesic distance on the target mesh between predicted and
//! ground-truth matches, normalized by the square root of the surface area.

use nalgebra::Point3;

use crate::energy;
use crate::error::{Error, Result};
use crate::geom::{dijkstra, TriMesh};
use crate::kdtree::KdTree;
use crate::par::par_map_range;

/// One target index per source point, with optional per-point error scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub targets: Vec<u32>,
    pub errors: Option<Vec<f64>>,
}

impl Correspondence {
    pub fn identity(n: usize) -> Self {
        Self {
            targets: (0..n as u32).collect(),
            errors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Map each point of `a` to its Euclidean-nearest point of `b`; distance ties
/// resolve to the lowest `b` index.
pub fn nn_assign(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<Correspondence> {
    if b.is_empty() {
        return Err(Error::EmptyGeometry(
            "nearest-neighbor target set is empty".into(),
        ));
    }
    let tree = KdTree::build(b);
    let targets = par_map_range!(a.len(), |i| tree.nearest(&a[i]).unwrap().0);
    Ok(Correspondence {
        targets,
        errors: None,
    })
}

/// Correspondence from `x` to `y` by composing two nearest-neighbor searches
/// through the deformed templates `dx` and `dy` (which share vertex order).
///
/// For each point of `x`: find its nearest point in `dx` (a template index),
/// then map that template vertex's position in `dy` to its nearest point in
/// `y`.
pub fn compose_pi(
    dx: &[Point3<f64>],
    x: &[Point3<f64>],
    dy: &[Point3<f64>],
    y: &[Point3<f64>],
) -> Result<Correspondence> {
    if dx.len() != dy.len() {
        return Err(Error::DimensionMismatch {
            expected: dx.len(),
            got: dy.len(),
            context: "deformed templates must share vertex order",
        });
    }
    if dx.is_empty() || y.is_empty() {
        return Err(Error::EmptyGeometry(
            "composition needs nonempty point sets".into(),
        ));
    }
    let x_to_template = nn_assign(x, dx)?;
    let template_in_y = nn_assign(dy, y)?;
    let targets = x_to_template
        .targets
        .iter()
        .map(|&t| template_in_y.targets[t as usize])
        .collect();
    Ok(Correspondence {
        targets,
        errors: None,
    })
}

/// Geodesic correspondence errors under the square-root-of-area
/// normalization.
#[derive(Debug, Clone)]
pub struct GeodesicErrorReport {
    /// Normalized per-point error; `INFINITY` for disconnected pairs.
    pub errors: Vec<f64>,
    /// Mean over the finite entries.
    pub mean: f64,
    /// Cumulative accuracy curve: (threshold, fraction of points at or below).
    pub curve: Vec<(f64, f64)>,
    /// Number of disconnected (infinite-distance) pairs.
    pub disconnected: usize,
}

/// Score `pred` against `gt`: per-point graph-geodesic distance on the target
/// mesh between the predicted and ground-truth targets, divided by the square
/// root of the total surface area.
pub fn geodesic_error(
    pred: &Correspondence,
    gt: &Correspondence,
    target_mesh: &TriMesh,
) -> Result<GeodesicErrorReport> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: pred.len(),
            context: "prediction and ground truth must pair the same sources",
        });
    }
    let nv = target_mesh.vertex_count();
    for &t in pred.targets.iter().chain(&gt.targets) {
        if t as usize >= nv {
            return Err(Error::DimensionMismatch {
                expected: nv,
                got: t as usize,
                context: "correspondence target index out of mesh range",
            });
        }
    }
    let area = target_mesh.total_area();
    if !(area > 0.0) {
        return Err(Error::InvalidGeometry("target mesh has zero area".into()));
    }
    let norm = area.sqrt();
    let adj = target_mesh.edge_adjacency();

    // one Dijkstra per distinct predicted vertex, reused across sources
    let mut uniq: Vec<u32> = pred.targets.clone();
    uniq.sort_unstable();
    uniq.dedup();
    let dists = par_map_range!(uniq.len(), |k| dijkstra(&adj, uniq[k] as usize, None));
    let lookup = |v: u32| uniq.binary_search(&v).unwrap();

    let errors: Vec<f64> = pred
        .targets
        .iter()
        .zip(&gt.targets)
        .map(|(&p, &g)| dists[lookup(p)][g as usize] / norm)
        .collect();
    let disconnected = errors.iter().filter(|e| e.is_infinite()).count();
    let finite: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    let mean = if finite.is_empty() {
        0.0
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };

    let max = finite.iter().fold(0.0_f64, |a, &b| a.max(b));
    let steps = 100;
    let curve = (0..=steps)
        .map(|i| {
            let t = max * i as f64 / steps as f64;
            let below = errors.iter().filter(|&&e| e <= t).count();
            (t, below as f64 / errors.len() as f64)
        })
        .collect();

    Ok(GeodesicErrorReport {
        errors,
        mean,
        curve,
        disconnected,
    })
}

/// Bidirectional Chamfer distance between a reconstruction and its target.
pub fn reconstruction_chamfer(d: &[Point3<f64>], target: &[Point3<f64>]) -> Result<f64> {
    energy::chamfer(d, target)
}
