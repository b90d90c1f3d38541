//! Mesh-free field approximation: compactly supported weights, the 4x4
//! moment matrix, shape functions and their exact analytic gradients, and
//! precomputed evaluation tables.
//!
//! A point `x` is well-posed ("covered") when at least four non-planar nodes
//! support it, which is exactly the condition for the moment matrix to be
//! invertible. With the linear basis `p(x) = [1, x, y, z]` the approximation
//! reproduces linear fields exactly; everything downstream (rigid exactness
//! of the regularizers, constant-field reproduction) follows from that.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geom::NodeSet;
use crate::par::par_map_range;

/// Default gate on the smallest eigenvalue of the moment matrix.
pub const DEFAULT_SINGULARITY_TOL: f64 = 1e-8;

/// Distance below which a support node is treated as coincident with the
/// evaluation point. Exactly coincident points (distance 0) use the
/// symmetric-limit convention for the weight gradient instead of erroring,
/// so tables over the node positions themselves are well-defined.
pub const COINCIDENCE_TOL: f64 = 1e-12;

/// Counters for factorization work, used to verify that table reuse performs
/// no hidden moment-matrix solves.
pub mod stats {
    use std::sync::atomic::{AtomicU64, Ordering};

    static MOMENT_FACTORIZATIONS: AtomicU64 = AtomicU64::new(0);

    pub(crate) fn bump() {
        MOMENT_FACTORIZATIONS.fetch_add(1, Ordering::Relaxed);
    }

    /// Total moment-matrix factorizations performed by this process.
    pub fn moment_factorizations() -> u64 {
        MOMENT_FACTORIZATIONS.load(Ordering::Relaxed)
    }
}

/// Compactly supported cubic weight: `(1 - d/r)^3` for `d <= r`, else 0.
pub fn weight(x: &Point3<f64>, q: &Point3<f64>, r: f64) -> f64 {
    let d = (x - q).norm();
    if d <= r {
        let t = 1.0 - d / r;
        t * t * t
    } else {
        0.0
    }
}

/// Spatial gradient of [`weight`]: `-(3/r) (1 - d/r)^2 (x - q)/d` inside the
/// support, zero outside and (by the symmetric-limit convention) at `d = 0`.
pub fn weight_gradient(x: &Point3<f64>, q: &Point3<f64>, r: f64) -> Vector3<f64> {
    let diff = x - q;
    let d = diff.norm();
    if d <= 0.0 || d > r {
        return Vector3::zeros();
    }
    let t = 1.0 - d / r;
    diff * (-3.0 * t * t / (r * d))
}

/// Linear polynomial basis `p(x) = [1, x, y, z]`.
#[inline]
pub fn basis(p: &Point3<f64>) -> Vector4<f64> {
    Vector4::new(1.0, p.x, p.y, p.z)
}

/// Moment matrix `M(x) = sum_i w_i(x) p(q_i) p(q_i)^T`.
pub fn moment_matrix(x: &Point3<f64>, nodes: &NodeSet) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (q, &r) in nodes.positions.iter().zip(&nodes.radii) {
        let w = weight(x, q, r);
        if w > 0.0 {
            let p = basis(q);
            m.syger(w, &p, &p, 1.0);
        }
    }
    // syger fills the lower triangle; mirror it
    m.fill_upper_triangle_with_lower_triangle();
    m
}

/// Symmetric eigendecomposition of a moment matrix, used to apply the
/// inverse without ever forming it and to expose the smallest eigenvalue
/// (for a symmetric PSD matrix this equals the smallest singular value).
struct MomentFactor {
    m: Matrix4<f64>,
    vectors: Matrix4<f64>,
    values: Vector4<f64>,
    sigma_min: f64,
}

impl MomentFactor {
    fn new(m: &Matrix4<f64>) -> Self {
        stats::bump();
        let eig = m.symmetric_eigen();
        let sigma_min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        Self {
            m: *m,
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
            sigma_min,
        }
    }

    fn solve_once(&self, v: &Vector4<f64>) -> Vector4<f64> {
        let mut y = self.vectors.transpose() * v;
        for i in 0..4 {
            y[i] /= self.values[i];
        }
        self.vectors * y
    }

    /// One step of iterative refinement on top of the factored solve keeps
    /// the residual near machine precision even when the moment matrix sits
    /// close to the singularity gate.
    fn apply_inverse(&self, v: &Vector4<f64>) -> Vector4<f64> {
        let c = self.solve_once(v);
        let residual = v - self.m * c;
        c + self.solve_once(&residual)
    }
}

/// Smallest eigenvalue of `M(x)` together with the number of nodes whose
/// support ball contains `x` (boundary inclusive). This is the coverage
/// primitive: covered means `count >= 4` and `sigma_min > tol`.
pub fn support_and_sigma_min(x: &Point3<f64>, nodes: &NodeSet) -> (usize, f64) {
    let count = nodes
        .positions
        .iter()
        .zip(&nodes.radii)
        .filter(|(q, &r)| (x - *q).norm() <= r)
        .count();
    let m = moment_matrix(x, nodes);
    let f = MomentFactor::new(&m);
    (count, f.sigma_min)
}

/// Shape functions (and optionally gradients) of every supporting node at
/// one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    /// Indices of nodes with strictly positive weight at this point.
    pub support: Vec<u32>,
    /// Shape function value per supporting node.
    pub phi: Vec<f64>,
    /// Spatial gradient per supporting node; empty when not requested.
    pub grad: Vec<Vector3<f64>>,
}

/// Single evaluation kernel shared by [`shape_functions`],
/// [`shape_function_gradients`], and the table builder, so cached entries are
/// bit-for-bit identical to direct calls.
fn evaluate_point(
    x: &Point3<f64>,
    nodes: &NodeSet,
    tol: f64,
    with_grad: bool,
) -> Result<PointEval> {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (i, (q, &r)) in nodes.positions.iter().zip(&nodes.radii).enumerate() {
        let w = weight(x, q, r);
        if w > 0.0 {
            if with_grad {
                let d = (x - q).norm();
                if d > 0.0 && d < COINCIDENCE_TOL {
                    return Err(Error::NodeCoincidence {
                        node: i,
                        distance: d,
                    });
                }
            }
            support.push(i as u32);
            weights.push(w);
        }
    }

    let mut m = Matrix4::zeros();
    for (&i, &w) in support.iter().zip(&weights) {
        let p = basis(&nodes.positions[i as usize]);
        m.syger(w, &p, &p, 1.0);
    }
    m.fill_upper_triangle_with_lower_triangle();
    let factor = MomentFactor::new(&m);
    if !(factor.sigma_min > tol) {
        return Err(Error::SingularMoment {
            sigma_min: factor.sigma_min,
            support: support.len(),
        });
    }

    let c = factor.apply_inverse(&basis(x));
    let alphas: Vec<f64> = support
        .iter()
        .map(|&i| c.dot(&basis(&nodes.positions[i as usize])))
        .collect();
    let phi: Vec<f64> = weights.iter().zip(&alphas).map(|(&w, &a)| w * a).collect();

    if !with_grad {
        return Ok(PointEval {
            support,
            phi,
            grad: Vec::new(),
        });
    }

    // Three-term product rule for d(phi_i)/dx, with
    // d(M^-1)/dx = -M^-1 (dM/dx) M^-1 folded in:
    //   term1 = (M^-1 w_i p(q_i))[1 + d]
    //   term2 = -(t_d . M^-1 p(q_i)) w_i, t_d = sum_j s_j[d] alpha_j p(q_j)
    //   term3 = s_i[d] alpha_i
    let s: Vec<Vector3<f64>> = support
        .iter()
        .map(|&i| weight_gradient(x, &nodes.positions[i as usize], nodes.radii[i as usize]))
        .collect();
    let a_vecs: Vec<Vector4<f64>> = support
        .iter()
        .map(|&i| factor.apply_inverse(&basis(&nodes.positions[i as usize])))
        .collect();
    let mut t = [Vector4::zeros(); 3];
    for ((&i, sj), &alpha) in support.iter().zip(&s).zip(&alphas) {
        let p = basis(&nodes.positions[i as usize]);
        for d in 0..3 {
            t[d] += p * (sj[d] * alpha);
        }
    }
    let grad = (0..support.len())
        .map(|k| {
            let w = weights[k];
            let mut g = Vector3::zeros();
            for d in 0..3 {
                g[d] = w * a_vecs[k][1 + d] - w * t[d].dot(&a_vecs[k]) + s[k][d] * alphas[k];
            }
            g
        })
        .collect();

    Ok(PointEval { support, phi, grad })
}

/// Shape function values `phi_i(x)` for every supporting node.
pub fn shape_functions(x: &Point3<f64>, nodes: &NodeSet, tol: f64) -> Result<PointEval> {
    evaluate_point(x, nodes, tol, false)
}

/// Shape functions together with their exact spatial gradients.
pub fn shape_function_gradients(x: &Point3<f64>, nodes: &NodeSet, tol: f64) -> Result<PointEval> {
    evaluate_point(x, nodes, tol, true)
}

/// Nodal deformation parameters: one 3-vector per node. The only quantity
/// optimization ever touches.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformParams {
    pub values: Vec<Vector3<f64>>,
}

impl DeformParams {
    pub fn zeros(k: usize) -> Self {
        Self {
            values: vec![Vector3::zeros(); k],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Parameters sampled from the linear field `u(q) = A q + b`, which the
    /// approximation reproduces exactly.
    pub fn from_linear_field(a: &Matrix3<f64>, b: &Vector3<f64>, nodes: &NodeSet) -> Self {
        Self {
            values: nodes.positions.iter().map(|q| a * q.coords + b).collect(),
        }
    }

    /// The rigid field `u(q) = (R - I) q + t`, whose mapping is `x -> Rx + t`.
    pub fn rigid(r: &Matrix3<f64>, t: &Vector3<f64>, nodes: &NodeSet) -> Self {
        Self::from_linear_field(&(r - Matrix3::identity()), t, nodes)
    }

    /// Linear blend `(1 - alpha) a + alpha b`.
    pub fn lerp(a: &DeformParams, b: &DeformParams, alpha: f64) -> Self {
        Self {
            values: a
                .values
                .iter()
                .zip(&b.values)
                .map(|(ua, ub)| ua * (1.0 - alpha) + ub * alpha)
                .collect(),
        }
    }
}

fn check_params(k: usize, u: &DeformParams) -> Result<()> {
    if u.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: u.len(),
            context: "deformation parameters per node",
        });
    }
    Ok(())
}

/// Precomputed shape functions and gradients over a fixed evaluation point
/// set. Immutable after construction; evaluating fields or Jacobians from it
/// involves no further moment-matrix work.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTable {
    pub points: Vec<Point3<f64>>,
    pub node_count: usize,
    pub tol: f64,
    pub entries: Vec<PointEval>,
}

/// Build a [`ShapeTable`] with gradients at every point; errors listing the
/// uncovered points if any evaluation fails.
pub fn precompute_table(points: &[Point3<f64>], nodes: &NodeSet, tol: f64) -> Result<ShapeTable> {
    let (table, uncovered) = precompute_table_partial(points, nodes, tol);
    if !uncovered.is_empty() {
        return Err(Error::Uncovered {
            count: uncovered.len(),
            first: uncovered.into_iter().take(8).collect(),
        });
    }
    Ok(table)
}

/// Like [`precompute_table`] but keeps going past uncovered points, returning
/// the table over the covered subset plus the indices that were dropped.
pub fn precompute_table_partial(
    points: &[Point3<f64>],
    nodes: &NodeSet,
    tol: f64,
) -> (ShapeTable, Vec<usize>) {
    let evals: Vec<Result<PointEval>> = par_map_range!(points.len(), |k| evaluate_point(
        &points[k], nodes, tol, true
    ));
    let mut kept_points = Vec::new();
    let mut entries = Vec::new();
    let mut uncovered = Vec::new();
    for (k, e) in evals.into_iter().enumerate() {
        match e {
            Ok(entry) => {
                kept_points.push(points[k]);
                entries.push(entry);
            }
            Err(_) => uncovered.push(k),
        }
    }
    (
        ShapeTable {
            points: kept_points,
            node_count: nodes.len(),
            tol,
            entries,
        },
        uncovered,
    )
}

impl ShapeTable {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Displacement `u(x_k) = sum_i phi_i(x_k) u_i` at table point `k`.
    pub fn field_at(&self, k: usize, u: &DeformParams) -> Vector3<f64> {
        let e = &self.entries[k];
        let mut out = Vector3::zeros();
        for (&i, &phi) in e.support.iter().zip(&e.phi) {
            out += u.values[i as usize] * phi;
        }
        out
    }

    /// Deformed position `D(x_k) = x_k + u(x_k)`.
    pub fn mapping_at(&self, k: usize, u: &DeformParams) -> Point3<f64> {
        self.points[k] + self.field_at(k, u)
    }

    /// Field Jacobian `grad u` at table point `k`, rows indexing output
    /// components and columns spatial derivatives.
    pub fn field_jacobian_at(&self, k: usize, u: &DeformParams) -> Matrix3<f64> {
        let e = &self.entries[k];
        let mut j = Matrix3::zeros();
        for (&i, g) in e.support.iter().zip(&e.grad) {
            j += u.values[i as usize] * g.transpose();
        }
        j
    }

    /// Mapping Jacobian `J = I + grad u` at table point `k`.
    pub fn mapping_jacobian_at(&self, k: usize, u: &DeformParams) -> Matrix3<f64> {
        Matrix3::identity() + self.field_jacobian_at(k, u)
    }

    /// Displacements at every table point.
    pub fn eval_field(&self, u: &DeformParams) -> Result<Vec<Vector3<f64>>> {
        check_params(self.node_count, u)?;
        Ok((0..self.len()).map(|k| self.field_at(k, u)).collect())
    }

    /// Deformed positions at every table point.
    pub fn eval_mapping(&self, u: &DeformParams) -> Result<Vec<Point3<f64>>> {
        check_params(self.node_count, u)?;
        Ok((0..self.len()).map(|k| self.mapping_at(k, u)).collect())
    }

    /// Mapping Jacobians at every table point.
    pub fn eval_mapping_jacobians(&self, u: &DeformParams) -> Result<Vec<Matrix3<f64>>> {
        check_params(self.node_count, u)?;
        Ok((0..self.len())
            .map(|k| self.mapping_jacobian_at(k, u))
            .collect())
    }
}

/// One-off displacement evaluation at an arbitrary covered point.
pub fn eval_field_at(
    x: &Point3<f64>,
    nodes: &NodeSet,
    tol: f64,
    u: &DeformParams,
) -> Result<Vector3<f64>> {
    check_params(nodes.len(), u)?;
    let e = shape_functions(x, nodes, tol)?;
    let mut out = Vector3::zeros();
    for (&i, &phi) in e.support.iter().zip(&e.phi) {
        out += u.values[i as usize] * phi;
    }
    Ok(out)
}

/// One-off deformed position `D(x) = x + u(x)`.
pub fn eval_mapping_at(
    x: &Point3<f64>,
    nodes: &NodeSet,
    tol: f64,
    u: &DeformParams,
) -> Result<Point3<f64>> {
    Ok(x + eval_field_at(x, nodes, tol, u)?)
}

/// One-off mapping Jacobian `J = I + grad u` at an arbitrary covered point.
pub fn eval_mapping_jacobian_at(
    x: &Point3<f64>,
    nodes: &NodeSet,
    tol: f64,
    u: &DeformParams,
) -> Result<Matrix3<f64>> {
    check_params(nodes.len(), u)?;
    let e = shape_function_gradients(x, nodes, tol)?;
    let mut j = Matrix3::identity();
    for (&i, g) in e.support.iter().zip(&e.grad) {
        j += u.values[i as usize] * g.transpose();
    }
    Ok(j)
}
