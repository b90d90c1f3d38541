//! First-order optimization of deformation parameters: sparse keypoint
//! fitting, unsupervised Chamfer registration, parameter-blend interpolation
//! sequences, and the sparse-to-dense correspondence pipeline.

use nalgebra::{DMatrix, Point3, Vector3};

use crate::correspond::{nn_assign, Correspondence};
use crate::energy::{
    arap_loss, chamfer_loss, corr_loss, total_energy, EnergyValue, EnergyWeights, FitMode, Term,
    TotalParts,
};
use crate::error::{Error, Result};
use crate::geom::{NodeSet, TriMesh};
use crate::mls::{precompute_table, precompute_table_partial, DeformParams, ShapeTable};

/// Which first-order update rule drives the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    /// Fixed-step gradient descent.
    GradientDescent,
    /// Moment-accumulating adaptive first-order updates (Adam).
    Adam,
}

/// Starting point for the parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zeros,
    Provided(DeformParams),
}

/// Optimization settings. `step_decay` multiplies the step size every
/// iteration (1.0 keeps it fixed); shrinking the step lets the adaptive
/// update settle instead of cycling at the step-size scale.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub max_steps: usize,
    pub step_size: f64,
    pub step_decay: f64,
    pub kind: OptimKind,
    /// Relative energy-decrease threshold for convergence.
    pub tol: f64,
    pub seed: u64,
    pub weights: EnergyWeights,
    pub init: Init,
    /// Solve the pure least-squares case (both regularizer weights zero)
    /// directly instead of iterating.
    pub allow_direct: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_steps: 500,
            step_size: 1e-2,
            step_decay: 1.0,
            kind: OptimKind::Adam,
            tol: 1e-9,
            seed: 0,
            weights: EnergyWeights::default(),
            init: Init::Zeros,
            allow_direct: true,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config("step size must be positive".into()));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(Error::Config("step decay must lie in (0, 1]".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(
                "convergence tolerance must be nonnegative".into(),
            ));
        }
        self.weights.validate()
    }
}

/// One row of the optimization trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub total: f64,
    pub terms: Vec<(Term, f64)>,
}

/// Optimization outcome: final parameters, the per-step energy trace, and
/// any warnings worth surfacing (conditioning, dropped nodes).
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: DeformParams,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub steps: usize,
    pub warnings: Vec<String>,
}

const DIVERGENCE_LIMIT: f64 = 1e12;

/// Run the configured first-order method on an arbitrary objective.
///
/// The returned parameters correspond to the last trace row: the loop
/// evaluates, records, checks for convergence, and only then steps.
pub fn minimize<F>(mut objective: F, k: usize, config: &OptimConfig) -> Result<FitResult>
where
    F: FnMut(&DeformParams) -> Result<EnergyValue>,
{
    config.validate()?;
    let mut u = match &config.init {
        Init::Zeros => DeformParams::zeros(k),
        Init::Provided(p) => {
            if p.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: p.len(),
                    context: "provided initial parameters",
                });
            }
            p.clone()
        }
    };

    let mut trace: Vec<TraceRow> = Vec::new();
    let mut converged = false;
    let mut m = vec![Vector3::zeros(); k];
    let mut v = vec![Vector3::zeros(); k];
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut step_size = config.step_size;

    for step in 1..=config.max_steps {
        let e = objective(&u)?;
        if !e.total.is_finite() || e.total > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step,
                energy: e.total,
                trace: trace.iter().map(|r| r.total).collect(),
            });
        }
        trace.push(TraceRow {
            step,
            total: e.total,
            terms: e.terms.clone(),
        });
        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2].total;
            let decrease = (prev - e.total).abs();
            if decrease <= config.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if step == config.max_steps {
            break;
        }
        match config.kind {
            OptimKind::GradientDescent => {
                for (ui, g) in u.values.iter_mut().zip(&e.gradient) {
                    *ui -= g * step_size;
                }
            }
            OptimKind::Adam => {
                let t = step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for i in 0..k {
                    let g = e.gradient[i];
                    m[i] = m[i] * beta1 + g * (1.0 - beta1);
                    v[i] = v[i] * beta2 + g.component_mul(&g) * (1.0 - beta2);
                    for d in 0..3 {
                        let mhat = m[i][d] / bc1;
                        let vhat = v[i][d] / bc2;
                        u.values[i][d] -= step_size * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        step_size *= config.step_decay;
    }

    let steps = trace.len();
    Ok(FitResult {
        params: u,
        trace,
        converged,
        steps,
        warnings: Vec::new(),
    })
}

/// Direct least-squares solve of the pure correspondence objective
/// `min_U sum_l ||x_l + Phi(x_l) U - y_l||^2`, via SVD (minimum-norm solution
/// when the system is underdetermined).
pub fn solve_corr_least_squares(
    keypoint_table: &ShapeTable,
    targets: &[Point3<f64>],
) -> Result<DeformParams> {
    let l = keypoint_table.len();
    let k = keypoint_table.node_count;
    if targets.len() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: targets.len(),
            context: "one target per keypoint",
        });
    }
    let mut phi = DMatrix::zeros(l, k);
    let mut rhs = DMatrix::zeros(l, 3);
    for (row, entry) in keypoint_table.entries.iter().enumerate() {
        for (&i, &p) in entry.support.iter().zip(&entry.phi) {
            phi[(row, i as usize)] = p;
        }
        let r = targets[row] - keypoint_table.points[row];
        rhs[(row, 0)] = r.x;
        rhs[(row, 1)] = r.y;
        rhs[(row, 2)] = r.z;
    }
    let svd = phi.svd(true, true);
    let solved = svd.solve(&rhs, 1e-12).map_err(|m| Error::Factorization {
        message: format!("least-squares solve failed: {}", m),
        condition: f64::INFINITY,
    })?;
    Ok(DeformParams {
        values: (0..k)
            .map(|i| Vector3::new(solved[(i, 0)], solved[(i, 1)], solved[(i, 2)]))
            .collect(),
    })
}

fn regularized(weights: &EnergyWeights) -> bool {
    weights.infer_arap > 0.0 || weights.infer_vol > 0.0
}

/// Fit parameters to sparse keypoint pairs: data term plus rigidity and
/// volume regularizers at the nodes, weighted by the inference triple.
pub fn fit_sparse(
    keypoint_table: &ShapeTable,
    targets: &[Point3<f64>],
    node_table: &ShapeTable,
    config: &OptimConfig,
) -> Result<FitResult> {
    if keypoint_table.is_empty() {
        return Err(Error::EmptyGeometry(
            "sparse fit needs at least one keypoint".into(),
        ));
    }
    let k = keypoint_table.node_count;
    let w = config.weights;

    if !regularized(&w) && config.allow_direct {
        // pure linear least squares; solve it exactly
        let params = solve_corr_least_squares(keypoint_table, targets)?;
        let e = corr_loss(keypoint_table, &params, targets)?;
        return Ok(FitResult {
            params,
            trace: vec![TraceRow {
                step: 1,
                total: w.infer_data * e.total,
                terms: e.terms,
            }],
            converged: true,
            steps: 1,
            warnings: vec!["unregularized objective solved by direct least squares".into()],
        });
    }

    minimize(
        |u| {
            let parts = TotalParts {
                corr: Some(corr_loss(keypoint_table, u, targets)?),
                arap: Some(arap_loss(node_table, u)?),
                vol: Some(crate::energy::vol_loss(node_table, u)?),
                ..Default::default()
            };
            total_energy(&w, FitMode::SparseFit, &parts)
        },
        k,
        config,
    )
}

/// Register the template onto a target cloud by minimizing the bidirectional
/// Chamfer distance plus the node regularizers (inference weighting).
pub fn fit_chamfer(
    template_table: &ShapeTable,
    target: &[Point3<f64>],
    node_table: &ShapeTable,
    config: &OptimConfig,
) -> Result<FitResult> {
    if target.is_empty() {
        return Err(Error::EmptyGeometry(
            "chamfer fit needs a nonempty target".into(),
        ));
    }
    let k = template_table.node_count;
    let w = config.weights;
    minimize(
        |u| {
            let parts = TotalParts {
                chamfer: Some(chamfer_loss(template_table, u, target)?),
                arap: Some(arap_loss(node_table, u)?),
                vol: Some(crate::energy::vol_loss(node_table, u)?),
                ..Default::default()
            };
            total_energy(&w, FitMode::Inference, &parts)
        },
        k,
        config,
    )
}

/// Evenly spaced linear blends from `u_a` to `u_b`, endpoints exact.
pub fn interpolate_params(
    u_a: &DeformParams,
    u_b: &DeformParams,
    steps: usize,
) -> Result<Vec<DeformParams>> {
    if steps < 2 {
        return Err(Error::Config("interpolation needs at least 2 steps".into()));
    }
    if u_a.len() != u_b.len() {
        return Err(Error::DimensionMismatch {
            expected: u_a.len(),
            got: u_b.len(),
            context: "interpolation endpoints",
        });
    }
    Ok((0..steps)
        .map(|i| {
            if i == 0 {
                u_a.clone()
            } else if i == steps - 1 {
                u_b.clone()
            } else {
                DeformParams::lerp(u_a, u_b, i as f64 / (steps - 1) as f64)
            }
        })
        .collect())
}

/// Output of the sparse-to-dense pipeline.
#[derive(Debug, Clone)]
pub struct SparseToDense {
    /// Template-to-target correspondence with per-point residual distances.
    pub correspondence: Correspondence,
    pub fit: FitResult,
}

/// Fit the field to a few keypoint pairs, map every template vertex through
/// the fitted deformation, and assign each to its nearest target point.
pub fn sparse_to_dense(
    template: &TriMesh,
    nodes: &NodeSet,
    keypoints: &[(Point3<f64>, Point3<f64>)],
    target: &[Point3<f64>],
    singularity_tol: f64,
    config: &OptimConfig,
) -> Result<SparseToDense> {
    if keypoints.is_empty() {
        return Err(Error::EmptyGeometry(
            "sparse-to-dense needs keypoint pairs".into(),
        ));
    }
    let sources: Vec<Point3<f64>> = keypoints.iter().map(|(x, _)| *x).collect();
    let targets: Vec<Point3<f64>> = keypoints.iter().map(|(_, y)| *y).collect();

    let keypoint_table = precompute_table(&sources, nodes, singularity_tol)?;
    let (node_table, dropped) = precompute_table_partial(&nodes.positions, nodes, singularity_tol);
    let mut warnings = Vec::new();
    if !dropped.is_empty() {
        warnings.push(format!(
            "{} node positions lack coverage and are excluded from the regularizers",
            dropped.len()
        ));
    }
    if keypoints.len() < nodes.len() {
        warnings.push(format!(
            "conditioning: {} keypoints constrain {} nodes; the system is underdetermined",
            keypoints.len(),
            nodes.len()
        ));
    }

    let mut fit = fit_sparse(&keypoint_table, &targets, &node_table, config)?;
    fit.warnings.extend(warnings);

    let template_table = precompute_table(&template.vertices, nodes, singularity_tol)?;
    let deformed = template_table.eval_mapping(&fit.params)?;
    let mut correspondence = nn_assign(&deformed, target)?;
    let errors = deformed
        .iter()
        .zip(&correspondence.targets)
        .map(|(d, &t)| (d - target[t as usize]).norm())
        .collect();
    correspondence.errors = Some(errors);

    Ok(SparseToDense {
        correspondence,
        fit,
    })
}
