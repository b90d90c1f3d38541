//! Loss terms over deformation parameters, each with its analytic gradient:
//! keypoint correspondence, bidirectional Chamfer, volume preservation and
//! local rigidity at the nodes, the parameter-blend regularizer, and the
//! mode-dependent weighted total.
//!
//! Volume and rigidity act only at node positions; enforcing them over whole
//! shapes converges poorly, and evaluating at nodes makes the Jacobians
//! reusable across parameter sets.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::mls::{DeformParams, ShapeTable};
use crate::par::par_map_range;

/// Loss weights: the training quadruple (correspondence, volume, rigidity,
/// blend) and the inference triple (data term, rigidity, volume).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWeights {
    pub corr: f64,
    pub vol: f64,
    pub arap: f64,
    pub blend: f64,
    /// Multiplies the data term at inference: Chamfer when registering a
    /// point cloud, correspondence when fitting sparse keypoints.
    pub infer_data: f64,
    pub infer_arap: f64,
    pub infer_vol: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            corr: 1.0,
            vol: 5e-3,
            arap: 1e-2,
            blend: 5e-3,
            infer_data: 1.0,
            infer_arap: 1e-4,
            infer_vol: 1e-3,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.corr,
            self.vol,
            self.arap,
            self.blend,
            self.infer_data,
            self.infer_arap,
            self.infer_vol,
        ];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("energy weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Individual loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Corr,
    Chamfer,
    Vol,
    Arap,
    Blend,
}

impl Term {
    pub fn name(&self) -> &'static str {
        match self {
            Term::Corr => "corr",
            Term::Chamfer => "chamfer",
            Term::Vol => "vol",
            Term::Arap => "arap",
            Term::Blend => "blend",
        }
    }
}

/// A loss evaluation: total, raw per-term values, and the gradient with
/// respect to the deformation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyValue {
    pub total: f64,
    pub terms: Vec<(Term, f64)>,
    pub gradient: Vec<Vector3<f64>>,
}

impl EnergyValue {
    pub fn term(&self, t: Term) -> Option<f64> {
        self.terms.iter().find(|(k, _)| *k == t).map(|(_, v)| *v)
    }
}

fn check_table_params(table: &ShapeTable, u: &DeformParams) -> Result<()> {
    if u.len() != table.node_count {
        return Err(Error::DimensionMismatch {
            expected: table.node_count,
            got: u.len(),
            context: "deformation parameters per node",
        });
    }
    Ok(())
}

/// Squared-distance correspondence loss `sum_l ||D(x_l) - y_l||^2` over the
/// table's evaluation points.
pub fn corr_loss(
    keypoint_table: &ShapeTable,
    u: &DeformParams,
    targets: &[Point3<f64>],
) -> Result<EnergyValue> {
    check_table_params(keypoint_table, u)?;
    if targets.len() != keypoint_table.len() {
        return Err(Error::DimensionMismatch {
            expected: keypoint_table.len(),
            got: targets.len(),
            context: "one target per keypoint",
        });
    }
    let per_point = par_map_range!(keypoint_table.len(), |l| {
        let residual = keypoint_table.mapping_at(l, u) - targets[l];
        (residual.norm_squared(), residual)
    });
    let mut total = 0.0;
    let mut gradient = vec![Vector3::zeros(); u.len()];
    for (l, (value, residual)) in per_point.iter().enumerate() {
        total += value;
        let e = &keypoint_table.entries[l];
        for (&i, &phi) in e.support.iter().zip(&e.phi) {
            gradient[i as usize] += residual * (2.0 * phi);
        }
    }
    Ok(EnergyValue {
        total,
        terms: vec![(Term::Corr, total)],
        gradient,
    })
}

/// Bidirectional Chamfer distance: mean squared nearest-neighbor distance
/// from `a` to `b` plus the same from `b` to `a`.
pub fn chamfer(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyGeometry(
            "Chamfer distance needs nonempty sets".into(),
        ));
    }
    let tree_b = KdTree::build(b);
    let tree_a = KdTree::build(a);
    let a_side = par_map_range!(a.len(), |i| tree_b.nearest(&a[i]).unwrap().1);
    let b_side = par_map_range!(b.len(), |j| tree_a.nearest(&b[j]).unwrap().1);
    Ok(a_side.iter().sum::<f64>() / a.len() as f64 + b_side.iter().sum::<f64>() / b.len() as f64)
}

/// Chamfer loss between the deformed table points and a target cloud.
///
/// Nearest-neighbor assignments are held fixed within one evaluation; the
/// gradient flows through the deformed side of both directions, the standard
/// subgradient of this piecewise-smooth objective.
pub fn chamfer_loss(
    table: &ShapeTable,
    u: &DeformParams,
    target: &[Point3<f64>],
) -> Result<EnergyValue> {
    check_table_params(table, u)?;
    if target.is_empty() || table.is_empty() {
        return Err(Error::EmptyGeometry(
            "Chamfer loss needs nonempty sets".into(),
        ));
    }
    let deformed: Vec<Point3<f64>> = (0..table.len()).map(|k| table.mapping_at(k, u)).collect();
    let tree_target = KdTree::build(target);
    let tree_deformed = KdTree::build(&deformed);

    let fwd = par_map_range!(deformed.len(), |i| tree_target
        .nearest(&deformed[i])
        .unwrap());
    let rev = par_map_range!(target.len(), |j| tree_deformed.nearest(&target[j]).unwrap());

    let na = deformed.len() as f64;
    let nb = target.len() as f64;
    let mut total = 0.0;
    let mut d_deformed = vec![Vector3::zeros(); deformed.len()];
    for (i, &(t, d2)) in fwd.iter().enumerate() {
        total += d2 / na;
        d_deformed[i] += (deformed[i] - target[t as usize]) * (2.0 / na);
    }
    for (j, &(i, d2)) in rev.iter().enumerate() {
        total += d2 / nb;
        d_deformed[i as usize] += (deformed[i as usize] - target[j]) * (2.0 / nb);
    }

    let mut gradient = vec![Vector3::zeros(); u.len()];
    for (k, g) in d_deformed.iter().enumerate() {
        let e = &table.entries[k];
        for (&i, &phi) in e.support.iter().zip(&e.phi) {
            gradient[i as usize] += g * phi;
        }
    }
    Ok(EnergyValue {
        total,
        terms: vec![(Term::Chamfer, total)],
        gradient,
    })
}

/// Cofactor matrix of a 3x3: `cof[a][b] = d(det J)/d(J[a][b])`. Equals
/// `det(J) J^-T` when J is invertible and stays defined when it is not.
fn cofactor(j: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        j.m22 * j.m33 - j.m23 * j.m32,
        j.m23 * j.m31 - j.m21 * j.m33,
        j.m21 * j.m32 - j.m22 * j.m31,
        j.m13 * j.m32 - j.m12 * j.m33,
        j.m11 * j.m33 - j.m13 * j.m31,
        j.m12 * j.m31 - j.m11 * j.m32,
        j.m12 * j.m23 - j.m13 * j.m22,
        j.m13 * j.m21 - j.m11 * j.m23,
        j.m11 * j.m22 - j.m12 * j.m21,
    )
}

/// Volume-preservation loss at the nodes: `sum_i |det J(q_i) - 1|^2`.
pub fn vol_loss(node_table: &ShapeTable, u: &DeformParams) -> Result<EnergyValue> {
    check_table_params(node_table, u)?;
    let per_node = par_map_range!(node_table.len(), |k| {
        let j = node_table.mapping_jacobian_at(k, u);
        let det = j.determinant();
        (
            (det - 1.0) * (det - 1.0),
            cofactor(&j) * (2.0 * (det - 1.0)),
        )
    });
    let mut total = 0.0;
    let mut gradient = vec![Vector3::zeros(); u.len()];
    for (k, (value, dj)) in per_node.iter().enumerate() {
        total += value;
        let e = &node_table.entries[k];
        for (&i, g) in e.support.iter().zip(&e.grad) {
            gradient[i as usize] += dj * g;
        }
    }
    Ok(EnergyValue {
        total,
        terms: vec![(Term::Vol, total)],
        gradient,
    })
}

/// Local-rigidity loss at the nodes: `sum_i ||J^T(q_i) J(q_i) - I||_F^2`.
pub fn arap_loss(node_table: &ShapeTable, u: &DeformParams) -> Result<EnergyValue> {
    check_table_params(node_table, u)?;
    let per_node = par_map_range!(node_table.len(), |k| {
        let j = node_table.mapping_jacobian_at(k, u);
        let defect = j.transpose() * j - Matrix3::identity();
        (defect.norm_squared(), j * defect * 4.0)
    });
    let mut total = 0.0;
    let mut gradient = vec![Vector3::zeros(); u.len()];
    for (k, (value, dj)) in per_node.iter().enumerate() {
        total += value;
        let e = &node_table.entries[k];
        for (&i, g) in e.support.iter().zip(&e.grad) {
            gradient[i as usize] += dj * g;
        }
    }
    Ok(EnergyValue {
        total,
        terms: vec![(Term::Arap, total)],
        gradient,
    })
}

/// Blend regularizer with gradients distributed to both endpoints.
#[derive(Debug, Clone)]
pub struct BlendEnergy {
    pub total: f64,
    pub arap_term: f64,
    pub vol_term: f64,
    pub grad_a: Vec<Vector3<f64>>,
    pub grad_b: Vec<Vector3<f64>>,
}

/// Rigidity + volume losses evaluated along linear parameter blends
/// `U(alpha) = (1 - alpha) U_a + alpha U_b`, summed over the given alphas.
pub fn blend_loss(
    node_table: &ShapeTable,
    u_a: &DeformParams,
    u_b: &DeformParams,
    alphas: &[f64],
) -> Result<BlendEnergy> {
    if alphas.is_empty() {
        return Err(Error::Config("blend loss needs at least one alpha".into()));
    }
    if alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::Config(
            "blend alphas must lie strictly inside (0, 1)".into(),
        ));
    }
    if u_a.len() != u_b.len() {
        return Err(Error::DimensionMismatch {
            expected: u_a.len(),
            got: u_b.len(),
            context: "blend endpoints",
        });
    }
    let mut total = 0.0;
    let mut arap_term = 0.0;
    let mut vol_term = 0.0;
    let mut grad_a = vec![Vector3::zeros(); u_a.len()];
    let mut grad_b = vec![Vector3::zeros(); u_a.len()];
    for &alpha in alphas {
        let blended = DeformParams::lerp(u_a, u_b, alpha);
        let arap = arap_loss(node_table, &blended)?;
        let vol = vol_loss(node_table, &blended)?;
        total += arap.total + vol.total;
        arap_term += arap.total;
        vol_term += vol.total;
        for i in 0..u_a.len() {
            let g = arap.gradient[i] + vol.gradient[i];
            grad_a[i] += g * (1.0 - alpha);
            grad_b[i] += g * alpha;
        }
    }
    Ok(BlendEnergy {
        total,
        arap_term,
        vol_term,
        grad_a,
        grad_b,
    })
}

/// Which weighted combination a total energy uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Keypoint supervision: corr + vol + arap + blend under the training
    /// quadruple.
    Supervised,
    /// Chamfer replaces the correspondence term; same regularizers.
    Unsupervised,
    /// Refinement objective: chamfer + arap + vol under the inference triple.
    Inference,
    /// Sparse keypoint fitting: corr + arap + vol under the inference triple.
    SparseFit,
}

impl FitMode {
    pub fn name(&self) -> &'static str {
        match self {
            FitMode::Supervised => "supervised",
            FitMode::Unsupervised => "unsupervised",
            FitMode::Inference => "inference",
            FitMode::SparseFit => "sparse-fit",
        }
    }
}

/// Pre-evaluated parts handed to [`total_energy`]. For the blend part the
/// caller supplies the gradient with respect to whichever endpoint is being
/// optimized.
#[derive(Debug, Clone, Default)]
pub struct TotalParts {
    pub corr: Option<EnergyValue>,
    pub chamfer: Option<EnergyValue>,
    pub vol: Option<EnergyValue>,
    pub arap: Option<EnergyValue>,
    pub blend: Option<EnergyValue>,
}

/// Weighted sum of the parts a mode requires; errors if one is missing.
pub fn total_energy(
    weights: &EnergyWeights,
    mode: FitMode,
    parts: &TotalParts,
) -> Result<EnergyValue> {
    weights.validate()?;
    fn need<'a>(
        part: &'a Option<EnergyValue>,
        mode: FitMode,
        name: &'static str,
    ) -> Result<&'a EnergyValue> {
        part.as_ref().ok_or(Error::MissingPart {
            mode: mode.name(),
            part: name,
        })
    }
    let selected: Vec<(&EnergyValue, f64)> = match mode {
        FitMode::Supervised => vec![
            (need(&parts.corr, mode, "corr")?, weights.corr),
            (need(&parts.vol, mode, "vol")?, weights.vol),
            (need(&parts.arap, mode, "arap")?, weights.arap),
            (need(&parts.blend, mode, "blend")?, weights.blend),
        ],
        FitMode::Unsupervised => vec![
            (need(&parts.chamfer, mode, "chamfer")?, weights.corr),
            (need(&parts.vol, mode, "vol")?, weights.vol),
            (need(&parts.arap, mode, "arap")?, weights.arap),
            (need(&parts.blend, mode, "blend")?, weights.blend),
        ],
        FitMode::Inference => vec![
            (need(&parts.chamfer, mode, "chamfer")?, weights.infer_data),
            (need(&parts.arap, mode, "arap")?, weights.infer_arap),
            (need(&parts.vol, mode, "vol")?, weights.infer_vol),
        ],
        FitMode::SparseFit => vec![
            (need(&parts.corr, mode, "corr")?, weights.infer_data),
            (need(&parts.arap, mode, "arap")?, weights.infer_arap),
            (need(&parts.vol, mode, "vol")?, weights.infer_vol),
        ],
    };
    let k = selected[0].0.gradient.len();
    let mut total = 0.0;
    let mut terms = Vec::new();
    let mut gradient = vec![Vector3::zeros(); k];
    for (part, w) in selected {
        if part.gradient.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: part.gradient.len(),
                context: "per-part gradient length",
            });
        }
        total += w * part.total;
        terms.extend(part.terms.iter().copied());
        for (g, pg) in gradient.iter_mut().zip(&part.gradient) {
            *g += pg * w;
        }
    }
    Ok(EnergyValue {
        total,
        terms,
        gradient,
    })
}
