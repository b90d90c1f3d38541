//! Deformation fields from sparse nodal parameters.
//!
//! A deformation of 3D space is represented by a small set of fixed nodes,
//! each carrying a 3-vector parameter and a compact support radius. The
//! continuous field and its exact first-order derivatives are reconstructed
//! in closed form by moving-least-squares shape functions, which makes
//! rigidity and volume regularization cheap and lets evaluation tables be
//! precomputed once and reused across parameter sets.
//!
//! The crate covers the full pipeline:
//!
//! - [`geom`] / [`io`]: shapes, node sets, parameters, correspondences, and
//!   their exact text formats.
//! - [`sampling`]: node placement with label/geodesic rejection and
//!   farthest-point selection until the surface is covered.
//! - [`mls`]: shape functions, analytic gradients, and precomputed tables.
//! - [`rbf`]: the global multiquadric interpolation baseline.
//! - [`energy`]: correspondence, Chamfer, volume, rigidity, and blend losses
//!   with analytic parameter gradients.
//! - [`fit`]: first-order fitting, interpolation sequences, sparse-to-dense
//!   correspondence.
//! - [`correspond`]: nearest-neighbor composition and geodesic-error
//!   evaluation.
//!
//! With the `parallel` feature (default) the per-point inner loops run on
//! rayon; results are bitwise identical to the sequential fallback because
//! every reduction happens in index order.

pub mod correspond;
pub mod energy;
pub mod error;
pub mod fit;
pub mod geom;
pub mod io;
pub mod kdtree;
pub mod mls;
pub mod par;
pub mod rbf;
pub mod sampling;

#[cfg(test)]
pub(crate) mod test_support;

pub use correspond::{compose_pi, geodesic_error, nn_assign, Correspondence, GeodesicErrorReport};
pub use energy::{
    arap_loss, blend_loss, chamfer, chamfer_loss, corr_loss, total_energy, vol_loss, EnergyValue,
    EnergyWeights, FitMode, Term,
};
pub use error::{Error, ErrorCategory, Result};
pub use fit::{
    fit_chamfer, fit_sparse, interpolate_params, minimize, sparse_to_dense, FitResult, Init,
    OptimConfig, OptimKind,
};
pub use geom::{
    diameter, normalize_unit_sphere, NodeSet, NormalizationRecord, PointSet, ShapeData, TriMesh,
};
pub use mls::{
    eval_field_at, eval_mapping_at, eval_mapping_jacobian_at, precompute_table,
    precompute_table_partial, shape_function_gradients, shape_functions, DeformParams, ShapeTable,
    DEFAULT_SINGULARITY_TOL,
};
pub use par::configure_threads;
pub use rbf::{build_rbf, rbf_interpolate, rbf_jacobian, rbf_kernel, RbfField, RbfSystem};
pub use sampling::{
    add_auxiliary_cube_nodes, check_coverage, fps_until_coverage, generate_candidates,
    reject_by_geodesic, reject_by_labels, CoverageReport,
};
