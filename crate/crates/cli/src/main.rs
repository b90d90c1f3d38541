//! Command-line pipeline for nodal deformation fields.
//!
//! Subcommands cover the full flow: sample nodes on a template, precompute
//! evaluation tables, fit parameters to keypoints or point clouds, deform
//! shapes, extract and score correspondences, interpolate parameter sets,
//! and validate the analytic machinery against finite differences.
//!
//! Every run writes a `<output>.run.txt` sidecar with the fully resolved
//! configuration; `--config <sidecar>` replays it (explicit flags win).
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{Point3, Vector3};

use nodefield::energy::Term;
use nodefield::fit::{FitResult, Init, OptimConfig, OptimKind};
use nodefield::io::{self, FormatHint};
use nodefield::mls::{self, DeformParams};
use nodefield::rbf::{self, RbfSystem};
use nodefield::{
    diameter, fps_until_coverage, generate_candidates, reject_by_geodesic, reject_by_labels, Error,
    ErrorCategory, NodeSet, Result, ShapeData, TriMesh,
};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "nodefield",
    version,
    about = "Nodal deformation fields: sampling, fitting, correspondence"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample deformation nodes on a template shape.
    SampleNodes(SampleNodesArgs),
    /// Precompute a shape-function table for fixed evaluation points.
    Precompute(PrecomputeArgs),
    /// Fit deformation parameters to keypoints or a target point cloud.
    Fit(FitArgs),
    /// Apply fitted parameters to a shape.
    Deform(DeformArgs),
    /// Extract correspondences by nearest-neighbor search or composition.
    Correspond(CorrespondArgs),
    /// Generate a sequence of blended parameter sets (and shapes).
    Interpolate(InterpolateArgs),
    /// Score a predicted correspondence against ground truth.
    Eval(EvalArgs),
    /// Check partition of unity, linear reproduction, and analytic
    /// gradients against finite differences.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FieldModel {
    Mls,
    Rbf,
}

impl std::fmt::Display for FieldModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FieldModel::Mls => "mls",
            FieldModel::Rbf => "rbf",
        })
    }
}

impl std::str::FromStr for FieldModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mls" => Ok(FieldModel::Mls),
            "rbf" => Ok(FieldModel::Rbf),
            other => Err(format!("unknown field model `{}`", other)),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Replay a resolved configuration sidecar; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random choice in this run.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). 1 guarantees sequential execution.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SampleNodesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Template shape (OFF/OBJ/PLY/XYZ by extension).
    #[arg(long)]
    template: Option<PathBuf>,
    /// Per-vertex label sidecar (one integer per line).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Number of dense candidates to draw.
    #[arg(long)]
    count: Option<usize>,
    /// Surface jitter (mesh) or Gaussian sigma (point cloud) for candidates.
    #[arg(long)]
    offset: Option<f64>,
    /// Node support radius as a fraction of the shape diameter.
    #[arg(long)]
    radius_frac: Option<f64>,
    /// Candidate rejection policy: none, labels, geodesic.
    #[arg(long)]
    reject: Option<String>,
    /// Ball radius used by the rejection policies (defaults to the node
    /// radius; geodesic rejection needs it below half the threshold, or
    /// flat regions are rejected too).
    #[arg(long)]
    reject_radius: Option<f64>,
    /// Geodesic rejection threshold as a fraction of shape diameter.
    #[arg(long)]
    geo_fraction: Option<f64>,
    /// Append unit-cube corner nodes with this radius (volumetric mode).
    #[arg(long)]
    aux_cube: Option<f64>,
    /// Moment-matrix singularity gate.
    #[arg(long)]
    tol: Option<f64>,
    /// Output node file (.nodes).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PrecomputeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Evaluation points: any shape file; its vertices/points are used.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output table cache (.tbl).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `sparse` (keypoint pairs) or `chamfer` (whole-cloud registration).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Keypoint pairs (.corr: template-index target-index), sparse mode.
    #[arg(long)]
    keypoints: Option<PathBuf>,
    /// Target shape.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Field reconstruction: mls (approximating) or rbf (interpolating).
    #[arg(long)]
    field_model: Option<FieldModel>,
    /// Data-term weight.
    #[arg(long)]
    lambda_data: Option<f64>,
    /// Rigidity weight at nodes.
    #[arg(long)]
    lambda_arap: Option<f64>,
    /// Volume-preservation weight at nodes.
    #[arg(long)]
    lambda_vol: Option<f64>,
    /// `adam` or `gd`.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    /// Per-step multiplier on the step size.
    #[arg(long)]
    step_decay: Option<f64>,
    /// Relative energy-decrease convergence threshold.
    #[arg(long)]
    conv_tol: Option<f64>,
    /// Warm-start parameters (.defo) instead of zeros.
    #[arg(long)]
    init_params: Option<PathBuf>,
    /// Disable the direct least-squares fast path for unregularized fits.
    #[arg(long)]
    no_direct: bool,
    #[arg(long)]
    tol: Option<f64>,
    /// RBF kernel constant C.
    #[arg(long)]
    rbf_c: Option<f64>,
    /// RBF kernel constant eps0.
    #[arg(long)]
    rbf_eps0: Option<f64>,
    /// Output parameters (.defo).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-step energy trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct DeformArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Cached shape-function table from `precompute`; its content hash must
    /// match the template, nodes, and tolerance given here.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    field_model: Option<FieldModel>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    rbf_c: Option<f64>,
    #[arg(long)]
    rbf_eps0: Option<f64>,
    /// Output shape; faces are carried over from the template.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrespondArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `nn` (direct assignment) or `compose` (through deformed templates).
    #[arg(long)]
    mode: Option<String>,
    /// Source shape (nn mode).
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target shape (nn mode).
    #[arg(long)]
    target: Option<PathBuf>,
    /// Deformed template registered to x (compose mode).
    #[arg(long)]
    dx: Option<PathBuf>,
    /// First shape (compose mode).
    #[arg(long)]
    x: Option<PathBuf>,
    /// Deformed template registered to y (compose mode).
    #[arg(long)]
    dy: Option<PathBuf>,
    /// Second shape (compose mode).
    #[arg(long)]
    y: Option<PathBuf>,
    /// Output correspondence (.corr).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InterpolateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    params_a: Option<PathBuf>,
    #[arg(long)]
    params_b: Option<PathBuf>,
    /// Number of frames including both endpoints.
    #[arg(long)]
    steps: Option<usize>,
    /// Frames are written as <prefix>NNN.defo (and .off with a template).
    #[arg(long)]
    out_prefix: Option<String>,
    /// Template to deform per frame (optional).
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    field_model: Option<FieldModel>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    rbf_c: Option<f64>,
    #[arg(long)]
    rbf_eps0: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Mesh carrying the targets; geodesic errors are measured on it.
    #[arg(long)]
    target_mesh: Option<PathBuf>,
    /// Write the cumulative accuracy curve here (CSV).
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Evaluation points: any shape file.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    field_model: Option<FieldModel>,
    /// How many points get the finite-difference gradient check.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    rbf_c: Option<f64>,
    #[arg(long)]
    rbf_eps0: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help/version are successful exits
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            let code = match &e {
                Error::Config(_) => 1,
                other => match other.category() {
                    ErrorCategory::Data => 2,
                    ErrorCategory::Numerical => 3,
                },
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::SampleNodes(args) => sample_nodes(args),
        Cmd::Precompute(args) => precompute(args),
        Cmd::Fit(args) => fit(args),
        Cmd::Deform(args) => deform(args),
        Cmd::Correspond(args) => correspond(args),
        Cmd::Interpolate(args) => interpolate(args),
        Cmd::Eval(args) => eval(args),
        Cmd::Validate(args) => validate(args),
    }
}

fn setup_common(rc: &mut RunConfig, common: &CommonArgs) -> Result<u64> {
    let threads = rc.get("threads", common.threads, 0usize)?;
    if let Err(e) = nodefield::configure_threads(threads) {
        eprintln!("note: thread pool already configured ({})", e);
    }
    rc.get("seed", common.seed, 0u64)
}

fn load_shape(path: &Path) -> Result<ShapeData> {
    io::load_shape(path, FormatHint::Auto)
}

fn load_mesh(path: &Path) -> Result<TriMesh> {
    match load_shape(path)? {
        ShapeData::Mesh(m) => Ok(m),
        ShapeData::Points(_) => Err(Error::InvalidGeometry(format!(
            "{} has no faces but a mesh is required here",
            path.display()
        ))),
    }
}

fn sample_nodes(args: SampleNodesArgs) -> Result<ExitCode> {
    let mut rc = RunConfig::load("sample-nodes", args.common.config.as_deref())?;
    let seed = setup_common(&mut rc, &args.common)?;
    let template_path = rc.get_path("template", args.template)?;
    let labels_path = rc.get_path_optional("labels", args.labels)?;
    let count = rc.get("count", args.count, 5000usize)?;
    let offset = rc.get("offset", args.offset, 0.02f64)?;
    let radius_frac = rc.get("radius-frac", args.radius_frac, 0.2f64)?;
    let reject = rc.get("reject", args.reject, "none".to_string())?;
    let geo_fraction = rc.get("geo-fraction", args.geo_fraction, 0.2f64)?;
    let tol = rc.get("tol", args.tol, mls::DEFAULT_SINGULARITY_TOL)?;
    let aux_cube = rc.get_optional("aux-cube", args.aux_cube)?;
    let out = rc.get_path("out", args.out)?;

    let mut shape = load_shape(&template_path)?;
    if let Some(lp) = &labels_path {
        let labels = io::load_labels(lp, Some(shape.points().len()))?;
        match &mut shape {
            ShapeData::Mesh(m) => m.labels = Some(labels),
            ShapeData::Points(p) => p.labels = Some(labels),
        }
    }
    let shape_diameter = diameter(shape.points());
    let radius = radius_frac * shape_diameter;
    let reject_radius = rc.get("reject-radius", args.reject_radius, radius)?;

    let candidates = generate_candidates(&shape, count, offset, seed)?;
    let candidates = match reject.as_str() {
        "none" => candidates,
        "labels" => {
            let mesh = shape.as_mesh().ok_or_else(|| {
                Error::InvalidGeometry("label rejection needs a mesh template".into())
            })?;
            reject_by_labels(&candidates, mesh, reject_radius)?
        }
        "geodesic" => {
            let mesh = shape.as_mesh().ok_or_else(|| {
                Error::InvalidGeometry("geodesic rejection needs a mesh template".into())
            })?;
            reject_by_geodesic(&candidates, mesh, reject_radius, geo_fraction)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown rejection policy `{}` (none, labels, geodesic)",
                other
            )))
        }
    };

    let mut nodes = fps_until_coverage(&candidates, shape.points(), radius, tol)?;
    if let Some(aux) = aux_cube {
        nodes = nodefield::add_auxiliary_cube_nodes(&nodes, aux)?;
    }
    io::save_nodes(&nodes, &out)?;
    rc.write_sidecar(&out)?;
    println!(
        "sampled {} nodes (radius {} = {} x diameter {}) from {} candidates",
        nodes.len(),
        radius,
        radius_frac,
        shape_diameter,
        candidates.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn precompute(args: PrecomputeArgs) -> Result<ExitCode> {
    let mut rc = RunConfig::load("precompute", args.common.config.as_deref())?;
    setup_common(&mut rc, &args.common)?;
    let points_path = rc.get_path("points", args.points)?;
    let nodes_path = rc.get_path("nodes", args.nodes)?;
    let tol = rc.get("tol", args.tol, mls::DEFAULT_SINGULARITY_TOL)?;
    let out = rc.get_path("out", args.out)?;

    let shape = load_shape(&points_path)?;
    let nodes = io::load_nodes(&nodes_path)?;
    let table = mls::precompute_table(shape.points(), &nodes, tol)?;
    let hash = io::table_content_hash(shape.points(), &nodes, tol);
    io::save_table(&table, hash, &out)?;
    rc.write_sidecar(&out)?;
    let mean_support =
        table.entries.iter().map(|e| e.support.len()).sum::<usize>() as f64 / table.len() as f64;
    println!(
        "precomputed table: {} points x {} nodes, mean support {:.1}, hash {:016x}",
        table.len(),
        table.node_count,
        mean_support,
        hash
    );
    Ok(ExitCode::SUCCESS)
}

struct FieldBackend {
    model: FieldModel,
    rbf: Option<RbfSystem>,
}

impl FieldBackend {
    fn build(model: FieldModel, nodes: &NodeSet, c: f64, eps0: f64) -> Result<Self> {
        let rbf = match model {
            FieldModel::Mls => None,
            FieldModel::Rbf => Some(rbf::build_rbf(nodes, c, eps0)?),
        };
        Ok(Self { model, rbf })
    }

    /// Table for fitting/evaluation. For RBF the table lives in kernel-weight
    /// space; convert results with `to_params` / `from_params`.
    fn table(&self, points: &[Point3<f64>], nodes: &NodeSet, tol: f64) -> Result<mls::ShapeTable> {
        match self.model {
            FieldModel::Mls => mls::precompute_table(points, nodes, tol),
            FieldModel::Rbf => Ok(self.rbf.as_ref().unwrap().field_table(points)),
        }
    }

    fn table_partial(
        &self,
        points: &[Point3<f64>],
        nodes: &NodeSet,
        tol: f64,
    ) -> (mls::ShapeTable, Vec<usize>) {
        match self.model {
            FieldModel::Mls => mls::precompute_table_partial(points, nodes, tol),
            FieldModel::Rbf => (self.rbf.as_ref().unwrap().field_table(points), Vec::new()),
        }
    }

    /// Convert the optimizer's parameters to nodal parameters.
    fn to_params(&self, fitted: &DeformParams) -> Result<DeformParams> {
        match self.model {
            FieldModel::Mls => Ok(fitted.clone()),
            FieldModel::Rbf => self.rbf.as_ref().unwrap().params_from_weights(fitted),
        }
    }

    /// Convert nodal parameters to the table's parameter space.
    fn from_params(&self, params: &DeformParams) -> Result<DeformParams> {
        match self.model {
            FieldModel::Mls => Ok(params.clone()),
            FieldModel::Rbf => self.rbf.as_ref().unwrap().weights_from_params(params),
        }
    }
}

fn write_trace_csv(path: &Path, fit: &FitResult) -> Result<()> {
    let mut csv = String::from("step,total,corr,chamfer,arap,vol\n");
    for row in &fit.trace {
        let find = |t: Term| {
            row.terms
                .iter()
                .find(|(k, _)| *k == t)
                .map(|(_, v)| v.to_string())
                .unwrap_or_default()
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.step,
            row.total,
            find(Term::Corr),
            find(Term::Chamfer),
            find(Term::Arap),
            find(Term::Vol),
        ));
    }
    std::fs::write(path, csv).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn fit(args: FitArgs) -> Result<ExitCode> {
    let mut rc = RunConfig::load("fit", args.common.config.as_deref())?;
    let seed = setup_common(&mut rc, &args.common)?;
    let mode = rc.get("mode", args.mode, "sparse".to_string())?;
    let template_path = rc.get_path("template", args.template)?;
    let nodes_path = rc.get_path("nodes", args.nodes)?;
    let keypoints_path = rc.get_path_optional("keypoints", args.keypoints)?;
    let target_path = rc.get_path("target", args.target)?;
    let field_model = rc.get("field-model", args.field_model, FieldModel::Mls)?;
    let lambda_data = rc.get("lambda-data", args.lambda_data, 1.0f64)?;
    let lambda_arap = rc.get("lambda-arap", args.lambda_arap, 1e-4f64)?;
    let lambda_vol = rc.get("lambda-vol", args.lambda_vol, 1e-3f64)?;
    let optimizer = rc.get("optimizer", args.optimizer, "adam".to_string())?;
    let max_steps = rc.get("max-steps", args.max_steps, 500usize)?;
    let step_size = rc.get("step-size", args.step_size, 1e-2f64)?;
    let step_decay = rc.get("step-decay", args.step_decay, 1.0f64)?;
    let conv_tol = rc.get("conv-tol", args.conv_tol, 1e-9f64)?;
    let init_params_path = rc.get_path_optional("init-params", args.init_params)?;
    let allow_direct = rc.get(
        "allow-direct",
        if args.no_direct { Some(false) } else { None },
        true,
    )?;
    let tol = rc.get("tol", args.tol, mls::DEFAULT_SINGULARITY_TOL)?;
    let rbf_c = rc.get("rbf-c", args.rbf_c, rbf::DEFAULT_C)?;
    let rbf_eps0 = rc.get("rbf-eps0", args.rbf_eps0, rbf::DEFAULT_EPS0)?;
    let out = rc.get_path("out", args.out)?;
    let trace_path = rc.get_path_optional("trace", args.trace)?;

    let template = load_shape(&template_path)?;
    let target = load_shape(&target_path)?;
    let nodes = io::load_nodes(&nodes_path)?;
    let backend = FieldBackend::build(field_model, &nodes, rbf_c, rbf_eps0)?;

    let kind = match optimizer.as_str() {
        "adam" => OptimKind::Adam,
        "gd" => OptimKind::GradientDescent,
        other => {
            return Err(Error::Config(format!(
                "unknown optimizer `{}` (adam, gd)",
                other
            )))
        }
    };
    let init = match &init_params_path {
        Some(p) => Init::Provided(backend.from_params(&io::load_params(p)?)?),
        None => Init::Zeros,
    };
    let config = OptimConfig {
        max_steps,
        step_size,
        step_decay,
        kind,
        tol: conv_tol,
        seed,
        weights: nodefield::EnergyWeights {
            infer_data: lambda_data,
            infer_arap: lambda_arap,
            infer_vol: lambda_vol,
            ..Default::default()
        },
        init,
        allow_direct,
    };

    let (node_table, dropped) = backend.table_partial(&nodes.positions, &nodes, tol);
    if !dropped.is_empty() {
        eprintln!(
            "warning: {} node positions lack coverage and are excluded from the regularizers",
            dropped.len()
        );
    }

    let fit_result = match mode.as_str() {
        "sparse" => {
            let kp_path = keypoints_path
                .ok_or_else(|| Error::Config("sparse mode needs --keypoints".into()))?;
            let pairs = io::load_corr_pairs(&kp_path)?;
            let template_pts = template.points();
            let target_pts = target.points();
            let mut sources = Vec::with_capacity(pairs.len());
            let mut targets = Vec::with_capacity(pairs.len());
            for &(src, tgt) in &pairs {
                if src as usize >= template_pts.len() {
                    return Err(Error::DimensionMismatch {
                        expected: template_pts.len(),
                        got: src as usize,
                        context: "keypoint source index within template",
                    });
                }
                if tgt as usize >= target_pts.len() {
                    return Err(Error::DimensionMismatch {
                        expected: target_pts.len(),
                        got: tgt as usize,
                        context: "keypoint target index within target",
                    });
                }
                sources.push(template_pts[src as usize]);
                targets.push(target_pts[tgt as usize]);
            }
            let kp_table = backend.table(&sources, &nodes, tol)?;
            nodefield::fit_sparse(&kp_table, &targets, &node_table, &config)?
        }
        "chamfer" => {
            let template_table = backend.table(template.points(), &nodes, tol)?;
            nodefield::fit_chamfer(&template_table, target.points(), &node_table, &config)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown fit mode `{}` (sparse, chamfer)",
                other
            )))
        }
    };

    let params = backend.to_params(&fit_result.params)?;
    io::save_params(&params, &out)?;
    if let Some(tp) = &trace_path {
        write_trace_csv(tp, &fit_result)?;
    }
    rc.write_sidecar(&out)?;
    for w in &fit_result.warnings {
        eprintln!("warning: {}", w);
    }
    let last = fit_result.trace.last().expect("at least one step");
    println!(
        "fit ({} steps, converged: {}): total energy {:.6e}",
        fit_result.steps, fit_result.converged, last.total
    );
    Ok(ExitCode::SUCCESS)
}

fn deform(args: DeformArgs) -> Result<ExitCode> {
    let mut rc = RunConfig::load("deform", args.common.config.as_deref())?;
    setup_common(&mut rc, &args.common)?;
    let template_path = rc.get_path("template", args.template)?;
    let nodes_path = rc.get_path("nodes", args.nodes)?;
    let params_path = rc.get_path("params", args.params)?;
    let table_path = rc.get_path_optional("table", args.table)?;
    let field_model = rc.get("field-model", args.field_model, FieldModel::Mls)?;
    let tol = rc.get("tol", args.tol, mls::DEFAULT_SINGULARITY_TOL)?;
    let rbf_c = rc.get("rbf-c", args.rbf_c, rbf::DEFAULT_C)?;
    let rbf_eps0 = rc.get("rbf-eps0", args.rbf_eps0, rbf::DEFAULT_EPS0)?;
    let out = rc.get_path("out", args.out)?;

    let template = load_shape(&template_path)?;
    let nodes = io::load_nodes(&nodes_path)?;
    let params = io::load_params(&params_path)?;
    let backend = FieldBackend::build(field_model, &nodes, rbf_c, rbf_eps0)?;
    let table = match (&table_path, field_model) {
        (Some(tp), FieldModel::Mls) => {
            let (cached, stored_hash) = io::load_table(tp)?;
            let expected = io::table_content_hash(template.points(), &nodes, tol);
            if stored_hash != expected {
                return Err(Error::Config(format!(
                    "cached table {} was built for different inputs (hash {:016x}, expected {:016x})",
                    tp.display(),
                    stored_hash,
                    expected
                )));
            }
            cached
        }
        (Some(_), FieldModel::Rbf) => {
            return Err(Error::Config(
                "cached tables apply to the mls field model only".into(),
            ))
        }
        (None, _) => backend.table(template.points(), &nodes, tol)?,
    };
    let mapped = table.eval_mapping(&backend.from_params(&params)?)?;

    let deformed = match &template {
        ShapeData::Mesh(m) => ShapeData::Mesh(TriMesh {
            vertices: mapped,
            faces: m.faces.clone(),
            labels: m.labels.clone(),
        }),
        ShapeData::Points(p) => ShapeData::Points(nodefield::PointSet {
            points: mapped,
            labels: p.labels.clone(),
        }),
    };
    io::save_shape(&deformed, &out)?;
    rc.write_sidecar(&out)?;
    println!("deformed {} points", deformed.points().len());
    Ok(ExitCode::SUCCESS)
}

fn correspond(args: CorrespondArgs) -> Result<ExitCode> {
    let mut rc = RunConfig::load("correspond", args.common.config.as_deref())?;
    setup_common(&mut rc, &args.common)?;
    let mode = rc.get("mode", args.mode, "nn".to_string())?;
    let out = rc.get_path("out", args.out)?;

    let corr = match mode.as_str() {
        "nn" => {
            let source = load_shape(&rc.get_path("source", args.source)?)?;
            let target = load_shape(&rc.get_path("target", args.target)?)?;
            nodefield::nn_assign(source.points(), target.points())?
        }
        "compose" => {
            let dx = load_shape(&rc.get_path("dx", args.dx)?)?;
            let x = load_shape(&rc.get_path("x", args.x)?)?;
            let dy = load_shape(&rc.get_path("dy", args.dy)?)?;
            let y = load_shape(&rc.get_path("y", args.y)?)?;
            nodefield::compose_pi(dx.points(), x.points(), dy.points(), y.points())?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown correspond mode `{}` (nn, compose)",
                other
            )))
        }
    };
    io::save_corr(&corr, &out)?;
    rc.write_sidecar(&out)?;
    println!("wrote {} correspondences", corr.len());
    Ok(ExitCode::SUCCESS)
}

fn interpolate(args: InterpolateArgs) -> Result<ExitCode> {
    let mut rc = RunConfig::load("interpolate", args.common.config.as_deref())?;
    setup_common(&mut rc, &args.common)?;
    let a_path = rc.get_path("params-a", args.params_a)?;
    let b_path = rc.get_path("params-b", args.params_b)?;
    let steps = rc.get("steps", args.steps, 10usize)?;
    let prefix = rc.get_required::<String>("out-prefix", args.out_prefix)?;
    let template_path = rc.get_path_optional("template", args.template)?;
    let nodes_path = rc.get_path_optional("nodes", args.nodes)?;
    let field_model = rc.get("field-model", args.field_model, FieldModel::Mls)?;
    let tol = rc.get("tol", args.tol, mls::DEFAULT_SINGULARITY_TOL)?;
    let rbf_c = rc.get("rbf-c", args.rbf_c, rbf::DEFAULT_C)?;
    let rbf_eps0 = rc.get("rbf-eps0", args.rbf_eps0, rbf::DEFAULT_EPS0)?;

    let u_a = io::load_params(&a_path)?;
    let u_b = io::load_params(&b_path)?;
    let frames = nodefield::interpolate_params(&u_a, &u_b, steps)?;
    for (i, frame) in frames.iter().enumerate() {
        io::save_params(frame, &PathBuf::from(format!("{}{:03}.defo", prefix, i)))?;
    }

    if let (Some(tp), Some(np)) = (&template_path, &nodes_path) {
        let template = load_shape(tp)?;
        let nodes = io::load_nodes(np)?;
        let backend = FieldBackend::build(field_model, &nodes, rbf_c, rbf_eps0)?;
        let table = backend.table(template.points(), &nodes, tol)?;
        let (node_table, _) = backend.table_partial(&nodes.positions, &nodes, tol);
        let mut csv = String::from("frame,alpha,arap,vol\n");
        for (i, frame) in frames.iter().enumerate() {
            let fitted = backend.from_params(frame)?;
            let mapped = table.eval_mapping(&fitted)?;
            let deformed = match &template {
                ShapeData::Mesh(m) => ShapeData::Mesh(TriMesh {
                    vertices: mapped,
                    faces: m.faces.clone(),
                    labels: None,
                }),
                ShapeData::Points(_) => ShapeData::Points(nodefield::PointSet {
                    points: mapped,
                    labels: None,
                }),
            };
            io::save_shape(&deformed, &PathBuf::from(format!("{}{:03}.off", prefix, i)))?;
            let arap = nodefield::arap_loss(&node_table, &fitted)?.total;
            let vol = nodefield::vol_loss(&node_table, &fitted)?.total;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                i,
                i as f64 / (steps - 1) as f64,
                arap,
                vol
            ));
        }
        let trace_path = PathBuf::from(format!("{}trace.csv", prefix));
        std::fs::write(&trace_path, csv).map_err(|e| Error::Io {
            path: trace_path.clone(),
            source: e,
        })?;
    }
    rc.write_sidecar(&PathBuf::from(format!("{}frames", prefix)))?;
    println!("wrote {} frames to {}*", frames.len(), prefix);
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let mut rc = RunConfig::load("eval", args.common.config.as_deref())?;
    setup_common(&mut rc, &args.common)?;
    let pred_path = rc.get_path("pred", args.pred)?;
    let gt_path = rc.get_path("gt", args.gt)?;
    let mesh_path = rc.get_path("target-mesh", args.target_mesh)?;
    let curve_path = rc.get_path_optional("curve", args.curve)?;

    let pred = io::load_corr(&pred_path)?;
    let gt = io::load_corr(&gt_path)?;
    let mesh = load_mesh(&mesh_path)?;
    let report = nodefield::geodesic_error(&pred, &gt, &mesh)?;
    if let Some(cp) = &curve_path {
        let mut csv = String::from("threshold,fraction_below\n");
        for (t, f) in &report.curve {
            csv.push_str(&format!("{},{}\n", t, f));
        }
        std::fs::write(cp, csv).map_err(|e| Error::Io {
            path: cp.clone(),
            source: e,
        })?;
        rc.write_sidecar(cp)?;
    }
    println!("mean_geodesic_error = {}", report.mean);
    println!("disconnected_pairs = {}", report.disconnected);
    Ok(ExitCode::SUCCESS)
}

fn validate(args: ValidateArgs) -> Result<ExitCode> {
    use rand::{Rng, SeedableRng};
    let mut rc = RunConfig::load("validate", args.common.config.as_deref())?;
    let seed = setup_common(&mut rc, &args.common)?;
    let nodes_path = rc.get_path("nodes", args.nodes)?;
    let points_path = rc.get_path("points", args.points)?;
    let field_model = rc.get("field-model", args.field_model, FieldModel::Mls)?;
    let samples = rc.get("samples", args.samples, 200usize)?;
    let tol = rc.get("tol", args.tol, mls::DEFAULT_SINGULARITY_TOL)?;
    let rbf_c = rc.get("rbf-c", args.rbf_c, rbf::DEFAULT_C)?;
    let rbf_eps0 = rc.get("rbf-eps0", args.rbf_eps0, rbf::DEFAULT_EPS0)?;

    let nodes = io::load_nodes(&nodes_path)?;
    let shape = load_shape(&points_path)?;
    let points = shape.points();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let ok = match field_model {
        FieldModel::Mls => {
            let table = mls::precompute_table(points, &nodes, tol)?;
            let mut pou_dev = 0.0_f64;
            let mut linrep_err = 0.0_f64;
            for (k, entry) in table.entries.iter().enumerate() {
                let sum: f64 = entry.phi.iter().sum();
                pou_dev = pou_dev.max((sum - 1.0).abs());
                let mut rep = Vector3::zeros();
                for (&i, &phi) in entry.support.iter().zip(&entry.phi) {
                    rep += nodes.positions[i as usize].coords * phi;
                }
                linrep_err = linrep_err.max((rep - table.points[k].coords).norm());
            }
            let h = 1e-5;
            let mut fd_err = 0.0_f64;
            for _ in 0..samples.min(points.len()) {
                let k = rng.random_range(0..points.len());
                let x = points[k];
                let e = match mls::shape_function_gradients(&x, &nodes, tol) {
                    Ok(e) => e,
                    Err(_) => continue,
                };
                for (s, &i) in e.support.iter().enumerate() {
                    for d in 0..3 {
                        let mut xp = x;
                        let mut xm = x;
                        xp[d] += h;
                        xm[d] -= h;
                        let phi_at = |p: &Point3<f64>| -> f64 {
                            mls::shape_functions(p, &nodes, tol)
                                .ok()
                                .and_then(|ev| {
                                    ev.support
                                        .iter()
                                        .position(|&j| j == i)
                                        .map(|pos| ev.phi[pos])
                                })
                                .unwrap_or(0.0)
                        };
                        let fd = (phi_at(&xp) - phi_at(&xm)) / (2.0 * h);
                        let denom = e.grad[s][d].abs().max(1.0);
                        fd_err = fd_err.max(((e.grad[s][d] - fd) / denom).abs());
                    }
                }
            }
            println!("partition_of_unity_max_deviation = {:e}", pou_dev);
            println!("linear_reproduction_max_error = {:e}", linrep_err);
            println!("fd_gradient_max_relative_error = {:e}", fd_err);
            pou_dev <= 1e-9 && linrep_err <= 1e-7 && fd_err <= 1e-5
        }
        FieldModel::Rbf => {
            let system = rbf::build_rbf(&nodes, rbf_c, rbf_eps0)?;
            let u = DeformParams {
                values: (0..nodes.len())
                    .map(|_| {
                        Vector3::new(
                            rng.random_range(-0.1..0.1),
                            rng.random_range(-0.1..0.1),
                            rng.random_range(-0.1..0.1),
                        )
                    })
                    .collect(),
            };
            let field = system.weights(&u)?;
            let interp_err = nodes
                .positions
                .iter()
                .zip(&u.values)
                .map(|(q, want)| (field.eval(q) - want).norm())
                .fold(0.0_f64, f64::max);
            let h = 1e-5;
            let mut fd_err = 0.0_f64;
            for _ in 0..samples.min(points.len()) {
                let k = rng.random_range(0..points.len());
                let x = points[k];
                let j = field.field_jacobian(&x);
                for d in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[d] += h;
                    xm[d] -= h;
                    let col = (field.eval(&xp) - field.eval(&xm)) / (2.0 * h);
                    for r in 0..3 {
                        let denom = j[(r, d)].abs().max(1.0);
                        fd_err = fd_err.max(((j[(r, d)] - col[r]) / denom).abs());
                    }
                }
            }
            println!("interpolation_max_error = {:e}", interp_err);
            println!("fd_gradient_max_relative_error = {:e}", fd_err);
            interp_err <= 1e-8 && fd_err <= 1e-5
        }
    };
    println!("validate: {}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
