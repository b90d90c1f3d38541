//! Shared generators and oracles for the integration suites. Everything here
//! is independent of the library's internal evaluation paths: oracles are
//! brute force by construction.
#![allow(dead_code)] // each test binary uses its own subset

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nodefield::mls::DeformParams;
use nodefield::{NodeSet, TriMesh};

/// Latitude-longitude sphere mesh; `lat = 32, lon = 33` gives 1025 vertices.
pub fn lat_lon_sphere(lat: usize, lon: usize) -> TriMesh {
    let mut vertices = vec![Point3::new(0.0, 0.0, 1.0)];
    for i in 1..lat {
        let theta = std::f64::consts::PI * i as f64 / lat as f64;
        for j in 0..lon {
            let phi = std::f64::consts::TAU * j as f64 / lon as f64;
            vertices.push(Point3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, -1.0));
    let last = (vertices.len() - 1) as u32;
    let mut faces = Vec::new();
    for j in 0..lon as u32 {
        faces.push([0, 1 + j, 1 + (j + 1) % lon as u32]);
    }
    for i in 0..(lat as u32 - 2) {
        for j in 0..lon as u32 {
            let a = 1 + i * lon as u32 + j;
            let b = 1 + i * lon as u32 + (j + 1) % lon as u32;
            let c = 1 + (i + 1) * lon as u32 + j;
            let d = 1 + (i + 1) * lon as u32 + (j + 1) % lon as u32;
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    let base = 1 + (lat as u32 - 2) * lon as u32;
    for j in 0..lon as u32 {
        faces.push([last, base + (j + 1) % lon as u32, base + j]);
    }
    TriMesh::new(vertices, faces, None).unwrap()
}

/// Nodes uniform in the unit ball with one shared radius.
pub fn ball_nodes(k: usize, radius: f64, seed: u64) -> NodeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(k);
    while positions.len() < k {
        let p = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.coords.norm() <= 1.0 {
            positions.push(p);
        }
    }
    NodeSet::new(positions, vec![radius; k], None).unwrap()
}

/// Covered evaluation points near the nodes. `boundary_margin` keeps every
/// point at least that far from any support-ball boundary and node position.
pub fn covered_points(
    nodes: &NodeSet,
    n: usize,
    boundary_margin: f64,
    seed: u64,
) -> Vec<Point3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        assert!(
            attempts < 10_000 * n,
            "could not sample {} covered points",
            n
        );
        let i = rng.random_range(0..nodes.len());
        let r = nodes.radii[i];
        let x = nodes.positions[i]
            + Vector3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
            ) * r;
        let clear = nodes.positions.iter().zip(&nodes.radii).all(|(q, &rad)| {
            let d = (x - q).norm();
            d > boundary_margin && (d - rad).abs() > boundary_margin
        });
        // identities degrade like eps / sigma_min near the singularity gate,
        // so sample the comfortably covered regime
        let (count, sigma) = nodefield::mls::support_and_sigma_min(&x, nodes);
        if clear
            && count >= 4
            && sigma > 1e-6
            && nodefield::shape_functions(&x, nodes, nodefield::DEFAULT_SINGULARITY_TOL).is_ok()
        {
            out.push(x);
        }
    }
    out
}

/// Rotation from a seeded axis and angle (Rodrigues form).
pub fn rotation(seed: u64, max_angle: f64) -> Matrix3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis: Vector3<f64> = loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 {
            break v / n;
        }
    };
    let angle: f64 = rng.random_range(0.0..max_angle);
    rodrigues(&axis, angle)
}

pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = Matrix3::new(
        0.0, -axis.z, axis.y, //
        axis.z, 0.0, -axis.x, //
        -axis.y, axis.x, 0.0,
    );
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

pub fn random_params(k: usize, scale: f64, seed: u64) -> DeformParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DeformParams {
        values: (0..k)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                )
            })
            .collect(),
    }
}

/// Greedy farthest-point subset of a point list; ties go to the lowest index.
pub fn fps_indices(points: &[Point3<f64>], count: usize) -> Vec<usize> {
    assert!(count <= points.len());
    let centroid = points.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / points.len() as f64;
    let first = (0..points.len())
        .max_by(|&a, &b| {
            let da = (points[a].coords - centroid).norm_squared();
            let db = (points[b].coords - centroid).norm_squared();
            da.partial_cmp(&db).unwrap().then_with(|| b.cmp(&a))
        })
        .unwrap();
    let mut selected = vec![first];
    let mut dist2: Vec<f64> = points
        .iter()
        .map(|p| (p - points[first]).norm_squared())
        .collect();
    while selected.len() < count {
        let next = (0..points.len())
            .max_by(|&a, &b| {
                dist2[a]
                    .partial_cmp(&dist2[b])
                    .unwrap()
                    .then_with(|| b.cmp(&a))
            })
            .unwrap();
        selected.push(next);
        for (i, p) in points.iter().enumerate() {
            let d2 = (p - points[next]).norm_squared();
            if d2 < dist2[i] {
                dist2[i] = d2;
            }
        }
    }
    selected
}

/// Print the per-criterion verdict line, then enforce it.
pub fn report(name: &str, ok: bool, detail: &str) {
    println!(
        "[{}] {}: {}",
        if ok { "PASS" } else { "FAIL" },
        name,
        detail
    );
    assert!(ok, "{} failed: {}", name, detail);
}
