//! Shared generators for unit tests: seeded node sets, covered evaluation
//! points, and random rotations.

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::NodeSet;
use crate::mls::{shape_functions, DEFAULT_SINGULARITY_TOL};

/// Nodes uniform in the unit ball, all with the same support radius.
pub fn random_node_set(k: usize, radius: f64, seed: u64) -> NodeSet {
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

/// Covered evaluation points near the nodes, kept away from support
/// boundaries and node positions so finite differences behave.
pub fn random_covered_points(nodes: &NodeSet, n: usize, seed: u64) -> Vec<Point3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        assert!(attempts < 1000 * n, "could not find {} covered points", n);
        let i = rng.random_range(0..nodes.len());
        let r = nodes.radii[i];
        let x = nodes.positions[i]
            + Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ) * r;
        let clear = nodes.positions.iter().zip(&nodes.radii).all(|(q, &rad)| {
            let d = (x - q).norm();
            d > 1e-3 && (d - rad).abs() > 1e-3
        });
        // identities degrade like eps / sigma_min near the singularity gate,
        // so sample the comfortably covered regime
        let (count, sigma) = crate::mls::support_and_sigma_min(&x, nodes);
        if clear
            && count >= 4
            && sigma > 1e-6
            && shape_functions(&x, nodes, DEFAULT_SINGULARITY_TOL).is_ok()
        {
            out.push(x);
        }
    }
    out
}

/// Uniform random parameters with entries in `[-scale, scale]`.
pub fn random_params(k: usize, scale: f64, seed: u64) -> crate::mls::DeformParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    crate::mls::DeformParams {
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

/// Rotation from a seeded axis-angle pair (Rodrigues form).
pub fn random_rotation(seed: u64) -> Matrix3<f64> {
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
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let k = Matrix3::new(
        0.0, -axis.z, axis.y, //
        axis.z, 0.0, -axis.x, //
        -axis.y, axis.x, 0.0,
    );
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}
