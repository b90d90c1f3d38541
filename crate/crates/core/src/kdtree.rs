//! A small 3D kd-tree for nearest-neighbor and radius queries.
//!
//! Query results are defined to match a brute-force scan exactly: the nearest
//! neighbor minimizes `(squared distance, index)` lexicographically, so ties
//! always resolve to the lowest point index regardless of tree layout.

use nalgebra::Point3;

const LEAF_SIZE: usize = 12;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a borrowed slice of points.
pub struct KdTree<'a> {
    points: &'a [Point3<f64>],
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Point3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let n = points.len();
        let root = if n == 0 {
            nodes.push(Node::Leaf { start: 0, end: 0 });
            0
        } else {
            build_rec(points, &mut order, &mut nodes, 0, n, 0)
        };
        Self {
            points,
            order,
            nodes,
            root,
        }
    }

    /// Index of the nearest point to `q` and the squared distance, matching
    /// a brute-force `(d2, index)` lexicographic minimum. `None` on an empty
    /// tree.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(u32, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_rec(self.root, q, &mut best);
        Some((best.1, best.0))
    }

    fn nearest_rec(&self, node: usize, q: &Point3<f64>, best: &mut (f64, u32)) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start..*end] {
                    let d2 = (self.points[idx as usize] - q).norm_squared();
                    if d2 < best.0 || (d2 == best.0 && idx < best.1) {
                        *best = (d2, idx);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
                ..
            } => {
                let delta = q[*axis] - value;
                let (near, far) = if delta <= 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.nearest_rec(near, q, best);
                // Equality must still descend: a point on the far side can tie
                // on distance and win on index.
                if delta * delta <= best.0 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// All point indices within `radius` (inclusive) of `center`, ascending.
    pub fn within_radius(&self, center: &Point3<f64>, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        if radius >= 0.0 {
            self.radius_rec(self.root, center, radius, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_rec(
        &self,
        node: usize,
        center: &Point3<f64>,
        radius: f64,
        r2: f64,
        out: &mut Vec<u32>,
    ) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start..*end] {
                    if (self.points[idx as usize] - center).norm_squared() <= r2 {
                        out.push(idx);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
                ..
            } => {
                let delta = center[*axis] - value;
                if delta <= radius {
                    self.radius_rec(*left, center, radius, r2, out);
                }
                if -delta <= radius {
                    self.radius_rec(*right, center, radius, r2, out);
                }
            }
        }
    }
}

fn build_rec(
    points: &[Point3<f64>],
    order: &mut [u32],
    nodes: &mut Vec<Node>,
    start: usize,
    end: usize,
    offset_base: usize,
) -> usize {
    let len = end - start;
    if len <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return nodes.len() - 1;
    }

    let slice = &mut order[(start - offset_base)..(end - offset_base)];

    // split on the axis with the largest spread
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &idx in slice.iter() {
        let p = &points[idx as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap())
        .unwrap();
    if hi[axis] - lo[axis] <= 0.0 {
        // all points identical on every axis; no useful split
        nodes.push(Node::Leaf { start, end });
        return nodes.len() - 1;
    }

    let mid = len / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        let pa = points[a as usize][axis];
        let pb = points[b as usize][axis];
        pa.partial_cmp(&pb).unwrap().then_with(|| a.cmp(&b))
    });
    let value = points[slice[mid] as usize][axis];

    let node_idx = nodes.len();
    nodes.push(Node::Leaf { start: 0, end: 0 }); // placeholder
    let left = build_rec(points, order, nodes, start, start + mid, offset_base);
    let right = build_rec(points, order, nodes, start + mid, end, offset_base);
    nodes[node_idx] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    node_idx
}

/// Brute-force nearest neighbor with the same tie rule; the reference the
/// tree is tested against.
pub fn nearest_brute_force(points: &[Point3<f64>], q: &Point3<f64>) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - q).norm_squared();
        match best {
            Some((_, bd)) if d2 >= bd => {}
            _ => best = Some((i as u32, d2)),
        }
    }
    best
}
