//! Exact k-d tree for low-dimensional points.

use super::squared_distance;

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f32,
        left: usize,
        right: usize,
    },
}

pub(super) struct KdTree {
    dim: usize,
    /// Points reordered by the build, `dim` values each.
    points: Vec<f32>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub(super) fn new(points: &[f32], dim: usize, ids: Vec<u32>) -> Self {
        let mut order: Vec<usize> = (0..ids.len()).collect();
        let mut nodes = Vec::new();
        build(points, dim, &ids, &mut order, 0, &mut nodes);
        let mut packed = Vec::with_capacity(points.len());
        for &i in &order {
            packed.extend_from_slice(&points[i * dim..(i + 1) * dim]);
        }
        let ids = order.iter().map(|&i| ids[i]).collect();
        Self {
            dim,
            points: packed,
            ids,
            nodes,
        }
    }

    pub(super) fn nearest(&self, x: &[f32]) -> u32 {
        let mut best = (f64::INFINITY, u32::MAX);
        self.search(0, x, &mut best);
        best.1
    }

    fn search(&self, node: usize, x: &[f32], best: &mut (f64, u32)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let d = squared_distance(&self.points[i * self.dim..(i + 1) * self.dim], x);
                    let id = self.ids[i];
                    if d < best.0 || (d == best.0 && id < best.1) {
                        *best = (d, id);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = x[axis] as f64 - value as f64;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, x, best);
                // equal distances must still be visited for the id tie-break
                if diff * diff <= best.0 {
                    self.search(far, x, best);
                }
            }
        }
    }
}

/// Builds the subtree over `order` (indices into `points`) and returns its
/// node id. Leaves refer to ranges of the final `order`.
fn build(
    points: &[f32],
    dim: usize,
    ids: &[u32],
    order: &mut [usize],
    offset: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let coord = |i: usize, k: usize| points[i * dim + k];
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return nodes.len() - 1;
    }
    let axis = (0..dim)
        .max_by(|&a, &b| {
            let spread = |k: usize| {
                let (lo, hi) = order.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(coord(i, k)), hi.max(coord(i, k)))
                });
                hi as f64 - lo as f64
            };
            spread(a).total_cmp(&spread(b))
        })
        .unwrap_or(0);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        coord(a, axis)
            .total_cmp(&coord(b, axis))
            .then(ids[a].cmp(&ids[b]))
    });
    let value = coord(order[mid], axis);
    let id = nodes.len();
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build(points, dim, ids, lo, offset, nodes);
    let right = build(points, dim, ids, hi, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}
