//! k-d tree for orthogonal (weighted ℓ∞ box) range queries.

use super::Window;
use crate::data::Dataset;

/// Maximum number of points in a leaf bucket.
pub const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf,
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
struct Node {
    // Range into `RangeTree::indices`.
    start: usize,
    end: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    kind: NodeKind,
}

/// A k-d tree over the rows of a dataset.
///
/// Splits on the widest dimension at the median. Leaves hold at most
/// [`LEAF_SIZE`] points unless every point in them coincides.
#[derive(Clone, Debug)]
pub struct RangeTree<'a> {
    data: &'a Dataset,
    indices: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> RangeTree<'a> {
    pub fn build(data: &'a Dataset) -> Self {
        let mut tree = Self {
            data,
            indices: (0..data.len()).collect(),
            nodes: Vec::new(),
        };
        if !data.is_empty() {
            tree.build_node(0, data.len());
        }
        tree
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let dim = self.data.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.indices[start..end] {
            for (d, &v) in self.data.row(i).iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let id = self.nodes.len();
        let (split_dim, spread) = (0..dim)
            .map(|d| (d, hi[d] - lo[d]))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        self.nodes.push(Node {
            start,
            end,
            lo,
            hi,
            kind: NodeKind::Leaf,
        });
        if end - start <= LEAF_SIZE || spread <= 0.0 {
            return id;
        }

        let mid = start + (end - start) / 2;
        let data = self.data;
        self.indices[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data.row(a)[split_dim].total_cmp(&data.row(b)[split_dim])
        });
        let value = data.row(self.indices[mid])[split_dim];
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].kind = NodeKind::Split {
            dim: split_dim,
            value,
            left,
            right,
        };
        id
    }

    /// Indices (ascending) of every point strictly inside `window`.
    pub fn range_query(&self, window: &Window) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.collect(0, window, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn collect(&self, id: usize, window: &Window, out: &mut Vec<usize>) {
        let node = &self.nodes[id];
        match box_relation(&node.lo, &node.hi, window) {
            Relation::Outside => {}
            Relation::Inside => out.extend_from_slice(&self.indices[node.start..node.end]),
            Relation::Partial => match node.kind {
                NodeKind::Leaf => out.extend(
                    self.indices[node.start..node.end]
                        .iter()
                        .copied()
                        .filter(|&i| window.contains(self.data.row(i))),
                ),
                NodeKind::Split { left, right, .. } => {
                    self.collect(left, window, out);
                    self.collect(right, window, out);
                }
            },
        }
    }

    /// Checks the structural invariants; used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![0usize; self.data.len()];
        for node in &self.nodes {
            match node.kind {
                NodeKind::Leaf => {
                    for &i in &self.indices[node.start..node.end] {
                        seen[i] += 1;
                    }
                    let size = node.end - node.start;
                    let degenerate = node.lo.iter().zip(&node.hi).all(|(a, b)| a == b);
                    if size > LEAF_SIZE && !degenerate {
                        return Err(format!("leaf of {size} points"));
                    }
                }
                NodeKind::Split {
                    dim,
                    value,
                    left,
                    right,
                } => {
                    let l = &self.nodes[left];
                    let r = &self.nodes[right];
                    let left_ok = self.indices[l.start..l.end]
                        .iter()
                        .all(|&i| self.data.row(i)[dim] <= value);
                    let right_ok = self.indices[r.start..r.end]
                        .iter()
                        .all(|&i| self.data.row(i)[dim] >= value);
                    if !left_ok || !right_ok {
                        return Err(format!("split on dim {dim} at {value} violated"));
                    }
                }
            }
        }
        match seen.iter().position(|&c| c != 1) {
            Some(i) => Err(format!("point {i} appears in {} leaves", seen[i])),
            None => Ok(()),
        }
    }
}

/// Brute-force range query, the reference for [`RangeTree::range_query`].
pub fn range_query_linear(data: &Dataset, window: &Window) -> Vec<usize> {
    data.rows()
        .enumerate()
        .filter(|(_, x)| window.contains(x))
        .map(|(i, _)| i)
        .collect()
}

enum Relation {
    Inside,
    Outside,
    Partial,
}

// `w_d |x_d − c_d|` is monotone in `|x_d − c_d|` under rounding, so testing the
// box corners decides containment exactly as the per-point predicate would.
fn box_relation(lo: &[f64], hi: &[f64], window: &Window) -> Relation {
    let r = window.radius;
    let mut inside = true;
    for d in 0..lo.len() {
        let (c, w) = (window.center[d], window.weights[d]);
        let far = (lo[d] - c).abs().max((hi[d] - c).abs());
        if !(w * far < r) {
            inside = false;
        }
        let near = if c < lo[d] {
            lo[d] - c
        } else if c > hi[d] {
            c - hi[d]
        } else {
            0.0
        };
        if !(w * near < r) {
            return Relation::Outside;
        }
    }
    if inside {
        Relation::Inside
    } else {
        Relation::Partial
    }
}
