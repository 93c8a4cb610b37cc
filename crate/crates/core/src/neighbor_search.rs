//! Exact k-nearest-neighbor queries under the Euclidean metric.
//!
//! Neighbors are ordered by `(squared distance, index)`, so equal distances
//! resolve to the lower point index. [`knn_distances`] answers queries from a
//! kd-tree; [`brute_force_knn`] scans all pairs and is the reference output.
//! Both compute distances with [`squared_distance`], so their results agree
//! bit for bit.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::{squared_distance, SampleMatrix};

/// Distances and indices of the `k` nearest neighbors of every point, self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDistances {
    n: usize,
    k: usize,
    dist: Vec<f64>,
    idx: Vec<usize>,
}

impl NeighborDistances {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Ascending distances from point `i` to its 1st..k-th neighbors.
    pub fn distances(&self, i: usize) -> &[f64] {
        &self.dist[i * self.k..(i + 1) * self.k]
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.idx[i * self.k..(i + 1) * self.k]
    }

    /// Distance from point `i` to its k-th neighbor.
    pub fn kth_distance(&self, i: usize) -> f64 {
        self.dist[i * self.k + self.k - 1]
    }

    pub fn kth_index(&self, i: usize) -> usize {
        self.idx[i * self.k + self.k - 1]
    }

    /// Whether any point has a coincident neighbor.
    pub fn has_duplicates(&self) -> bool {
        (0..self.n).any(|i| self.dist[i * self.k] == 0.0)
    }

    fn from_rows(n: usize, k: usize, rows: Vec<Vec<(f64, usize)>>) -> Self {
        let mut dist = Vec::with_capacity(n * k);
        let mut idx = Vec::with_capacity(n * k);
        for row in rows {
            debug_assert_eq!(row.len(), k);
            for (d2, j) in row {
                dist.push(d2.sqrt());
                idx.push(j);
            }
        }
        NeighborDistances { n, k, dist, idx }
    }
}

fn validate(points: &SampleMatrix, k: usize) -> Result<()> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::invalid_argument("neighbor order k must be at least 1"));
    }
    if k >= n {
        return Err(Error::invalid_argument(format!(
            "neighbor order k={k} requires more than {k} points, got n={n}"
        )));
    }
    points.check_finite()
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// All-pairs reference search, O(n²·d).
pub fn brute_force_knn(points: &SampleMatrix, k: usize) -> Result<NeighborDistances> {
    brute_force_knn_with(points, k, Execution::default())
}

pub fn brute_force_knn_with(
    points: &SampleMatrix,
    k: usize,
    exec: Execution,
) -> Result<NeighborDistances> {
    validate(points, k)?;
    let n = points.rows();
    let rows = exec.map_range(n, |i| {
        let q = points.row(i);
        let mut all: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (squared_distance(q, points.row(j)), j))
            .collect();
        all.sort_by(by_distance_then_index);
        all.truncate(k);
        all
    });
    Ok(NeighborDistances::from_rows(n, k, rows))
}

/// Exact k-NN of every point against the rest of the set.
pub fn knn_distances(points: &SampleMatrix, k: usize) -> Result<NeighborDistances> {
    knn_distances_with(points, k, Execution::default())
}

pub fn knn_distances_with(
    points: &SampleMatrix,
    k: usize,
    exec: Execution,
) -> Result<NeighborDistances> {
    validate(points, k)?;
    let tree = KdTree::build(points);
    let n = points.rows();
    let rows = exec.map_range(n, |i| tree.query(i, k));
    Ok(NeighborDistances::from_rows(n, k, rows))
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

struct KdTree<'a> {
    points: &'a SampleMatrix,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn build(points: &'a SampleMatrix) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.rows()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.rows());
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let points = self.points;
        let slice = &mut self.order[start..end];

        // widest coordinate
        let (mut dim, mut spread) = (0, -1.0);
        for j in 0..points.cols() {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points.get(i, j);
                (lo.min(v), hi.max(v))
            });
            if hi - lo > spread {
                spread = hi - lo;
                dim = j;
            }
        }
        if spread <= 0.0 {
            return id;
        }

        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            points
                .get(a, dim)
                .partial_cmp(&points.get(b, dim))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let value = points.get(slice[mid], dim);
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn query(&self, qi: usize, k: usize) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(0, qi, k, &mut best);
        best
    }

    fn search(&self, node: usize, qi: usize, k: usize, best: &mut Vec<(f64, usize)>) {
        let q = self.points.row(qi);
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j == qi {
                        continue;
                    }
                    let cand = (squared_distance(q, self.points.row(j)), j);
                    if best.len() == k
                        && by_distance_then_index(&cand, &best[k - 1]) != Ordering::Less
                    {
                        continue;
                    }
                    let pos = best
                        .binary_search_by(|probe| by_distance_then_index(probe, &cand))
                        .unwrap_or_else(|p| p);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, qi, k, best);
                // every point on the far side is at least |diff| away along `dim`;
                // equality must still be visited since a lower index may tie
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.search(far, qi, k, best);
                }
            }
        }
    }
}
