use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{dist2, PointCloud};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// A static kd-tree over the points of a [`PointCloud`].
///
/// The tree stores indices only; queries take the cloud again so the tree
/// can be shared without borrowing.
#[derive(Debug, Clone)]
pub struct KdTree {
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> Self {
        let mut tree = KdTree {
            order: (0..cloud.len()).collect(),
            nodes: Vec::new(),
        };
        if !cloud.is_empty() {
            tree.build_node(cloud, 0, cloud.len());
        }
        tree
    }

    fn build_node(&mut self, cloud: &PointCloud, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the axis of largest spread
        let dim = cloud.dim();
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for axis in 0..dim {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| cloud.point(i)[axis])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        if best_spread <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            cloud.point(a)[best_axis].total_cmp(&cloud.point(b)[best_axis])
        });
        let value = cloud.point(self.order[mid])[best_axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(cloud, start, mid);
        let right = self.build_node(cloud, mid, end);
        self.nodes[id] = Node::Split {
            axis: best_axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `n` nearest points to `query` as `(squared distance, index)`,
    /// sorted ascending with ties broken by index.
    pub fn nearest(
        &self,
        cloud: &PointCloud,
        query: &[f64],
        n: usize,
        exclude: Option<usize>,
    ) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(n + 1);
        if !self.nodes.is_empty() && n > 0 {
            self.search(0, cloud, query, n, exclude, &mut heap);
        }
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|c| (c.0, c.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn search(
        &self,
        node: usize,
        cloud: &PointCloud,
        query: &[f64],
        n: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let cand = Candidate(dist2(cloud.point(i), query), i);
                    if heap.len() < n {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, cloud, query, n, exclude, heap);
                // `<=` so equal-distance points on the far side can still win the index tie-break
                if heap.len() < n || diff * diff <= heap.peek().unwrap().0 {
                    self.search(far, cloud, query, n, exclude, heap);
                }
            }
        }
    }
}
