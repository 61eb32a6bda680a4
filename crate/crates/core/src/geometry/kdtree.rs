use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::scalar::Scalar;

/// One kNN answer: the point's index in the indexed cloud and its Euclidean
/// distance to the query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub distance: T,
}

#[derive(Clone, Debug)]
enum Node<T> {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        dim: u8,
        value: T,
        left: u32,
        right: u32,
    },
}

/// Exact kd-tree over `D`-dimensional points.
///
/// Leaves hold at most `leaf_size` points. Results are totally ordered by
/// (distance, index) so that equidistant points resolve to the smaller index.
#[derive(Clone, Debug)]
pub struct KdTree<T, const D: usize> {
    points: Vec<[T; D]>,
    order: Vec<u32>,
    nodes: Vec<Node<T>>,
    leaf_size: usize,
}

#[derive(Clone, Copy, Debug)]
struct Candidate<T> {
    dist2: T,
    index: u32,
}

impl<T: Scalar> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Candidate<T> {}

impl<T: Scalar> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .partial_cmp(&other.dist2)
            .unwrap_or(Ordering::Equal)
            .then(self.index.cmp(&other.index))
    }
}

impl<T: Scalar> KdTree<T, 3> {
    /// Index over the XYZ coordinates of a cloud.
    pub fn from_cloud(cloud: &PointCloud<T>, leaf_size: usize) -> Result<Self> {
        Self::build(cloud.iter().map(|p| p.to_array()).collect(), leaf_size)
    }

    pub fn knn_point(&self, query: &Point3<T>, k: usize) -> Result<Vec<Neighbor<T>>> {
        self.knn(&query.to_array(), k)
    }

    pub fn nearest_point(&self, query: &Point3<T>) -> Neighbor<T> {
        self.nearest(&query.to_array())
    }
}

impl<T: Scalar> KdTree<T, 2> {
    /// Index over the XY coordinates of a cloud.
    pub fn from_cloud_xy(cloud: &PointCloud<T>, leaf_size: usize) -> Result<Self> {
        Self::build(cloud.iter().map(|p| p.xy()).collect(), leaf_size)
    }
}

impl<T: Scalar, const D: usize> KdTree<T, D> {
    pub fn build(points: Vec<[T; D]>, leaf_size: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("empty cloud"));
        }
        if leaf_size == 0 {
            return Err(Error::invalid("leaf_size must be at least 1"));
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::invalid("cloud too large for index"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        let mut tree = KdTree {
            order: (0..points.len() as u32).collect(),
            points,
            nodes: Vec::new(),
            leaf_size,
        };
        tree.build_node(0, tree.points.len());
        Ok(tree)
    }

    fn build_node(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= self.leaf_size {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][dim]
                .partial_cmp(&points[b as usize][dim])
                .unwrap_or(Ordering::Equal)
        });
        let value = self.points[self.order[mid] as usize][dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id as usize] = Node::Split {
            dim: dim as u8,
            value,
            left,
            right,
        };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let mut lo = [T::infinity(); D];
        let mut hi = [T::neg_infinity(); D];
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for d in 0..D {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (0..D)
            .max_by(|&a, &b| {
                (hi[a] - lo[a])
                    .partial_cmp(&(hi[b] - lo[b]))
                    .unwrap_or(Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Stored coordinates of point `i`.
    pub fn point(&self, i: usize) -> &[T; D] {
        &self.points[i]
    }

    /// The `k` nearest points, ascending by (distance, index).
    pub fn knn(&self, query: &[T; D], k: usize) -> Result<Vec<Neighbor<T>>> {
        let mut out = Vec::with_capacity(k);
        self.knn_into(query, k, &mut out)?;
        Ok(out)
    }

    /// As [`KdTree::knn`], reusing the caller's buffer.
    pub fn knn_into(&self, query: &[T; D], k: usize, out: &mut Vec<Neighbor<T>>) -> Result<()> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if k > self.points.len() {
            return Err(Error::invalid(format!(
                "k exceeds cloud size ({k} > {})",
                self.points.len()
            )));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        out.clear();
        out.extend(heap.into_sorted_vec().into_iter().map(|c| Neighbor {
            index: c.index as usize,
            distance: c.dist2.sqrt(),
        }));
        Ok(())
    }

    pub fn nearest(&self, query: &[T; D]) -> Neighbor<T> {
        let mut heap = BinaryHeap::with_capacity(2);
        self.search(0, query, 1, &mut heap);
        let c = heap.pop().expect("index is non-empty");
        Neighbor {
            index: c.index as usize,
            distance: c.dist2.sqrt(),
        }
    }

    fn search(&self, node: u32, q: &[T; D], k: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let p = &self.points[i as usize];
                    let mut d2 = T::zero();
                    for d in 0..D {
                        let t = p[d] - q[d];
                        d2 += t * t;
                    }
                    let c = Candidate { dist2: d2, index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff < T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, heap);
                // Equal distance must still be visited: the far side may hold
                // a tie with a smaller index.
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is full").dist2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}
