use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted Gini impurity decrease of this split.
        gain: f64,
    },
    /// Weighted class frequencies `[unqualified, qualified]`.
    Leaf { proba: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { proba } => return proba[1],
            }
        }
    }

    pub fn impurity_decrease(&self, n_features: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_features];
        for n in &self.nodes {
            if let TreeNode::Split { feature, gain, .. } = n {
                v[*feature] += gain;
            }
        }
        v
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Copy)]
struct Entry {
    value: f64,
    row: u32,
    label: u8,
}

/// Column-major copy of the training matrix with a global sort order per
/// feature, shared by all trees.
pub(super) struct TrainingData {
    n_features: usize,
    /// `sorted[f]`: all rows ordered by feature `f` (ties by row index).
    sorted: Vec<Vec<Entry>>,
    n_rows: usize,
    weights: [f64; 2],
}

struct Best {
    feature: usize,
    /// Number of rows going left.
    n_left: usize,
    threshold: f64,
    score: f64,
}

impl TrainingData {
    pub(super) fn new(x: &Matrix, y: &[u8], weights: [f64; 2]) -> Self {
        let sorted = (0..x.n_cols())
            .map(|f| {
                let mut e: Vec<Entry> = (0..x.n_rows())
                    .map(|r| Entry {
                        value: x.get(r, f),
                        row: r as u32,
                        label: y[r],
                    })
                    .collect();
                e.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.row.cmp(&b.row)));
                e
            })
            .collect();
        TrainingData {
            n_features: x.n_cols(),
            sorted,
            n_rows: y.len(),
            weights,
        }
    }

    /// Grows one tree on the given rows (distinct row indices).
    pub(super) fn grow(&self, rows: &[usize], max_depth: usize, min_leaf: usize) -> DecisionTree {
        let n = self.n_rows;
        let mut in_sample = vec![false; n];
        for &r in rows {
            in_sample[r] = true;
        }
        let mut lists: Vec<Vec<Entry>> = self
            .sorted
            .iter()
            .map(|s| s.iter().copied().filter(|e| in_sample[e.row as usize]).collect())
            .collect();
        drop(in_sample);
        let m = rows.len();
        let mut goes_left = vec![false; n];
        let mut scratch: Vec<Entry> = Vec::with_capacity(m);
        let mut nodes = Vec::new();
        // (node slot, start, end, depth)
        let mut stack = vec![(0usize, 0usize, m, 0usize)];
        nodes.push(TreeNode::Leaf { proba: [0.0, 0.0] });

        while let Some((slot, start, end, depth)) = stack.pop() {
            let mut w = [0.0f64; 2];
            for e in &lists[0][start..end] {
                w[e.label as usize] += 1.0;
            }
            let w = [w[0] * self.weights[0], w[1] * self.weights[1]];
            let total = w[0] + w[1];
            let leaf = TreeNode::Leaf {
                proba: [w[0] / total, w[1] / total],
            };
            let count = end - start;
            if depth >= max_depth || w[0] == 0.0 || w[1] == 0.0 || count < 2 * min_leaf {
                nodes[slot] = leaf;
                continue;
            }
            let Some(best) = self.best_split(&lists, start, end, w, min_leaf) else {
                nodes[slot] = leaf;
                continue;
            };
            let parent_score = (w[0] * w[0] + w[1] * w[1]) / total;
            let gain = best.score - parent_score;

            for e in &lists[best.feature][start..end] {
                goes_left[e.row as usize] = false;
            }
            for e in &lists[best.feature][start..start + best.n_left] {
                goes_left[e.row as usize] = true;
            }
            for (f, list) in lists.iter_mut().enumerate() {
                if f == best.feature {
                    continue;
                }
                scratch.clear();
                let seg = &mut list[start..end];
                let mut k = 0;
                for i in 0..seg.len() {
                    let e = seg[i];
                    if goes_left[e.row as usize] {
                        seg[k] = e;
                        k += 1;
                    } else {
                        scratch.push(e);
                    }
                }
                seg[k..].copy_from_slice(&scratch);
            }

            let left = nodes.len();
            nodes.push(TreeNode::Leaf { proba: [0.0, 0.0] });
            let right = nodes.len();
            nodes.push(TreeNode::Leaf { proba: [0.0, 0.0] });
            nodes[slot] = TreeNode::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right,
                gain,
            };
            let mid = start + best.n_left;
            stack.push((right, mid, end, depth + 1));
            stack.push((left, start, mid, depth + 1));
        }
        DecisionTree { nodes }
    }

    /// Maximizes `Σ_c L_c²/W_L + Σ_c R_c²/W_R`, which is equivalent to
    /// minimizing the weighted Gini impurity of the children. Ties keep the
    /// lowest feature, then the lowest threshold.
    fn best_split(&self, lists: &[Vec<Entry>], start: usize, end: usize, w: [f64; 2], min_leaf: usize) -> Option<Best> {
        let total = w[0] + w[1];
        let parent_score = (w[0] * w[0] + w[1] * w[1]) / total;
        let eps = 1e-12 * parent_score.max(1e-300);
        let mut best: Option<Best> = None;
        let count = end - start;
        for f in 0..self.n_features {
            let seg = &lists[f][start..end];
            if seg[0].value == seg[count - 1].value {
                continue;
            }
            let mut l = [0.0f64; 2];
            for i in 0..count - 1 {
                let e = seg[i];
                let c = e.label as usize;
                l[c] += self.weights[c];
                let n_left = i + 1;
                let next = seg[i + 1].value;
                if e.value == next || n_left < min_leaf || count - n_left < min_leaf {
                    continue;
                }
                let r = [w[0] - l[0], w[1] - l[1]];
                let wl = l[0] + l[1];
                let wr = r[0] + r[1];
                let score = (l[0] * l[0] + l[1] * l[1]) / wl + (r[0] * r[0] + r[1] * r[1]) / wr;
                if score > parent_score + eps && best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = e.value + (next - e.value) / 2.0;
                    if threshold >= next {
                        threshold = e.value;
                    }
                    best = Some(Best {
                        feature: f,
                        n_left,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}
