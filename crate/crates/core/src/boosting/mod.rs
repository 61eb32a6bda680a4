//! Second-order gradient boosting of depth-limited regression trees on a
//! binary logistic objective, with histogram split finding, per-round row
//! and column sampling, positive-class gradient scaling and early stopping
//! on validation logloss.

mod histogram;

use log::debug;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::class_counts;
use crate::matrix::Matrix;
use crate::model::{default_feature_names, NamedImportance};

pub use histogram::{BinMapper, BinStat, HistogramLayout, NodeHistogram};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub max_depth: usize,
    /// Learning rate.
    pub eta: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub num_boost_round: usize,
    pub early_stopping_rounds: usize,
    pub n_bins: usize,
    /// Multiplier on positive-row gradients; `None` uses the training
    /// negative-to-positive ratio.
    pub scale_pos_weight: Option<f64>,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Minimum gain required to split.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            max_depth: 8,
            eta: 0.05,
            subsample: 0.8,
            colsample_bytree: 0.8,
            num_boost_round: 1000,
            early_stopping_rounds: 50,
            n_bins: 256,
            scale_pos_weight: None,
            lambda: 1.0,
            min_child_weight: 1.0,
            gamma: 0.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta must be positive"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid("subsample must be in (0, 1]"));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return Err(Error::invalid("colsample_bytree must be in (0, 1]"));
        }
        if self.lambda < 0.0 || self.min_child_weight < 0.0 || self.gamma < 0.0 {
            return Err(Error::invalid("lambda, min_child_weight and gamma must be non-negative"));
        }
        if let Some(w) = self.scale_pos_weight {
            if !(w > 0.0) {
                return Err(Error::invalid("scale_pos_weight must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GbtNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        /// Histogram bin of `threshold` in the training binning.
        bin: u8,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf { weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<GbtNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                GbtNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                GbtNode::Leaf { weight } => return *weight,
            }
        }
    }

    fn predict_binned(&self, row: &[u8]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                GbtNode::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *bin { *left } else { *right },
                GbtNode::Leaf { weight } => return *weight,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub feature_names: Vec<String>,
    /// Margin before any tree (logit of the base probability 0.5).
    pub base_margin: f64,
    pub trees: Vec<RegressionTree>,
    /// Index of the round with minimal validation logloss; `None` when no
    /// round was completed.
    pub best_iteration: Option<usize>,
    /// Total split gain per feature over the trees up to `best_iteration`,
    /// normalized to sum 1.
    pub feature_importance: Vec<f64>,
    pub scale_pos_weight: f64,
    /// Weighted training logloss after each round.
    pub train_logloss: Vec<f64>,
    /// Validation logloss after each round.
    pub valid_logloss: Vec<f64>,
    pub notes: Vec<String>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[1e-15, 1 - 1e-15]`.
pub fn logloss(y: &[u8], p: &[f64]) -> f64 {
    weighted_logloss(y, p, 1.0)
}

/// Logloss where positive rows carry weight `pos_weight` (weighted mean).
pub fn weighted_logloss(y: &[u8], p: &[f64], pos_weight: f64) -> f64 {
    let mut s = 0.0;
    let mut w_sum = 0.0;
    for (&yi, &pi) in y.iter().zip(p) {
        let pi = pi.clamp(1e-15, 1.0 - 1e-15);
        let (w, l) = if yi == 1 { (pos_weight, -pi.ln()) } else { (1.0, -(1.0 - pi).ln()) };
        s += w * l;
        w_sum += w;
    }
    if w_sum > 0.0 {
        s / w_sum
    } else {
        0.0
    }
}

/// First and second derivatives of the weighted logistic loss with respect
/// to the margin.
#[inline]
pub fn grad_hess(y: u8, margin: f64, pos_weight: f64) -> (f64, f64) {
    let p = sigmoid(margin);
    let w = if y == 1 { pos_weight } else { 1.0 };
    (w * (p - y as f64), w * p * (1.0 - p))
}

struct Split {
    feature: usize,
    bin: u8,
    gain: f64,
    left: BinStat,
}

struct PendingNode {
    slot: usize,
    start: usize,
    end: usize,
    hist: NodeHistogram,
    total: BinStat,
}

struct TreeBuilder<'a> {
    params: &'a GbtParams,
    mapper: &'a BinMapper,
    binned: &'a [u8],
    n_cols: usize,
    grad: &'a [f64],
    hess: &'a [f64],
}

impl TreeBuilder<'_> {
    fn leaf_weight(&self, s: BinStat) -> f64 {
        -s.grad / (s.hess + self.params.lambda)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn best_split(&self, layout: &HistogramLayout, hist: &NodeHistogram, total: BinStat) -> Option<Split> {
        let parent = self.score(total.grad, total.hess);
        let mut best: Option<Split> = None;
        for (&f, &off) in layout.features.iter().zip(&layout.offsets) {
            let nb = self.mapper.n_bins(f);
            let mut left = BinStat::default();
            for b in 0..nb - 1 {
                let s = hist.bins[off + b];
                left.grad += s.grad;
                left.hess += s.hess;
                left.count += s.count;
                let right = total.sub(left);
                if left.count < 1.0 || right.count < 1.0 {
                    continue;
                }
                if left.hess < self.params.min_child_weight || right.hess < self.params.min_child_weight {
                    continue;
                }
                let gain = 0.5
                    * (self.score(left.grad, left.hess) + self.score(right.grad, right.hess) - parent)
                    - self.params.gamma;
                if gain > 0.0 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        bin: b as u8,
                        gain,
                        left,
                    });
                }
            }
        }
        best
    }

    /// Grows one tree depth-wise over `rows` (reordered in place).
    fn grow(&self, layout: &HistogramLayout, rows: &mut [u32]) -> RegressionTree {
        let root_hist = layout.build(self.binned, self.n_cols, rows, self.grad, self.hess);
        let mut total = BinStat::default();
        for &r in rows.iter() {
            total.add(self.grad[r as usize], self.hess[r as usize]);
        }
        let mut nodes = vec![GbtNode::Leaf { weight: 0.0 }];
        let mut level = vec![PendingNode {
            slot: 0,
            start: 0,
            end: rows.len(),
            hist: root_hist,
            total,
        }];
        for depth in 0..=self.params.max_depth {
            let mut next = Vec::new();
            for node in level {
                let split = if depth < self.params.max_depth {
                    self.best_split(layout, &node.hist, node.total)
                } else {
                    None
                };
                let Some(split) = split else {
                    nodes[node.slot] = GbtNode::Leaf {
                        weight: self.leaf_weight(node.total),
                    };
                    continue;
                };
                let seg = &mut rows[node.start..node.end];
                let mut k = 0;
                for i in 0..seg.len() {
                    let r = seg[i] as usize;
                    if self.binned[r * self.n_cols + split.feature] <= split.bin {
                        seg.swap(i, k);
                        k += 1;
                    }
                }
                let mid = node.start + k;
                let right_total = node.total.sub(split.left);
                let (l_rows, r_rows) = (&rows[node.start..mid], &rows[mid..node.end]);
                let (l_hist, r_hist) = if l_rows.len() <= r_rows.len() {
                    let l = layout.build(self.binned, self.n_cols, l_rows, self.grad, self.hess);
                    let r = layout.subtract(&node.hist, &l);
                    (l, r)
                } else {
                    let r = layout.build(self.binned, self.n_cols, r_rows, self.grad, self.hess);
                    let l = layout.subtract(&node.hist, &r);
                    (l, r)
                };
                let left = nodes.len();
                let right = left + 1;
                nodes.push(GbtNode::Leaf { weight: 0.0 });
                nodes.push(GbtNode::Leaf { weight: 0.0 });
                nodes[node.slot] = GbtNode::Split {
                    feature: split.feature,
                    threshold: self.mapper.cuts[split.feature][split.bin as usize],
                    bin: split.bin,
                    left,
                    right,
                    gain: split.gain,
                };
                next.push(PendingNode {
                    slot: left,
                    start: node.start,
                    end: mid,
                    hist: l_hist,
                    total: split.left,
                });
                next.push(PendingNode {
                    slot: right,
                    start: mid,
                    end: node.end,
                    hist: r_hist,
                    total: right_total,
                });
            }
            if next.is_empty() {
                break;
            }
            level = next;
        }
        RegressionTree { nodes }
    }
}

fn check_xy(x: &Matrix, y: &[u8], what: &str) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::invalid(format!("{what}: feature rows and labels differ in length")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: feature matrix contains non-finite values")));
    }
    Ok(())
}

pub fn fit_gbt(x_train: &Matrix, y_train: &[u8], x_val: &Matrix, y_val: &[u8], params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    check_xy(x_train, y_train, "training set")?;
    check_xy(x_val, y_val, "validation set")?;
    if x_val.n_rows() == 0 {
        return Err(Error::invalid("empty validation set"));
    }
    if x_val.n_cols() != x_train.n_cols() {
        return Err(Error::invalid("validation feature arity differs from training"));
    }
    class_counts(y_val)?;
    let counts = class_counts(y_train)?;
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::degenerate("degenerate labels: a single class is present in training"));
    }
    let n = x_train.n_rows();
    let n_cols = x_train.n_cols();
    let pos_weight = params
        .scale_pos_weight
        .unwrap_or(counts[0] as f64 / counts[1] as f64);

    let mapper = BinMapper::fit(x_train, params.n_bins)?;
    let binned = mapper.transform(x_train);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_rows_round = ((n as f64) * params.subsample).floor().max(1.0) as usize;
    let n_cols_tree = ((n_cols as f64) * params.colsample_bytree).floor().max(1.0) as usize;

    let mut margin = vec![0.0; n];
    let mut val_margin = vec![0.0; x_val.n_rows()];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::new();
    let mut train_hist = Vec::new();
    let mut valid_hist = Vec::new();
    let mut best: Option<(usize, f64)> = None;

    for round in 0..params.num_boost_round {
        for i in 0..n {
            let (g, h) = grad_hess(y_train[i], margin[i], pos_weight);
            grad[i] = g;
            hess[i] = h;
        }
        let mut rows: Vec<u32> = if n_rows_round < n {
            let mut r: Vec<u32> = sample(&mut rng, n, n_rows_round).into_iter().map(|i| i as u32).collect();
            r.sort_unstable();
            r
        } else {
            (0..n as u32).collect()
        };
        let features: Vec<usize> = if n_cols_tree < n_cols {
            let mut f = sample(&mut rng, n_cols, n_cols_tree).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..n_cols).collect()
        };
        let layout = HistogramLayout::new(&mapper, features);
        let builder = TreeBuilder {
            params,
            mapper: &mapper,
            binned: &binned,
            n_cols,
            grad: &grad,
            hess: &hess,
        };
        let tree = builder.grow(&layout, &mut rows);

        for (i, m) in margin.iter_mut().enumerate() {
            *m += params.eta * tree.predict_binned(&binned[i * n_cols..(i + 1) * n_cols]);
        }
        for (i, m) in val_margin.iter_mut().enumerate() {
            *m += params.eta * tree.predict_row(x_val.row(i));
        }
        trees.push(tree);

        let p: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
        train_hist.push(weighted_logloss(y_train, &p, pos_weight));
        let pv: Vec<f64> = val_margin.iter().map(|&m| sigmoid(m)).collect();
        let vl = logloss(y_val, &pv);
        valid_hist.push(vl);
        if best.is_none_or(|(_, b)| vl < b) {
            best = Some((round, vl));
        }
        let best_round = best.expect("set above").0;
        if round - best_round >= params.early_stopping_rounds {
            debug!("early stopping at round {round}, best iteration {best_round}");
            break;
        }
    }

    let best_iteration = best.map(|(r, _)| r);
    let feature_importance = gain_importance(&trees[..best_iteration.map_or(0, |b| b + 1)], n_cols);
    Ok(GbtModel {
        params: params.clone(),
        feature_names: default_feature_names(n_cols),
        base_margin: 0.0,
        trees,
        best_iteration,
        feature_importance,
        scale_pos_weight: pos_weight,
        train_logloss: train_hist,
        valid_logloss: valid_hist,
        notes: vec![
            format!("lambda: {} (library default)", params.lambda),
            format!(
                "min_child_weight: {} (library default)",
                params.min_child_weight
            ),
        ],
    })
}

/// Summed split gain per feature, normalized to sum 1 (all zero when no
/// tree has a split).
fn gain_importance(trees: &[RegressionTree], n_features: usize) -> Vec<f64> {
    let mut v = vec![0.0; n_features];
    for t in trees {
        for node in &t.nodes {
            if let GbtNode::Split { feature, gain, .. } = node {
                v[*feature] += gain;
            }
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

impl GbtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Number of trees used by default for prediction.
    pub fn n_trees_used(&self) -> usize {
        self.best_iteration.map_or(0, |b| b + 1)
    }

    /// Probability of the qualified class using the trees up to
    /// `best_iteration`.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict_proba_up_to(x, self.n_trees_used())
    }

    /// `sigmoid(base + Σ_{t < n_trees} eta * tree_t(x))`.
    pub fn predict_proba_up_to(&self, x: &Matrix, n_trees: usize) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features() {
            return Err(Error::invalid(format!(
                "feature arity mismatch: model expects {}, input has {}",
                self.n_features(),
                x.n_cols()
            )));
        }
        let trees = &self.trees[..n_trees.min(self.trees.len())];
        Ok(x.rows()
            .map(|row| {
                let m: f64 = trees.iter().map(|t| self.params.eta * t.predict_row(row)).sum();
                sigmoid(self.base_margin + m)
            })
            .collect())
    }

    pub fn importance(&self) -> NamedImportance {
        NamedImportance::new(self.feature_names.clone(), self.feature_importance.clone())
    }
}

pub fn predict_proba(model: &GbtModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict_proba(x)
}

pub fn gbt_importance(model: &GbtModel) -> NamedImportance {
    model.importance()
}

#[cfg(test)]
mod tests;
