//! Random-forest classifier: per-tree row sampling without replacement,
//! greedy weighted-Gini trees with exhaustive midpoint thresholds, balanced
//! class weights and mean-decrease-in-impurity importance.

mod tree;

use log::info;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{default_feature_names, NamedImportance};

pub use tree::{DecisionTree, TreeNode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    /// `w_c = n / (2 n_c)`.
    Balanced,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub max_samples: f64,
    pub class_weight: ClassWeight,
    pub min_samples_leaf: usize,
    /// Worker threads for tree fitting; 0 means all available cores.
    pub n_jobs: usize,
    pub seed: u64,
    /// Training sets larger than this are pre-subsampled once.
    pub subsample_cap_rows: usize,
    pub subsample_cap_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 100,
            max_depth: 20,
            max_samples: 0.5,
            class_weight: ClassWeight::Balanced,
            min_samples_leaf: 1,
            n_jobs: 1,
            seed: 0,
            subsample_cap_rows: 1_000_000,
            subsample_cap_fraction: 0.3,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::invalid("n_estimators must be positive"));
        }
        if !(self.max_samples > 0.0 && self.max_samples <= 1.0) {
            return Err(Error::invalid("max_samples must be in (0, 1]"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be positive"));
        }
        if !(self.subsample_cap_fraction > 0.0 && self.subsample_cap_fraction <= 1.0) {
            return Err(Error::invalid("subsample_cap_fraction must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<DecisionTree>,
    /// Mean decrease in impurity, normalized to sum 1.
    pub feature_importance: Vec<f64>,
    /// Rows actually used for fitting (after any pre-subsampling).
    pub n_rows: usize,
    /// Class counts `[unqualified, qualified]` of those rows.
    pub class_counts: [usize; 2],
    /// Settings chosen by the library rather than the caller.
    pub notes: Vec<String>,
}

pub(crate) fn class_counts(y: &[u8]) -> Result<[usize; 2]> {
    let mut c = [0usize; 2];
    for &v in y {
        match v {
            0 | 1 => c[v as usize] += 1,
            _ => return Err(Error::invalid(format!("label {v} is not binary"))),
        }
    }
    Ok(c)
}

pub(crate) fn thread_pool(n_jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n_jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

pub fn fit_forest(x: &Matrix, y: &[u8], params: &ForestParams) -> Result<ForestModel> {
    params.validate()?;
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::invalid("empty feature matrix"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::invalid("feature rows and labels differ in length"));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature matrix contains non-finite values"));
    }
    let counts = class_counts(y)?;
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::degenerate("degenerate labels: a single class is present"));
    }

    let (x, y) = if x.n_rows() > params.subsample_cap_rows {
        let keep = ((x.n_rows() as f64) * params.subsample_cap_fraction).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xA5A5_5A5A);
        let mut rows = sample(&mut rng, x.n_rows(), keep).into_vec();
        rows.sort_unstable();
        info!(
            "random forest: {} training rows exceed {}, subsampled to {}",
            x.n_rows(),
            params.subsample_cap_rows,
            rows.len()
        );
        let y: Vec<u8> = rows.iter().map(|&r| y[r]).collect();
        (x.select_rows(&rows), y)
    } else {
        (x.clone(), y.to_vec())
    };
    let counts = class_counts(&y)?;
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::degenerate("degenerate labels after subsampling"));
    }
    let n = y.len();
    let weights = match params.class_weight {
        ClassWeight::Balanced => [
            n as f64 / (2.0 * counts[0] as f64),
            n as f64 / (2.0 * counts[1] as f64),
        ],
        ClassWeight::Uniform => [1.0, 1.0],
    };

    let data = tree::TrainingData::new(&x, &y, weights);
    let per_tree = ((n as f64) * params.max_samples).floor().max(1.0) as usize;
    let grow = |t: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
        let rows = sample(&mut rng, n, per_tree).into_vec();
        data.grow(&rows, params.max_depth, params.min_samples_leaf)
    };
    let trees: Vec<DecisionTree> = if params.n_jobs == 1 {
        (0..params.n_estimators).map(grow).collect()
    } else {
        thread_pool(params.n_jobs)?.install(|| (0..params.n_estimators).into_par_iter().map(grow).collect())
    };

    let feature_importance = mean_decrease_impurity(&trees, x.n_cols());
    Ok(ForestModel {
        params: params.clone(),
        feature_names: default_feature_names(x.n_cols()),
        trees,
        feature_importance,
        n_rows: n,
        class_counts: counts,
        notes: vec![
            "split criterion: gini (library default)".into(),
            format!(
                "min_samples_leaf: {} (library default)",
                params.min_samples_leaf
            ),
            "no per-split feature subsampling".into(),
        ],
    })
}

/// Per-tree impurity decreases normalized within each tree, averaged over
/// trees and renormalized. A forest without any split gets uniform weights.
fn mean_decrease_impurity(trees: &[DecisionTree], n_features: usize) -> Vec<f64> {
    let mut total = vec![0.0; n_features];
    for t in trees {
        let raw = t.impurity_decrease(n_features);
        let s: f64 = raw.iter().sum();
        if s > 0.0 {
            for (a, r) in total.iter_mut().zip(raw) {
                *a += r / s;
            }
        }
    }
    let s: f64 = total.iter().sum();
    if s > 0.0 {
        total.iter_mut().for_each(|v| *v /= s);
        total
    } else {
        vec![1.0 / n_features as f64; n_features]
    }
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Probability of the qualified class: mean of the trees' leaf
    /// probabilities.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features() {
            return Err(Error::invalid(format!(
                "feature arity mismatch: model expects {}, input has {}",
                self.n_features(),
                x.n_cols()
            )));
        }
        let k = self.trees.len() as f64;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k
            })
            .collect())
    }

    pub fn importance(&self) -> NamedImportance {
        NamedImportance::new(self.feature_names.clone(), self.feature_importance.clone())
    }
}

pub fn predict_proba(model: &ForestModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict_proba(x)
}

pub fn forest_importance(model: &ForestModel) -> NamedImportance {
    model.importance()
}
