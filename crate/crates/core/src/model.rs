//! Named importance vectors and the self-describing JSON model document
//! shared by both ensemble kinds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boosting::GbtModel;
use crate::error::{Error, Result};
use crate::features::{Standardizer, FEATURE_NAMES, N_FEATURES};
use crate::forest::ForestModel;
use crate::matrix::Matrix;

pub(crate) fn default_feature_names(n: usize) -> Vec<String> {
    if n == N_FEATURES {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|i| format!("f{i}")).collect()
    }
}

/// Importance scores aligned with feature names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedImportance {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl NamedImportance {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Self {
        debug_assert_eq!(names.len(), values.len());
        NamedImportance { names, values }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Feature indices by decreasing importance; ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }

    /// The `k` most important `(name, value)` pairs.
    pub fn top(&self, k: usize) -> Vec<(String, f64)> {
        self.ranking()
            .into_iter()
            .take(k)
            .map(|i| (self.names[i].clone(), self.values[i]))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "snake_case")]
pub enum TrainedModel {
    RandomForest(ForestModel),
    GradientBoostedTrees(GbtModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::RandomForest(_) => "random_forest",
            TrainedModel::GradientBoostedTrees(_) => "gradient_boosted_trees",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::RandomForest(m) => m.n_features(),
            TrainedModel::GradientBoostedTrees(m) => m.n_features(),
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            TrainedModel::RandomForest(m) => m.predict_proba(x),
            TrainedModel::GradientBoostedTrees(m) => m.predict_proba(x),
        }
    }

    pub fn importance(&self) -> NamedImportance {
        match self {
            TrainedModel::RandomForest(m) => m.importance(),
            TrainedModel::GradientBoostedTrees(m) => m.importance(),
        }
    }
}

/// A trained model together with the standardization fitted on its training
/// rows, so raw feature rows can be scored directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    /// Held-out fold the model was evaluated on, when produced by
    /// cross-validation.
    pub fold: Option<usize>,
    pub standardizer: Standardizer,
    pub model: TrainedModel,
}

impl ModelDocument {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(fold: Option<usize>, standardizer: Standardizer, model: TrainedModel) -> Self {
        ModelDocument {
            format_version: Self::FORMAT_VERSION,
            fold,
            standardizer,
            model,
        }
    }

    /// Standardizes raw feature rows and scores them.
    pub fn predict_raw(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.model.n_features() {
            return Err(Error::invalid(format!(
                "feature arity mismatch: model expects {}, input has {}",
                self.model.n_features(),
                x.n_cols()
            )));
        }
        self.model.predict_proba(&self.standardizer.apply(x)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: ModelDocument = serde_json::from_str(&text)?;
        if doc.format_version != Self::FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}
