//! Run configuration: one JSON document with a section per pipeline stage
//! and a single root seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::boosting::GbtParams;
use crate::error::{Error, Result};
use crate::eval::CvParams;
use crate::features::FeatureParams;
use crate::forest::ForestParams;
use crate::labeling::LabelingParams;
use crate::synth::{ErrorModel, SceneSpec};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "POINTQ_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldParams {
    pub n_folds: usize,
    /// Grid cell size (m).
    pub cell_size: f64,
}

impl Default for FoldParams {
    fn default() -> Self {
        FoldParams {
            n_folds: 5,
            cell_size: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Worker threads for folds and feature extraction; 0 means all cores.
    pub threads: usize,
    pub holdout_fraction: f64,
    pub threshold: f64,
    pub top_k: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        let cv = CvParams::default();
        EvalParams {
            threads: cv.threads,
            holdout_fraction: cv.holdout_fraction,
            threshold: cv.threshold,
            top_k: cv.top_k,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub scene: SceneSpec,
    pub error: ErrorModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub labeling: LabelingParams,
    pub features: FeatureParams,
    pub folds: FoldParams,
    pub rf: ForestParams,
    pub gbt: GbtParams,
    pub eval: EvalParams,
    pub synth: SynthParams,
    /// Root of every random stream.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            labeling: LabelingParams::default(),
            features: FeatureParams::default(),
            folds: FoldParams::default(),
            rf: ForestParams::default(),
            gbt: GbtParams::default(),
            eval: EvalParams::default(),
            synth: SynthParams::default(),
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::invalid(format!("{}: {j}", path.display())),
            e => e,
        })
    }

    /// Configuration from `path`, else from the file named by
    /// `POINTQ_CONFIG`, else the defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.labeling.validate()?;
        self.features.scale_range().validate(usize::MAX)?;
        if self.folds.n_folds < 2 {
            return Err(Error::invalid("folds.n_folds must be at least 2"));
        }
        if !(self.folds.cell_size > 0.0) {
            return Err(Error::invalid("folds.cell_size must be positive"));
        }
        if !(self.features.acc_bin_size > 0.0) {
            return Err(Error::invalid("features.acc_bin_size must be positive"));
        }
        self.synth.scene.validate()?;
        self.synth.error.validate()?;
        Ok(())
    }

    /// Applies a `section.key=value` override; the value is parsed as JSON
    /// and falls back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override {assignment:?} is not key=value")))?;
        let mut doc = serde_json::to_value(&*self)?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::invalid(format!("unknown config key {key:?}")))?;
        }
        if slot.is_object() {
            return Err(Error::invalid(format!("config key {key:?} names a section, not a value")));
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let cfg: RunConfig = serde_json::from_value(doc)
            .map_err(|e| Error::invalid(format!("override {key}={raw}: {e}")))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn cv_params(&self) -> CvParams {
        CvParams {
            n_folds: self.folds.n_folds,
            holdout_fraction: self.eval.holdout_fraction,
            threshold: self.eval.threshold,
            top_k: self.eval.top_k,
            threads: self.eval.threads,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.labeling.cutoff, 0.100);
        assert_eq!(c.labeling.t_d, 0.020);
        assert_eq!(c.folds.n_folds, 5);
        assert_eq!(c.rf.n_estimators, 100);
        assert_eq!(c.rf.max_depth, 20);
        assert_eq!(c.gbt.max_depth, 8);
        assert_eq!(c.gbt.eta, 0.05);
        assert_eq!(c.gbt.num_boost_round, 1000);
        assert_eq!(c.gbt.early_stopping_rounds, 50);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut c = RunConfig::default();
        c.gbt.scale_pos_weight = Some(2.5);
        c.folds.cell_size = 0.1 + 0.2;
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let v: Value = serde_json::from_str(&c.to_json()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        for k in ["labeling", "features", "folds", "rf", "gbt", "eval", "seed"] {
            assert!(keys.iter().any(|x| *x == k), "{k}");
        }
    }

    #[test]
    fn partial_document_fills_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 7, "labeling": {"t_d": 0.03}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.labeling.t_d, 0.03);
        assert_eq!(c.labeling.cutoff, 0.1);
        assert!(RunConfig::from_json(r#"{"labeling": {"td": 0.03}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"labeling": {"t_d": 0.3}}"#).is_err());
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.apply_override("folds.cell_size=2.5").unwrap();
        c.apply_override("gbt.scale_pos_weight=3").unwrap();
        c.apply_override("rf.class_weight=uniform").unwrap();
        c.apply_override("seed=9").unwrap();
        assert_eq!(c.folds.cell_size, 2.5);
        assert_eq!(c.gbt.scale_pos_weight, Some(3.0));
        assert_eq!(c.rf.class_weight, crate::forest::ClassWeight::Uniform);
        assert_eq!(c.seed, 9);
        assert!(c.apply_override("folds.size=2").is_err());
        assert!(c.apply_override("folds=2").is_err());
        assert!(c.apply_override("folds.n_folds=abc").is_err());
        assert!(c.apply_override("folds.n_folds=1").is_err());
        assert_eq!(c.folds.n_folds, 5);
    }
}
