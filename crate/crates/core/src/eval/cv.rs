use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, importance_correlation, mean_ci, prf_at_threshold, roc_auc};
use crate::boosting::{fit_gbt, GbtParams};
use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::forest::{class_counts, fit_forest, thread_pool, ForestParams};
use crate::geometry::CellId;
use crate::matrix::Matrix;
use crate::model::{ModelDocument, NamedImportance, TrainedModel};
use crate::seeds;

/// Feature rows with labels and their spatial fold membership.
#[derive(Clone, Debug)]
pub struct LabeledSamples {
    /// Index of each row in the source cloud.
    pub point_index: Vec<usize>,
    pub x: Matrix,
    pub labels: Vec<u8>,
    pub folds: Vec<usize>,
    /// Grid cell of each row; the early-stopping holdout is drawn by cell.
    pub cells: Vec<CellId>,
}

impl LabeledSamples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn validate(&self, n_folds: usize) -> Result<()> {
        let n = self.x.n_rows();
        if self.labels.len() != n || self.folds.len() != n || self.cells.len() != n || self.point_index.len() != n {
            return Err(Error::invalid("samples: column lengths differ"));
        }
        if let Some(&f) = self.folds.iter().find(|&&f| f >= n_folds) {
            return Err(Error::invalid(format!("fold id {f} out of range for {n_folds} folds")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvParams {
    pub n_folds: usize,
    /// Fraction of training cells held out for boosting early stopping.
    pub holdout_fraction: f64,
    pub threshold: f64,
    /// Length of the per-model importance ranking and of the subset used
    /// for the restricted correlation.
    pub top_k: usize,
    /// Folds evaluated concurrently; 0 means all available cores.
    pub threads: usize,
}

impl Default for CvParams {
    fn default() -> Self {
        CvParams {
            n_folds: 5,
            holdout_fraction: 0.1,
            threshold: 0.5,
            top_k: 20,
            threads: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub roc_auc: f64,
    pub average_precision: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl FoldMetrics {
    pub fn compute(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        let prf = prf_at_threshold(scores, labels, threshold)?;
        Ok(FoldMetrics {
            roc_auc: roc_auc(scores, labels)?,
            average_precision: average_precision(scores, labels)?,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Training rows set aside for boosting early stopping.
    pub n_validation: usize,
    pub test_prevalence: f64,
    pub rf_seed: u64,
    pub gbt_seed: u64,
    pub gbt_best_iteration: Option<usize>,
    pub gbt_rounds: usize,
    pub random_forest: FoldMetrics,
    pub gradient_boosted_trees: FoldMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub half_width: f64,
    pub fold_values: Vec<f64>,
}

/// Mean and t-interval of per-fold values.
pub fn summarize(fold_values: &[f64]) -> Result<MetricSummary> {
    let ci = mean_ci(fold_values)?;
    Ok(MetricSummary {
        mean: ci.mean,
        half_width: ci.half_width,
        fold_values: fold_values.to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub name: String,
    pub importance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub roc_auc: MetricSummary,
    pub average_precision: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    /// Importance averaged over folds.
    pub importance: NamedImportance,
    pub top_features: Vec<RankedFeature>,
}

impl ModelSummary {
    fn build(metrics: &[FoldMetrics], importances: &[NamedImportance], top_k: usize) -> Result<Self> {
        let col = |f: fn(&FoldMetrics) -> f64| summarize(&metrics.iter().map(f).collect::<Vec<_>>());
        let importance = mean_importance(importances);
        let top_features = importance
            .top(top_k)
            .into_iter()
            .enumerate()
            .map(|(i, (name, importance))| RankedFeature { rank: i + 1, name, importance })
            .collect();
        Ok(ModelSummary {
            roc_auc: col(|m| m.roc_auc)?,
            average_precision: col(|m| m.average_precision)?,
            precision: col(|m| m.precision)?,
            recall: col(|m| m.recall)?,
            f1: col(|m| m.f1)?,
            importance,
            top_features,
        })
    }

    pub fn top_names(&self, k: usize) -> Vec<&str> {
        self.top_features.iter().take(k).map(|r| r.name.as_str()).collect()
    }
}

fn mean_importance(all: &[NamedImportance]) -> NamedImportance {
    let names = all[0].names.clone();
    let mut values = vec![0.0; names.len()];
    for imp in all {
        for (v, x) in values.iter_mut().zip(&imp.values) {
            *v += x;
        }
    }
    for v in &mut values {
        *v /= all.len() as f64;
    }
    NamedImportance::new(names, values)
}

/// Pearson r between the two models' fold-averaged importances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceAgreement {
    /// Over every feature; `None` when a vector is constant.
    pub all_features: Option<f64>,
    /// Over the `top_k` features ranked by the mean of both models.
    pub top_k: Option<f64>,
    pub top_k_features: Vec<String>,
}

impl ImportanceAgreement {
    fn build(a: &NamedImportance, b: &NamedImportance, k: usize) -> Self {
        let combined: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| 0.5 * (x + y)).collect();
        let subset = NamedImportance::new(a.names.clone(), combined).ranking();
        let subset = &subset[..k.min(subset.len())];
        let pick = |v: &[f64]| subset.iter().map(|&i| v[i]).collect::<Vec<_>>();
        ImportanceAgreement {
            all_features: importance_correlation(&a.values, &b.values).ok(),
            top_k: importance_correlation(&pick(&a.values), &pick(&b.values)).ok(),
            top_k_features: subset.iter().map(|&i| a.names[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_samples: usize,
    pub n_folds: usize,
    pub prevalence: f64,
    pub threshold: f64,
    pub folds: Vec<FoldReport>,
    pub random_forest: ModelSummary,
    pub gradient_boosted_trees: ModelSummary,
    pub importance_correlation: ImportanceAgreement,
}

/// Held-out scores of one row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointScore {
    pub point_index: usize,
    pub fold: usize,
    pub label: u8,
    pub random_forest: f64,
    pub gradient_boosted_trees: f64,
}

#[derive(Clone, Debug)]
pub struct FoldModels {
    pub fold: usize,
    pub random_forest: ModelDocument,
    pub gradient_boosted_trees: ModelDocument,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub report: AggregateReport,
    /// In sample row order.
    pub scores: Vec<PointScore>,
    pub models: Vec<FoldModels>,
}

struct FoldResult {
    report: FoldReport,
    test_rows: Vec<usize>,
    rf_scores: Vec<f64>,
    gbt_scores: Vec<f64>,
    rf_importance: NamedImportance,
    gbt_importance: NamedImportance,
    models: FoldModels,
}

/// Splits training rows into boosting-train and early-stopping validation
/// rows by holding out a seeded fraction of their grid cells.
fn holdout_split(train: &[usize], cells: &[CellId], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut distinct: Vec<CellId> = train.iter().map(|&r| cells[r]).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return (train.to_vec(), Vec::new());
    }
    distinct.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = ((fraction * distinct.len() as f64).round() as usize).clamp(1, distinct.len() - 1);
    let mut held = distinct[..n_hold].to_vec();
    held.sort_unstable();
    train.iter().partition(|&&r| held.binary_search(&cells[r]).is_err())
}

fn run_fold(
    s: &LabeledSamples,
    fold: usize,
    rf: &ForestParams,
    gbt: &GbtParams,
    cv: &CvParams,
    seed: u64,
) -> Result<FoldResult> {
    let (test_rows, train_rows): (Vec<usize>, Vec<usize>) = (0..s.len()).partition(|&r| s.folds[r] == fold);
    let y_test: Vec<u8> = test_rows.iter().map(|&r| s.labels[r]).collect();
    let y_train: Vec<u8> = train_rows.iter().map(|&r| s.labels[r]).collect();
    let both = |y: &[u8]| class_counts(y).map(|c| c[0] > 0 && c[1] > 0).unwrap_or(false);
    if !both(&y_test) || !both(&y_train) {
        return Err(Error::degenerate(format!(
            "fold {fold} is missing a class in its test or training rows"
        )));
    }

    let standardizer = Standardizer::fit(&s.x.select_rows(&train_rows))?;
    let z = standardizer.apply(&s.x)?;
    let x_test = z.select_rows(&test_rows);

    let rf_params = ForestParams {
        seed: seeds::per_fold(seed, seeds::RANDOM_FOREST, fold),
        ..rf.clone()
    };
    let forest = fit_forest(&z.select_rows(&train_rows), &y_train, &rf_params)?;
    let rf_scores = forest.predict_proba(&x_test)?;

    let holdout_seed = seeds::per_fold(seed, seeds::VALIDATION_HOLDOUT, fold);
    let (fit_rows, val_rows) = holdout_split(&train_rows, &s.cells, cv.holdout_fraction, holdout_seed);
    if val_rows.is_empty() {
        return Err(Error::degenerate(format!(
            "fold {fold}: too few training cells for an early-stopping holdout"
        )));
    }
    let y_fit: Vec<u8> = fit_rows.iter().map(|&r| s.labels[r]).collect();
    let y_val: Vec<u8> = val_rows.iter().map(|&r| s.labels[r]).collect();
    let gbt_params = GbtParams {
        seed: seeds::per_fold(seed, seeds::BOOSTING, fold),
        ..gbt.clone()
    };
    let boosted = fit_gbt(&z.select_rows(&fit_rows), &y_fit, &z.select_rows(&val_rows), &y_val, &gbt_params)
        .map_err(|e| match e {
            Error::Degenerate(m) => Error::degenerate(format!("fold {fold}: {m}")),
            e => e,
        })?;
    let gbt_scores = boosted.predict_proba(&x_test)?;

    let pos = y_test.iter().filter(|&&l| l == 1).count();
    let report = FoldReport {
        fold,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        n_validation: val_rows.len(),
        test_prevalence: pos as f64 / y_test.len() as f64,
        rf_seed: rf_params.seed,
        gbt_seed: gbt_params.seed,
        gbt_best_iteration: boosted.best_iteration,
        gbt_rounds: boosted.trees.len(),
        random_forest: FoldMetrics::compute(&rf_scores, &y_test, cv.threshold)?,
        gradient_boosted_trees: FoldMetrics::compute(&gbt_scores, &y_test, cv.threshold)?,
    };
    log::info!(
        "fold {fold}: {} train, {} test, RF AUC {:.4}, GBT AUC {:.4} ({} rounds)",
        report.n_train,
        report.n_test,
        report.random_forest.roc_auc,
        report.gradient_boosted_trees.roc_auc,
        report.gbt_rounds
    );
    Ok(FoldResult {
        report,
        test_rows,
        rf_scores,
        gbt_scores,
        rf_importance: forest.importance(),
        gbt_importance: boosted.importance(),
        models: FoldModels {
            fold,
            random_forest: ModelDocument::new(Some(fold), standardizer.clone(), TrainedModel::RandomForest(forest)),
            gradient_boosted_trees: ModelDocument::new(Some(fold), standardizer, TrainedModel::GradientBoostedTrees(boosted)),
        },
    })
}

/// Spatially blocked cross-validation of both ensembles: each fold is
/// standardized on its training rows, both models are fit and the held-out
/// fold is scored.
pub fn run_cv(
    samples: &LabeledSamples,
    rf_params: &ForestParams,
    gbt_params: &GbtParams,
    cv: &CvParams,
    seed: u64,
) -> Result<CvOutcome> {
    if cv.n_folds < 2 {
        return Err(Error::invalid("n_folds must be at least 2"));
    }
    if !(cv.holdout_fraction > 0.0 && cv.holdout_fraction < 1.0) {
        return Err(Error::invalid("holdout_fraction must be in (0, 1)"));
    }
    samples.validate(cv.n_folds)?;
    let counts = class_counts(&samples.labels)?;

    let folds: Vec<usize> = (0..cv.n_folds).collect();
    let results: Vec<FoldResult> = if cv.threads == 1 {
        folds.iter().map(|&f| run_fold(samples, f, rf_params, gbt_params, cv, seed)).collect::<Result<_>>()?
    } else {
        thread_pool(cv.threads)?.install(|| {
            folds
                .par_iter()
                .map(|&f| run_fold(samples, f, rf_params, gbt_params, cv, seed))
                .collect::<Result<_>>()
        })?
    };

    let mut scores = vec![None; samples.len()];
    for r in &results {
        for (i, &row) in r.test_rows.iter().enumerate() {
            scores[row] = Some(PointScore {
                point_index: samples.point_index[row],
                fold: r.report.fold,
                label: samples.labels[row],
                random_forest: r.rf_scores[i],
                gradient_boosted_trees: r.gbt_scores[i],
            });
        }
    }
    let scores: Vec<PointScore> = scores.into_iter().map(|s| s.expect("every row is in one fold")).collect();

    let rf_metrics: Vec<FoldMetrics> = results.iter().map(|r| r.report.random_forest).collect();
    let gbt_metrics: Vec<FoldMetrics> = results.iter().map(|r| r.report.gradient_boosted_trees).collect();
    let rf_imp: Vec<NamedImportance> = results.iter().map(|r| r.rf_importance.clone()).collect();
    let gbt_imp: Vec<NamedImportance> = results.iter().map(|r| r.gbt_importance.clone()).collect();
    let random_forest = ModelSummary::build(&rf_metrics, &rf_imp, cv.top_k)?;
    let gradient_boosted_trees = ModelSummary::build(&gbt_metrics, &gbt_imp, cv.top_k)?;
    let importance_correlation =
        ImportanceAgreement::build(&random_forest.importance, &gradient_boosted_trees.importance, cv.top_k);

    let (reports, models): (Vec<FoldReport>, Vec<FoldModels>) =
        results.into_iter().map(|r| (r.report, r.models)).unzip();
    Ok(CvOutcome {
        report: AggregateReport {
            n_samples: samples.len(),
            n_folds: cv.n_folds,
            prevalence: counts[1] as f64 / samples.len() as f64,
            threshold: cv.threshold,
            folds: reports,
            random_forest,
            gradient_boosted_trees,
            importance_correlation,
        },
        scores,
        models,
    })
}
