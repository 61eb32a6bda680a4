//! Discrimination metrics, fold aggregation and the spatially blocked
//! cross-validation driver.

mod cv;
mod metrics;

pub use cv::{
    run_cv, summarize, AggregateReport, CvOutcome, CvParams, FoldMetrics, FoldModels, FoldReport,
    ImportanceAgreement, LabeledSamples, MetricSummary, ModelSummary, PointScore, RankedFeature,
};
pub use metrics::{
    average_precision, f1_score, importance_correlation, mean_ci, prf_at_threshold,
    prf_from_counts, roc_auc, roc_curve, MeanCi, Prf,
};
