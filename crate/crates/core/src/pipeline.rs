//! File-level pipeline stages behind the command-line subcommands. Each
//! stage reads what the previous one wrote, so they compose through files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{run_cv, AggregateReport, CvOutcome, LabeledSamples};
use crate::features::{FeatureExtractor, N_FEATURES};
use crate::forest::thread_pool;
use crate::geometry::{assign_folds, grid_partition, KdTree, PointCloud};
use crate::ingest::{read_cloud_auto, read_feature_table, write_cloud, write_feature_table, CloudFileFormat, FeatureTable};
use crate::labeling::{apply_cutoff, c2c_distances, label, QUALIFIED};
use crate::matrix::Matrix;
use crate::model::ModelDocument;
use crate::seeds;
use crate::synth::{generate_mls, generate_scene};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(thread_pool(threads)?.install(f))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub reference_points: usize,
    pub mls_points: usize,
    pub reference_path: PathBuf,
    pub mls_path: PathBuf,
    pub truth_path: PathBuf,
}

/// Writes `reference.ply`, `mls.ply` (binary) and `truth.csv` (MLS point
/// index, injected error, surface tag) to `out_dir`.
pub fn cmd_synth(config: &RunConfig, out_dir: &Path) -> Result<SynthSummary> {
    config.validate()?;
    create_dir(out_dir)?;
    let mut spec = config.synth.scene.clone();
    spec.seed = config.seed;
    let scene = with_threads(config.eval.threads, || generate_scene(&spec))??;
    let mls = generate_mls(&scene, &config.synth.error, config.seed)?;
    log::info!("synth: {} reference points, {} MLS points", scene.cloud.len(), mls.cloud.len());

    let reference_path = out_dir.join("reference.ply");
    let mls_path = out_dir.join("mls.ply");
    let truth_path = out_dir.join("truth.csv");
    write_cloud(&reference_path, &scene.cloud, CloudFileFormat::PlyBinaryLe)?;
    write_cloud(&mls_path, &mls.cloud, CloudFileFormat::PlyBinaryLe)?;
    let file = File::create(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&truth_path, e);
    writeln!(w, "index,error,surface").map_err(io)?;
    for (i, (e, t)) in mls.true_error.iter().zip(&mls.tags).enumerate() {
        writeln!(w, "{i},{e},{t}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(SynthSummary {
        reference_points: scene.cloud.len(),
        mls_points: mls.cloud.len(),
        reference_path,
        mls_path,
        truth_path,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub mls_points: usize,
    pub retained: usize,
    pub dropped: usize,
    pub qualified: usize,
    pub unqualified: usize,
    pub cells: usize,
}

/// C2C distances, cutoff, labels and spatial folds of the retained points.
pub fn label_clouds(mls: &PointCloud<f64>, reference: &PointCloud<f64>, config: &RunConfig) -> Result<(FeatureTable, LabelSummary)> {
    config.validate()?;
    let lp = &config.labeling;
    let index = KdTree::from_cloud(reference, lp.leaf_size)?;
    let d = with_threads(config.eval.threads, || c2c_distances(mls, &index))??;
    let keep = apply_cutoff(&d, lp.cutoff);
    let rows: Vec<usize> = (0..mls.len()).filter(|&i| keep[i]).collect();
    if rows.is_empty() {
        return Err(Error::degenerate("no MLS point lies within the cutoff"));
    }
    let c2c: Vec<f64> = rows.iter().map(|&i| d[i]).collect();
    let labels = label(&c2c, lp.t_d, lp.cutoff)?;

    let retained = mls.select(&rows);
    let partition = grid_partition(&retained, config.folds.cell_size)?;
    let folds = assign_folds(&partition, config.folds.n_folds, seeds::derive(config.seed, seeds::FOLDS))?;
    let qualified = labels.iter().filter(|&&l| l == QUALIFIED).count();
    let summary = LabelSummary {
        mls_points: mls.len(),
        retained: rows.len(),
        dropped: mls.len() - rows.len(),
        qualified,
        unqualified: rows.len() - qualified,
        cells: folds.cells().count(),
    };
    let table = FeatureTable {
        fold: Some(folds.point_folds(&partition)),
        cell: Some(partition.cells().to_vec()),
        c2c: Some(c2c),
        label: Some(labels),
        ..FeatureTable::new(rows)
    };
    Ok((table, summary))
}

pub fn cmd_label(mls_path: &Path, ref_path: &Path, config: &RunConfig, out_path: &Path) -> Result<LabelSummary> {
    let mls = read_cloud_auto(mls_path)?;
    let reference = read_cloud_auto(ref_path)?;
    let (table, summary) = label_clouds(&mls, &reference, config)?;
    log::info!(
        "label: {} of {} points retained ({} dropped at cutoff {} m), {} qualified, {} unqualified, {} cells",
        summary.retained,
        summary.mls_points,
        summary.dropped,
        config.labeling.cutoff,
        summary.qualified,
        summary.unqualified,
        summary.cells
    );
    write_feature_table(&table, out_path)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub rows: usize,
    /// Rows whose neighborhood was degenerate.
    pub dropped: usize,
}

/// Adds the 21 features and `OptN` to every row of `table`, dropping rows
/// whose features are undefined.
pub fn add_features(cloud: &PointCloud<f64>, table: &FeatureTable, config: &RunConfig) -> Result<(FeatureTable, FeatureSummary)> {
    config.validate()?;
    if let Some(&bad) = table.point_index.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::invalid(format!(
            "table refers to point {bad}, cloud has {} points",
            cloud.len()
        )));
    }
    let results = with_threads(config.eval.threads, || -> Result<_> {
        let fx = FeatureExtractor::new(cloud, &config.features)?;
        Ok(fx.points(&table.point_index))
    })??;
    let mut keep = Vec::with_capacity(results.len());
    let mut data = Vec::with_capacity(results.len() * N_FEATURES);
    let mut opt_n = Vec::with_capacity(results.len());
    for (row, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => {
                keep.push(row);
                data.extend_from_slice(&f.values);
                opt_n.push(f.opt_n);
            }
            Err(Error::Degenerate(msg)) => {
                log::debug!("point {}: {msg}", table.point_index[row]);
            }
            Err(e) => return Err(e),
        }
    }
    let mut out = table.select(&keep);
    out.features = Some(Matrix::new(keep.len(), N_FEATURES, data)?);
    out.opt_n = Some(opt_n);
    let summary = FeatureSummary {
        rows: keep.len(),
        dropped: table.len() - keep.len(),
    };
    Ok((out, summary))
}

pub fn cmd_features(mls_path: &Path, table_path: &Path, config: &RunConfig, out_path: &Path) -> Result<FeatureSummary> {
    let cloud = read_cloud_auto(mls_path)?;
    let table = read_feature_table(table_path)?;
    let (out, summary) = add_features(&cloud, &table, config)?;
    log::info!("features: {} rows, {} dropped as degenerate", summary.rows, summary.dropped);
    write_feature_table(&out, out_path)?;
    Ok(summary)
}

/// Seeds derived from the root seed, for the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub root: u64,
    pub folds: u64,
    pub scene: u64,
    pub mls: u64,
    pub random_forest: Vec<u64>,
    pub boosting: Vec<u64>,
    pub validation_holdout: Vec<u64>,
}

impl SeedReport {
    pub fn new(root: u64, n_folds: usize) -> Self {
        let per = |salt| (0..n_folds).map(|f| seeds::per_fold(root, salt, f)).collect();
        SeedReport {
            root,
            folds: seeds::derive(root, seeds::FOLDS),
            scene: seeds::derive(root, seeds::SCENE),
            mls: seeds::derive(root, seeds::MLS),
            random_forest: per(seeds::RANDOM_FOREST),
            boosting: per(seeds::BOOSTING),
            validation_holdout: per(seeds::VALIDATION_HOLDOUT),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch; absent under a fixed clock.
    pub generated_at: Option<u64>,
    pub config: RunConfig,
    pub seeds: SeedReport,
    pub cv: AggregateReport,
}

/// Cross-validation inputs from a labeled feature table.
pub fn samples_from_table(table: &FeatureTable) -> Result<LabeledSamples> {
    let missing = |what: &str| Error::invalid(format!("feature table lacks the {what} column(s)"));
    Ok(LabeledSamples {
        point_index: table.point_index.clone(),
        x: table.features.clone().ok_or_else(|| missing("feature"))?,
        labels: table.label.clone().ok_or_else(|| missing("label"))?,
        folds: table.fold.clone().ok_or_else(|| missing("fold"))?,
        cells: table.cell.clone().ok_or_else(|| missing("cell_row/cell_col"))?,
    })
}

pub fn train_eval(table: &FeatureTable, config: &RunConfig, fixed_clock: bool) -> Result<(RunReport, CvOutcome)> {
    config.validate()?;
    let samples = samples_from_table(table)?;
    let outcome = run_cv(&samples, &config.rf, &config.gbt, &config.cv_params(), config.seed)?;
    let generated_at = if fixed_clock {
        None
    } else {
        Some(SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
    };
    let report = RunReport {
        tool: "pointq".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generated_at,
        config: config.clone(),
        seeds: SeedReport::new(config.seed, config.folds.n_folds),
        cv: outcome.report.clone(),
    };
    Ok((report, outcome))
}

pub fn write_scores(outcome: &CvOutcome, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "point_index,fold,label,rf_score,gbt_score").map_err(io)?;
    for s in &outcome.scores {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.point_index, s.fold, s.label, s.random_forest, s.gradient_boosted_trees
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainEvalOutput {
    pub report_path: PathBuf,
    pub scores_path: PathBuf,
    pub model_paths: Vec<PathBuf>,
}

/// Writes `report.json`, `scores.csv` and `models/fold{f}_{rf,gbt}.json`.
pub fn cmd_train_eval(table_path: &Path, config: &RunConfig, out_dir: &Path, fixed_clock: bool) -> Result<TrainEvalOutput> {
    let table = read_feature_table(table_path)?;
    let (report, outcome) = train_eval(&table, config, fixed_clock)?;
    create_dir(out_dir)?;
    let models_dir = out_dir.join("models");
    create_dir(&models_dir)?;
    let report_path = out_dir.join("report.json");
    let scores_path = out_dir.join("scores.csv");
    write_text(&report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_scores(&outcome, &scores_path)?;
    let mut model_paths = Vec::new();
    for m in &outcome.models {
        for (kind, doc) in [("rf", &m.random_forest), ("gbt", &m.gradient_boosted_trees)] {
            let p = models_dir.join(format!("fold{}_{kind}.json", m.fold));
            doc.save(&p)?;
            model_paths.push(p);
        }
    }
    log::info!("{}", summary_text(&report));
    Ok(TrainEvalOutput {
        report_path,
        scores_path,
        model_paths,
    })
}

/// Scores every row of a feature table with a saved model; writes
/// `point_index,score`.
pub fn cmd_predict(model_path: &Path, table_path: &Path, out_path: &Path) -> Result<usize> {
    let doc = ModelDocument::load(model_path)?;
    let table = read_feature_table(table_path)?;
    let x = table
        .features
        .as_ref()
        .ok_or_else(|| Error::invalid("feature table lacks the feature columns"))?;
    let scores = doc.predict_raw(x)?;
    let file = File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(out_path, e);
    writeln!(w, "point_index,score").map_err(io)?;
    for (i, s) in table.point_index.iter().zip(&scores) {
        writeln!(w, "{i},{s}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(scores.len())
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Plain-text summary of a report: metric means with 95% intervals and
/// fold values, top features and the importance correlation.
pub fn summary_text(report: &RunReport) -> String {
    let cv = &report.cv;
    let mut s = format!(
        "{} samples, {} folds, positive prevalence {:.4}, threshold {}\n",
        cv.n_samples, cv.n_folds, cv.prevalence, cv.threshold
    );
    for (name, m) in [("Random forest", &cv.random_forest), ("Gradient-boosted trees", &cv.gradient_boosted_trees)] {
        s.push_str(&format!("\n{name}\n"));
        for (metric, v) in [
            ("ROC-AUC", &m.roc_auc),
            ("AP", &m.average_precision),
            ("Precision@t", &m.precision),
            ("Recall@t", &m.recall),
            ("F1@t", &m.f1),
        ] {
            let folds: Vec<String> = v.fold_values.iter().map(|x| format!("{x:.4}")).collect();
            s.push_str(&format!(
                "  {metric:<12} {:.4} ± {:.4}   [{}]\n",
                v.mean,
                v.half_width,
                folds.join(", ")
            ));
        }
        let top: Vec<String> = m.top_features.iter().take(10).map(|r| format!("{} {:.3}", r.name, r.importance)).collect();
        s.push_str(&format!("  top features: {}\n", top.join(", ")));
    }
    let r = &cv.importance_correlation;
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
    s.push_str(&format!(
        "\nimportance correlation: all features r = {}, top {} r = {}\n",
        fmt(r.all_features),
        r.top_k_features.len(),
        fmt(r.top_k)
    ));
    s
}
