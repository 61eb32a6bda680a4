//! Drives the `pointq` binary through the whole pipeline on a small scene.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

/// A 10 m x 8 m room with a few boxes and light models, so each test runs in
/// seconds.
const SMALL: [&str; 9] = [
    "--synth.scene.extent=[10,8]",
    "--synth.scene.interior_walls=[]",
    "--synth.scene.n_boxes=3",
    "--synth.scene.density=150",
    "--folds.cell_size=2",
    "--features.k_max=40",
    "--rf.n_estimators=10",
    "--gbt.num_boost_round=40",
    "--seed=7",
];

fn pointq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointq"))
        .args(SMALL)
        .args(args)
        .env_remove("POINTQ_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to launch pointq")
}

fn ok(args: &[&str]) -> Output {
    let out = pointq(args);
    assert!(
        out.status.success(),
        "pointq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Prepared {
    dir: TempDir,
    features: PathBuf,
}

impl Prepared {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn prepare() -> Prepared {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan");
    ok(&["synth", "--out", s(&scan)]);
    let labels = dir.path().join("labels.csv");
    ok(&[
        "label",
        "--mls",
        s(&scan.join("mls.ply")),
        "--reference",
        s(&scan.join("reference.ply")),
        "--out",
        s(&labels),
    ]);
    let features = dir.path().join("features.csv");
    ok(&["features", "--mls", s(&scan.join("mls.ply")), "--table", s(&labels), "--out", s(&features)]);
    Prepared { dir, features }
}

/// Rows of a CSV file as header-keyed string maps.
fn read_csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

#[test]
fn pipeline_and_predict_reproduce_fold_scores() {
    let p = prepare();
    let run = p.path("run");
    ok(&["train-eval", "--table", s(&p.features), "--out", s(&run), "--fixed-clock"]);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["cv"]["n_folds"], 5);
    assert!(report["generated_at"].is_null());
    for model in ["random_forest", "gradient_boosted_trees"] {
        let auc = report["cv"][model]["roc_auc"]["mean"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }

    let scores = read_csv(&run.join("scores.csv"));
    let n_rows = read_csv(&p.features).len();
    assert_eq!(scores.len(), n_rows);
    for (kind, column) in [("rf", "rf_score"), ("gbt", "gbt_score")] {
        let predicted = p.path(&format!("pred_{kind}.csv"));
        let model = run.join("models").join(format!("fold2_{kind}.json"));
        ok(&["predict", "--model", s(&model), "--table", s(&p.features), "--out", s(&predicted)]);
        let pred: std::collections::HashMap<String, f64> = read_csv(&predicted)
            .into_iter()
            .map(|r| (r["point_index"].clone(), r["score"].parse().unwrap()))
            .collect();
        assert_eq!(pred.len(), n_rows);
        let mut checked = 0;
        for row in scores.iter().filter(|r| r["fold"] == "2") {
            let want: f64 = row[column].parse().unwrap();
            assert!((pred[&row["point_index"]] - want).abs() <= 1e-12, "{kind} point {}", row["point_index"]);
            checked += 1;
        }
        assert!(checked > 0);
    }

    let summary = ok(&["report", "--report", s(&run.join("report.json"))]);
    let text = String::from_utf8(summary.stdout).unwrap();
    assert!(text.contains("Random forest") && text.contains("importance correlation"));
}

#[test]
fn fixed_clock_runs_are_byte_identical() {
    let p = prepare();
    for run in ["a", "b"] {
        ok(&["train-eval", "--table", s(&p.features), "--out", s(&p.path(run)), "--fixed-clock"]);
    }
    for file in ["report.json", "scores.csv", "models/fold0_rf.json", "models/fold4_gbt.json"] {
        assert_eq!(
            fs::read(p.path("a").join(file)).unwrap(),
            fs::read(p.path("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn reference_labeled_against_itself_is_all_qualified_and_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan");
    ok(&["synth", "--out", s(&scan)]);
    let reference = scan.join("reference.ply");
    let labels = dir.path().join("labels.csv");
    ok(&["label", "--mls", s(&reference), "--reference", s(&reference), "--out", s(&labels)]);
    let rows = read_csv(&labels);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["label"] == "1" && r["c2c_distance"].parse::<f64>().unwrap() == 0.0));

    // A single class cannot be cross-validated.
    let features = dir.path().join("features.csv");
    ok(&["features", "--mls", s(&reference), "--table", s(&labels), "--out", s(&features)]);
    let out = pointq(&["train-eval", "--table", s(&features), "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_round_boosting_predicts_one_half() {
    let p = prepare();
    let run = p.path("run");
    ok(&[
        "train-eval",
        "--table",
        s(&p.features),
        "--out",
        s(&run),
        "--gbt.num_boost_round=0",
    ]);
    let predicted = p.path("pred.csv");
    ok(&[
        "predict",
        "--model",
        s(&run.join("models/fold0_gbt.json")),
        "--table",
        s(&p.features),
        "--out",
        s(&predicted),
    ]);
    assert!(read_csv(&predicted).iter().all(|r| r["score"] == "0.5"));
}

#[test]
fn exit_codes() {
    let p = prepare();
    let run = p.path("run");
    ok(&["train-eval", "--table", s(&p.features), "--out", s(&run)]);

    // A model trained on 21 features against a table without features.
    let labels_only = p.path("labels.csv");
    let out = pointq(&[
        "predict",
        "--model",
        s(&run.join("models/fold0_rf.json")),
        "--table",
        s(&labels_only),
        "--out",
        s(&p.path("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let out = pointq(&["report", "--report", s(&p.path("missing.json"))]);
    assert_eq!(out.status.code(), Some(4));

    let out = pointq(&["config", "--labeling.t_d=-1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = pointq(&["config", "--labeling.no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overrides_reach_the_effective_config() {
    let out = ok(&["config", "--gbt.eta=0.1"]);
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["gbt"]["eta"], 0.1);
    assert_eq!(cfg["seed"], 7);
    assert_eq!(cfg["synth"]["scene"]["extent"], serde_json::json!([10.0, 8.0]));
}

#[test]
fn synth_is_byte_identical_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        ok(&["synth", "--out", s(&dir.path().join(run))]);
    }
    for file in ["mls.ply", "reference.ply", "truth.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

/// Small deterministic generator so the oracle needs no extra crates.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[test]
fn label_counts_match_brute_force_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Lcg(99);
    let reference: Vec<[f64; 3]> = (0..1000).map(|_| [rng.next() * 5.0, rng.next() * 5.0, rng.next()]).collect();
    let mls: Vec<[f64; 3]> = reference
        .iter()
        .map(|p| {
            let r = rng.next() * 0.15;
            let (a, b) = (rng.next() * std::f64::consts::TAU, rng.next() * 2.0 - 1.0);
            let h = (1.0 - b * b).sqrt();
            [p[0] + r * h * a.cos(), p[1] + r * h * a.sin(), p[2] + r * b]
        })
        .collect();
    let write = |name: &str, pts: &[[f64; 3]]| {
        let text: String = pts.iter().map(|p| format!("{:?} {:?} {:?}\n", p[0], p[1], p[2])).collect();
        let path = dir.path().join(name);
        fs::write(&path, text).unwrap();
        path
    };
    let ref_path = write("reference.xyz", &reference);
    let mls_path = write("mls.xyz", &mls);
    let out = dir.path().join("labels.csv");
    ok(&["label", "--mls", s(&mls_path), "--reference", s(&ref_path), "--out", s(&out)]);

    let nearest: Vec<f64> = mls
        .iter()
        .map(|q| {
            reference
                .iter()
                .map(|p| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let retained: Vec<usize> = (0..mls.len()).filter(|&i| nearest[i] < 0.1).collect();
    let qualified = retained.iter().filter(|&&i| nearest[i] < 0.02).count();
    assert!(retained.len() < mls.len() && qualified > 0);

    let rows = read_csv(&out);
    assert_eq!(rows.len(), retained.len());
    assert_eq!(rows.iter().filter(|r| r["label"] == "1").count(), qualified);
    for (row, &i) in rows.iter().zip(&retained) {
        assert_eq!(row["point_index"], i.to_string());
        let d: f64 = row["c2c_distance"].parse().unwrap();
        assert!((d - nearest[i]).abs() <= 1e-8 * nearest[i].max(1e-3));
    }
}

#[test]
fn report_embeds_effective_config() {
    let p = prepare();
    let run = p.path("run");
    ok(&["train-eval", "--table", s(&p.features), "--out", s(&run), "--rf.max_depth=6"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["rf"]["max_depth"], 6);
    assert_eq!(report["config"]["gbt"]["num_boost_round"], 40);
    assert_eq!(report["config"]["seed"], 7);
    assert!(report["generated_at"].as_u64().is_some());
}
