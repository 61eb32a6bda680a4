//! End-to-end run on the default synthetic scene, in memory.
//!
//! `cargo run --release -p pointq-core --example synthetic_run [seed]`

use std::time::Instant;

use pointq::config::RunConfig;
use pointq::pipeline::{add_features, label_clouds, summary_text, train_eval};
use pointq::synth::{generate_mls, generate_scene};

fn main() -> pointq::Result<()> {
    let mut config = RunConfig::default();
    if let Some(seed) = std::env::args().nth(1) {
        config.seed = seed.parse().expect("seed must be an integer");
    }
    let t = Instant::now();
    let mut spec = config.synth.scene.clone();
    spec.seed = config.seed;
    let scene = generate_scene(&spec)?;
    let mls = generate_mls(&scene, &config.synth.error, config.seed)?;
    println!("scene: {} reference, {} MLS points ({:.1?})", scene.cloud.len(), mls.cloud.len(), t.elapsed());

    let t = Instant::now();
    let (table, s) = label_clouds(&mls.cloud, &scene.cloud, &config)?;
    println!(
        "label: {} retained, {} dropped, qualified {:.3} ({:.1?})",
        s.retained,
        s.dropped,
        s.qualified as f64 / s.retained as f64,
        t.elapsed()
    );

    let t = Instant::now();
    let (table, f) = add_features(&mls.cloud, &table, &config)?;
    println!("features: {} rows, {} dropped ({:.1?})", f.rows, f.dropped, t.elapsed());

    let t = Instant::now();
    let (report, _) = train_eval(&table, &config, true)?;
    println!("train-eval ({:.1?})\n{}", t.elapsed(), summary_text(&report));
    Ok(())
}
