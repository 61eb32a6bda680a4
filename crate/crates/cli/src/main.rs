//! Command-line front end. Every configuration key can be overridden as
//! `--section.key=value`; such flags win over the configuration file.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pointq::config::RunConfig;
use pointq::pipeline;

#[derive(Parser, Debug)]
#[command(name = "pointq", version, about = "Point-level uncertainty classification for mobile laser scans")]
struct Cli {
    /// JSON run configuration (default: $POINTQ_CONFIG, else built-in defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; shorthand for --seed=N in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic reference scan, mobile scan and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Label mobile-scan points by their distance to the reference.
    Label {
        #[arg(long)]
        mls: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add the geometric features to a labeled table.
    Features {
        #[arg(long)]
        mls: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate both ensembles; writes report, scores and models.
    TrainEval {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Omit the timestamp so reports are byte-comparable.
        #[arg(long)]
        fixed_clock: bool,
    },
    /// Score a feature table with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a summary of a report.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
    /// Print the effective configuration as JSON.
    Config,
}

/// Splits `--section.key=value` flags off the argument list.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match a.strip_prefix("--") {
            Some(body) if body.split('=').next().is_some_and(|k| k.contains('.')) && body.contains('=') => {
                overrides.push(body.to_string())
            }
            _ => rest.push(a),
        }
    }
    (rest, overrides)
}

fn run(cli: Cli, overrides: &[String]) -> pointq::Result<()> {
    let mut config = RunConfig::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    for o in overrides {
        config.apply_override(o)?;
    }
    match cli.command {
        Command::Synth { out } => {
            let s = pipeline::cmd_synth(&config, &out)?;
            log::info!("wrote {}, {} and {}", s.reference_path.display(), s.mls_path.display(), s.truth_path.display());
        }
        Command::Label { mls, reference, out } => {
            pipeline::cmd_label(&mls, &reference, &config, &out)?;
        }
        Command::Features { mls, table, out } => {
            pipeline::cmd_features(&mls, &table, &config, &out)?;
        }
        Command::TrainEval { table, out, fixed_clock } => {
            let o = pipeline::cmd_train_eval(&table, &config, &out, fixed_clock)?;
            log::info!("wrote {} and {}", o.report_path.display(), o.scores_path.display());
        }
        Command::Predict { model, table, out } => {
            let n = pipeline::cmd_predict(&model, &table, &out)?;
            log::info!("scored {n} rows");
        }
        Command::Report { report } => {
            emit(&pipeline::summary_text(&pipeline::load_report(&report)?));
        }
        Command::Config => emit(&format!("{}\n", config.to_json())),
    }
    Ok(())
}

// A closed pipe (e.g. `| head`) is not an error worth reporting.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
