use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use textgnn_core::data_model::{dataset_stats, load_dataset, validate_graph};
use textgnn_core::eval_metrics::Metric;
use textgnn_core::harness::io::write_json;
use textgnn_core::harness::report::{pvalues_csv, PVALUES_CSV};
use textgnn_core::harness::{
    evaluate_test, load_dataset_dir, load_rows, report, run_grid, save_dataset_dir, save_rows,
    stats_tables, synth_generate, train_fold, Axis, Checkpoint, ExperimentConfig, ExperimentData,
    GridResults, GridSpec, SynthSpec,
};
use textgnn_core::stats::pairwise_table;

#[derive(Parser)]
#[command(name = "textgnn", version, about = "Text-augmented GNN experiments on propagation graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a graphs JSONL file and print dataset statistics.
    Ingest {
        graphs: PathBuf,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one config on one fold and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configuration grid over shared folds.
    Grid {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// TOML grid spec; defaults to the full 48-cell grid.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Pairwise Wilcoxon-Holm tables along one axis.
    Stats {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        axis: Axis,
    },
    /// Write result, p-value, figure and summary files.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the held-out test split.
    EvaluateTest {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory; defaults to the one recorded in the checkpoint.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

/// `train --config` file.
#[derive(Debug, Serialize, Deserialize)]
struct TrainFile {
    dataset: PathBuf,
    out: PathBuf,
    #[serde(default)]
    fold: usize,
    experiment: ExperimentConfig,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ingest(graphs: &Path) -> Result<bool> {
    let ds = load_dataset(graphs)?;
    let mut clean = true;
    for g in &ds.graphs {
        let v = validate_graph(g);
        if !v.is_empty() {
            clean = false;
            for violation in v {
                println!("{}: {violation}", g.graph_id);
            }
        }
    }
    print!("{}", dataset_stats(&ds));
    Ok(clean)
}

fn synth(spec: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec: SynthSpec = match spec {
        Some(p) => read_toml(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let o = synth_generate(&spec)?;
    save_dataset_dir(out, &o.dataset, Some(&o.table), Some(&o.store))?;
    let spec_path = out.join("synth_spec.toml");
    fs::write(&spec_path, toml::to_string(&spec)?)
        .with_context(|| format!("writing {}", spec_path.display()))?;
    print!("{}", dataset_stats(&o.dataset));
    println!("wrote {}", out.display());
    Ok(())
}

fn train(config: &Path) -> Result<()> {
    let tf: TrainFile = read_toml(config)?;
    let dir = load_dataset_dir(&tf.dataset)?;
    let data = ExperimentData::for_config(&dir.dataset, dir.sources(), &tf.experiment)?;
    if tf.fold >= data.folds.len() {
        bail!("fold {} out of range (k = {})", tf.fold, data.folds.len());
    }
    let m = train_fold(&data, &tf.experiment, tf.fold)?;
    fs::create_dir_all(&tf.out).with_context(|| format!("creating {}", tf.out.display()))?;
    let ckpt = Checkpoint::from_fold(&tf.experiment, Some(tf.dataset.clone()), tf.fold, &m);
    ckpt.save(&tf.out.join("checkpoint.json"))?;
    let hist = tf.out.join("history.csv");
    fs::write(&hist, m.state.history_csv()).with_context(|| format!("writing {}", hist.display()))?;
    write_json(&tf.out.join("train_config.json"), &tf)?;
    println!(
        "{} fold {}: best epoch {}, val loss {:.4}, F1 {:.3}, ROC AUC {:.3}, AUC PR {:.3}",
        tf.experiment.label(),
        tf.fold,
        m.state.best_epoch,
        m.state.best_val_loss,
        m.eval.f1_macro,
        m.eval.roc_auc,
        m.eval.auc_pr
    );
    Ok(())
}

fn grid(dataset: &Path, out: &Path, parallel: usize, seed: Option<u64>, grid: Option<&Path>) -> Result<bool> {
    let mut spec: GridSpec = match grid {
        Some(p) => read_toml(p)?,
        None => GridSpec::full(0),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dir = load_dataset_dir(dataset)?;
    let data = ExperimentData::prepare(
        &dir.dataset,
        dir.sources(),
        spec.seed,
        spec.k_folds,
        spec.test_fraction,
    )?;
    let configs = spec.configs();
    info!("running {} configs", configs.len());
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("grid_spec.json"), &spec)?;
    let (rows, ok) = match run_grid(&data, &configs, parallel) {
        Ok(rows) => (rows, true),
        Err(f) => {
            warn!("{} failed: {}", f.failed, f.error);
            (f.completed, false)
        }
    };
    let path = save_rows(
        out,
        &GridResults {
            dataset: Some(dataset.to_path_buf()),
            seed: spec.seed,
            rows,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(ok)
}

fn stats(results: &Path, axis: Axis) -> Result<()> {
    let res = load_rows(results)?;
    let mut tables = Vec::new();
    for m in Metric::ALL {
        let t = pairwise_table(&res.rows, axis, m)?;
        println!("{t}");
        tables.push(t);
    }
    let p = results.join(format!("pvalues_{axis}.csv"));
    fs::write(&p, pvalues_csv(&tables)).with_context(|| format!("writing {}", p.display()))?;
    println!("wrote {}", p.display());
    Ok(())
}

fn report_cmd(results: &Path, out: &Path) -> Result<()> {
    let res = load_rows(results)?;
    let tables = stats_tables(&res.rows, &Axis::ALL)?;
    let files = report(&res.rows, &tables, out)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    if tables.is_empty() {
        println!("no comparable levels; {PVALUES_CSV} skipped");
    }
    Ok(())
}

fn evaluate_test_cmd(checkpoint: &Path, dataset: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let ds_path = dataset
        .map(Path::to_path_buf)
        .or_else(|| ckpt.dataset.clone())
        .context("no dataset given and none recorded in the checkpoint")?;
    let dir = load_dataset_dir(&ds_path)?;
    let data = ExperimentData::for_config(&dir.dataset, dir.sources(), &ckpt.config)?;
    let eval = evaluate_test(&ckpt, &data)?;
    let out = serde_json::json!({
        "config": ckpt.config,
        "seed": ckpt.seed,
        "fold": ckpt.fold,
        "test_size": data.split.test.len(),
        "test": eval,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest { graphs } => ingest(&graphs),
        Command::Synth { spec, seed, out } => synth(spec.as_deref(), seed, &out).map(|_| true),
        Command::Train { config } => train(&config).map(|_| true),
        Command::Grid {
            dataset,
            out,
            parallel,
            seed,
            grid: g,
        } => grid(&dataset, &out, parallel, seed, g.as_deref()),
        Command::Stats { results, axis } => stats(&results, axis).map(|_| true),
        Command::Report { results, out } => report_cmd(&results, &out).map(|_| true),
        Command::EvaluateTest {
            checkpoint,
            dataset,
        } => evaluate_test_cmd(&checkpoint, dataset.as_deref()).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
