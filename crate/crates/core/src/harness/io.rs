use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::config::{ExperimentConfig, ResultRow};
use super::runner::{ExperimentData, FoldModel, THRESHOLD};
use super::HarnessError;
use crate::data_model::{load_dataset, save_dataset, Dataset};
use crate::eval_metrics::{evaluate, EvalResult};
use crate::features::{apply_normalizer, assemble_features, FeatureLayout, Normalizer};
use crate::gnn::model::predict;
use crate::gnn::train::stack;
use crate::gnn::{neighbor_lists, Example, ModelParams};
use crate::text_embed::{
    load_contextual_store, load_static_table, ContextualStore, StaticTable, TextSources,
};

pub const GRAPHS_FILE: &str = "graphs.jsonl";
pub const STATIC_FILE: &str = "static_table.txt";
pub const CONTEXTUAL_FILE: &str = "contextual.jsonl";
pub const ROWS_FILE: &str = "grid.json";

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| HarnessError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// A dataset directory: graphs plus whichever embedding sources exist.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub dataset: Dataset,
    pub table: Option<StaticTable>,
    pub store: Option<ContextualStore>,
}

impl DatasetDir {
    pub fn sources(&self) -> TextSources<'_> {
        TextSources {
            table: self.table.as_ref(),
            store: self.store.as_ref(),
        }
    }
}

pub fn load_dataset_dir(dir: &Path) -> Result<DatasetDir, HarnessError> {
    let dataset = load_dataset(dir.join(GRAPHS_FILE))?;
    let static_path = dir.join(STATIC_FILE);
    let table = static_path
        .exists()
        .then(|| load_static_table(&static_path))
        .transpose()?;
    let ctx_path = dir.join(CONTEXTUAL_FILE);
    let store = ctx_path
        .exists()
        .then(|| load_contextual_store(&ctx_path))
        .transpose()?;
    Ok(DatasetDir {
        dataset,
        table,
        store,
    })
}

pub fn save_dataset_dir(
    dir: &Path,
    dataset: &Dataset,
    table: Option<&StaticTable>,
    store: Option<&ContextualStore>,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_dataset(dataset, dir.join(GRAPHS_FILE))?;
    if let Some(t) = table {
        let p = dir.join(STATIC_FILE);
        let mut w = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
        t.write(&mut w).and_then(|_| w.flush()).map_err(io_err(&p))?;
    }
    if let Some(s) = store {
        let p = dir.join(CONTEXTUAL_FILE);
        let mut w = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
        s.write(&mut w).and_then(|_| w.flush()).map_err(io_err(&p))?;
    }
    Ok(())
}

/// Grid results as written by `save_rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResults {
    pub dataset: Option<PathBuf>,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
}

pub fn save_rows(dir: &Path, results: &GridResults) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(ROWS_FILE);
    write_json(&p, results)?;
    Ok(p)
}

pub fn load_rows(dir: &Path) -> Result<GridResults, HarnessError> {
    read_json(&dir.join(ROWS_FILE))
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained fold model with everything needed to score new graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub fold: usize,
    pub normalizer: Normalizer,
    pub layout: FeatureLayout,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub validation: EvalResult,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn from_fold(
        cfg: &ExperimentConfig,
        dataset: Option<PathBuf>,
        fold: usize,
        m: &FoldModel,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            seed: cfg.seed,
            dataset,
            fold,
            normalizer: m.normalizer.clone(),
            layout: m.layout.clone(),
            best_epoch: m.state.best_epoch,
            best_val_loss: m.state.best_val_loss,
            validation: m.eval,
            params: m.state.best_params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let c: Checkpoint = read_json(path)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(HarnessError::Mismatch(format!(
                "{}: checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                path.display(),
                c.version
            )));
        }
        Ok(c)
    }
}

/// Scores a checkpoint on the held-out test split of `data`.
pub fn evaluate_test(ckpt: &Checkpoint, data: &ExperimentData<'_>) -> Result<EvalResult, HarnessError> {
    let text = ckpt.config.text();
    let mut mats = Vec::with_capacity(data.split.test.len());
    let mut nbrs = Vec::with_capacity(data.split.test.len());
    for &i in &data.split.test {
        let g = &data.dataset.graphs[i];
        let m = apply_normalizer(&ckpt.normalizer, &assemble_features(g, &text, &data.sources)?);
        if m.layout != ckpt.layout {
            return Err(HarnessError::Mismatch(format!(
                "graph {} has feature width {}, checkpoint expects {}",
                g.graph_id,
                m.layout.width(),
                ckpt.layout.width()
            )));
        }
        mats.push(m);
        nbrs.push(neighbor_lists(g, ckpt.config.train.direction));
    }
    let examples: Vec<Example<'_>> = data
        .split
        .test
        .iter()
        .enumerate()
        .map(|(k, &i)| Example {
            x: mats[k].x.view(),
            neighbors: &nbrs[k],
            label: data.dataset.graphs[i].label.target(),
        })
        .collect();
    let (batch, labels) = stack(&examples);
    let probs = predict(&ckpt.params, &batch)?;
    Ok(evaluate(&labels, &probs, THRESHOLD)?)
}
