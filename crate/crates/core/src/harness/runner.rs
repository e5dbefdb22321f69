use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::config::{ExperimentConfig, FoldRecord, ResultRow};
use super::split::{fold_hash, stratified_kfold, stratified_split, Fold, Split};
use super::HarnessError;
use crate::augment::{oversample, NoiseConfig};
use crate::data_model::{Dataset, Label};
use crate::eval_metrics::{aggregate_folds, evaluate, EvalResult};
use crate::features::{
    apply_normalizer, assemble_features, fit_normalizer, FeatureLayout, FeatureMatrix, Normalizer,
};
use crate::gnn::model::predict;
use crate::gnn::train::stack;
use crate::gnn::{neighbor_lists, train, Example, ModelParams, ModelShape, StreamKey, TrainState};
use crate::rng::{stream, Purpose};
use crate::text_embed::TextSources;

pub const THRESHOLD: f64 = 0.5;

/// A dataset with its fixed test split and cross-validation folds. Shared
/// read-only by every config of a grid, which is what makes fold-level
/// results pairable.
#[derive(Debug, Clone)]
pub struct ExperimentData<'a> {
    pub dataset: &'a Dataset,
    pub sources: TextSources<'a>,
    pub seed: u64,
    pub test_fraction: f64,
    pub split: Split,
    pub folds: Vec<Fold>,
    pub fold_hash: String,
}

impl<'a> ExperimentData<'a> {
    pub fn prepare(
        dataset: &'a Dataset,
        sources: TextSources<'a>,
        seed: u64,
        k_folds: usize,
        test_fraction: f64,
    ) -> Result<Self, HarnessError> {
        let labels = dataset.labels();
        let split = stratified_split(&labels, test_fraction, seed)?;
        let folds = stratified_kfold(&split.dev, &labels, k_folds, seed)?;
        let ids: Vec<&str> = dataset.graphs.iter().map(|g| g.graph_id.as_str()).collect();
        let fold_hash = fold_hash(&folds, &ids);
        Ok(ExperimentData {
            dataset,
            sources,
            seed,
            test_fraction,
            split,
            folds,
            fold_hash,
        })
    }

    pub fn for_config(
        dataset: &'a Dataset,
        sources: TextSources<'a>,
        cfg: &ExperimentConfig,
    ) -> Result<Self, HarnessError> {
        Self::prepare(dataset, sources, cfg.seed, cfg.k_folds, cfg.test_fraction)
    }

    fn check(&self, cfg: &ExperimentConfig) -> Result<(), HarnessError> {
        if cfg.seed != self.seed
            || cfg.k_folds != self.folds.len()
            || cfg.test_fraction != self.test_fraction
        {
            return Err(HarnessError::Mismatch(format!(
                "config {} expects seed {} / {} folds / test fraction {}, data was prepared with {} / {} / {}",
                cfg.label(),
                cfg.seed,
                cfg.k_folds,
                cfg.test_fraction,
                self.seed,
                self.folds.len(),
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Everything produced by training one fold.
#[derive(Debug, Clone)]
pub struct FoldModel {
    pub state: TrainState,
    pub normalizer: Normalizer,
    pub layout: FeatureLayout,
    pub eval: EvalResult,
    /// Std of the validation-set probabilities of the selected snapshot.
    pub prob_std: f64,
    pub val_probs: Vec<f64>,
    pub val_labels: Vec<u8>,
}

fn assert_unique(ids: &[usize], what: &str) -> Result<(), HarnessError> {
    let mut seen = HashSet::with_capacity(ids.len());
    if ids.iter().all(|i| seen.insert(*i)) {
        Ok(())
    } else {
        Err(HarnessError::Mismatch(format!("{what} contains duplicated graphs")))
    }
}

/// Oversampled training indices of fold `fold`, in deterministic order.
pub fn oversampled_train(data: &ExperimentData<'_>, fold: usize) -> Result<Vec<usize>, HarnessError> {
    let labels = data.dataset.labels();
    let items: Vec<(usize, Label)> = data.folds[fold].train.iter().map(|&i| (i, labels[i])).collect();
    let mut rng = stream(data.seed, Purpose::Oversample, &[fold as u64]);
    Ok(oversample(&items, &mut rng)?.into_iter().map(|(i, _)| i).collect())
}

/// Feature matrices for graph indices `ids`, keyed by index.
fn features_for(
    data: &ExperimentData<'_>,
    cfg: &ExperimentConfig,
    ids: impl Iterator<Item = usize>,
) -> Result<BTreeMap<usize, FeatureMatrix>, HarnessError> {
    let text = cfg.text();
    let mut out = BTreeMap::new();
    for i in ids {
        if let std::collections::btree_map::Entry::Vacant(e) = out.entry(i) {
            e.insert(assemble_features(&data.dataset.graphs[i], &text, &data.sources)?);
        }
    }
    Ok(out)
}

/// Oversamples, fits the normalizer, trains and scores one fold.
pub fn train_fold(
    data: &ExperimentData<'_>,
    cfg: &ExperimentConfig,
    fold: usize,
) -> Result<FoldModel, HarnessError> {
    data.check(cfg)?;
    let f = &data.folds[fold];
    assert_unique(&f.val, "validation fold")?;
    let train_ids = oversampled_train(data, fold)?;

    let raw = features_for(data, cfg, f.train.iter().chain(&f.val).copied())?;
    let normalizer = fit_normalizer(f.train.iter().map(|i| &raw[i]));
    let normed: BTreeMap<usize, FeatureMatrix> = raw
        .iter()
        .map(|(&i, m)| (i, apply_normalizer(&normalizer, m)))
        .collect();
    let layout = normed
        .values()
        .next()
        .map(|m| m.layout.clone())
        .ok_or_else(|| HarnessError::Mismatch("empty fold".into()))?;

    let direction = cfg.train.direction;
    let neighbors: BTreeMap<usize, Vec<Vec<usize>>> = normed
        .keys()
        .map(|&i| (i, neighbor_lists(&data.dataset.graphs[i], direction)))
        .collect();
    let example = |i: usize| Example {
        x: normed[&i].x.view(),
        neighbors: &neighbors[&i],
        label: data.dataset.graphs[i].label.target(),
    };
    let train_set: Vec<Example<'_>> = train_ids.iter().map(|&i| example(i)).collect();
    let val_set: Vec<Example<'_>> = f.val.iter().map(|&i| example(i)).collect();

    let shape = ModelShape::standard(layout.width());
    let init = ModelParams::init(shape, &mut stream(data.seed, Purpose::Init, &[fold as u64]));
    let state = train(
        init,
        &train_set,
        &val_set,
        &layout,
        &cfg.train,
        NoiseConfig::new(cfg.alpha),
        StreamKey {
            master: data.seed,
            fold: fold as u64,
        },
    )?;

    let (batch, labels) = stack(&val_set);
    let probs = predict(&state.best_params, &batch)?;
    let eval = evaluate(&labels, &probs, THRESHOLD)?;
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    let prob_std =
        (probs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / probs.len() as f64).sqrt();
    Ok(FoldModel {
        state,
        normalizer,
        layout,
        eval,
        prob_std,
        val_probs: probs,
        val_labels: labels,
    })
}

fn fold_record(m: &FoldModel) -> FoldRecord {
    FoldRecord {
        best_epoch: m.state.best_epoch,
        best_val_loss: m.state.best_val_loss,
        prob_std: m.prob_std,
    }
}

fn assemble_row(
    data: &ExperimentData<'_>,
    cfg: &ExperimentConfig,
    models: Vec<(FoldModel, f64)>,
) -> Result<ResultRow, HarnessError> {
    let folds: Vec<EvalResult> = models.iter().map(|(m, _)| m.eval).collect();
    Ok(ResultRow {
        config: cfg.clone(),
        aggregate: aggregate_folds(&folds)?,
        fold_records: models.iter().map(|(m, _)| fold_record(m)).collect(),
        folds,
        fold_hash: data.fold_hash.clone(),
        seed: data.seed,
        wall_clock_secs: models.iter().map(|(_, t)| t).sum(),
    })
}

fn timed_fold(
    data: &ExperimentData<'_>,
    cfg: &ExperimentConfig,
    fold: usize,
) -> Result<(FoldModel, f64), HarnessError> {
    let t = Instant::now();
    let m = train_fold(data, cfg, fold)?;
    Ok((m, t.elapsed().as_secs_f64()))
}

/// Runs every fold of one config sequentially.
pub fn run_config(data: &ExperimentData<'_>, cfg: &ExperimentConfig) -> Result<ResultRow, HarnessError> {
    let models = (0..data.folds.len())
        .map(|f| timed_fold(data, cfg, f))
        .collect::<Result<Vec<_>, _>>()?;
    assemble_row(data, cfg, models)
}

/// A grid that stopped on an error, with the rows that did complete.
#[derive(Debug)]
pub struct GridFailure {
    pub completed: Vec<ResultRow>,
    pub failed: String,
    pub error: HarnessError,
}

/// Runs `configs` over shared folds with at most `parallelism` worker threads.
///
/// Configs without text segments share one computation. Rows come back in
/// the order of `configs` regardless of scheduling.
pub fn run_grid(
    data: &ExperimentData<'_>,
    configs: &[ExperimentConfig],
    parallelism: usize,
) -> Result<Vec<ResultRow>, Box<GridFailure>> {
    let fail = |completed, failed: String, error| {
        Box::new(GridFailure {
            completed,
            failed,
            error,
        })
    };
    let mut unique: Vec<ExperimentConfig> = Vec::new();
    let slot: Vec<usize> = configs
        .iter()
        .map(|c| {
            let e = c.effective();
            match unique.iter().position(|u| *u == e) {
                Some(p) => p,
                None => {
                    unique.push(e);
                    unique.len() - 1
                }
            }
        })
        .collect();
    let k = data.folds.len();
    info!(
        "grid: {} configs, {} distinct computations, {} folds, {} threads",
        configs.len(),
        unique.len(),
        k,
        parallelism.max(1)
    );

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => return Err(fail(Vec::new(), "thread pool".into(), HarnessError::Mismatch(e.to_string()))),
    };
    let tasks: Vec<(usize, usize)> = (0..unique.len())
        .flat_map(|u| (0..k).map(move |f| (u, f)))
        .collect();
    let outcomes: Vec<Result<(FoldModel, f64), HarnessError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(u, f)| {
                let r = timed_fold(data, &unique[u], f);
                if let Err(e) = &r {
                    warn!("{} fold {f} failed: {e}", unique[u].label());
                }
                r
            })
            .collect()
    });

    let mut per_unique: Vec<Result<Vec<(FoldModel, f64)>, HarnessError>> =
        (0..unique.len()).map(|_| Ok(Vec::with_capacity(k))).collect();
    for ((u, _), outcome) in tasks.iter().zip(outcomes) {
        match (&mut per_unique[*u], outcome) {
            (Ok(v), Ok(m)) => v.push(m),
            (slot @ Ok(_), Err(e)) => *slot = Err(e),
            (Err(_), _) => {}
        }
    }

    let mut rows = Vec::with_capacity(configs.len());
    let mut first_error: Option<(String, HarnessError)> = None;
    let mut built: Vec<Option<Result<ResultRow, String>>> = vec![None; unique.len()];
    for (u, res) in per_unique.into_iter().enumerate() {
        built[u] = Some(match res {
            Ok(models) => match assemble_row(data, &unique[u], models) {
                Ok(r) => Ok(r),
                Err(e) => {
                    first_error.get_or_insert((unique[u].label(), e));
                    Err(unique[u].label())
                }
            },
            Err(e) => {
                first_error.get_or_insert((unique[u].label(), e));
                Err(unique[u].label())
            }
        });
    }
    for (cfg, &u) in configs.iter().zip(&slot) {
        if let Some(Ok(row)) = &built[u] {
            let mut row = row.clone();
            row.config = cfg.clone();
            rows.push(row);
        }
    }
    match first_error {
        None => Ok(rows),
        Some((failed, error)) => Err(fail(rows, failed, error)),
    }
}
