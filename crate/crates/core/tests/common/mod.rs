#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use textgnn_core::data_model::{Label, NodeKind, PropagationGraph, RawNode};
use textgnn_core::eval_metrics::{EvalResult, FoldAggregate, MeanStd};
use textgnn_core::gnn::model::forward_batch;
use textgnn_core::gnn::{backward, batch_loss, GraphBatch, ModelParams};
use textgnn_core::harness::{ExperimentConfig, FoldRecord, ResultRow};
use textgnn_core::text_embed::{ContextualStore, StaticTable, TextConfig, TextSource};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];

fn random_text<R: Rng>(r: &mut R) -> String {
    let n = r.random_range(0..5);
    (0..n)
        .map(|_| WORDS[r.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random valid tree with `n` nodes, node 0 the news node, parents before
/// children.
pub fn random_graph<R: Rng>(r: &mut R, id: &str, n: usize) -> PropagationGraph {
    assert!(n >= 1);
    let mut nodes = vec![RawNode::news(format!("{id}-0"))];
    let mut edges = Vec::new();
    let mut ts = vec![0i64];
    for k in 1..n {
        let p = r.random_range(0..k);
        let kind = if p == 0 {
            NodeKind::Tweet
        } else if r.random::<bool>() {
            NodeKind::Retweet
        } else {
            NodeKind::Reply
        };
        let t = if p == 0 {
            1_000 + r.random_range(0..500)
        } else {
            ts[p] + r.random_range(0..5_000)
        };
        let mut node = RawNode::post(format!("{id}-{k}"), kind, t);
        node.follower_count = r.random_range(0..100_000);
        node.followee_count = r.random_range(0..5_000);
        node.status_count = r.random_range(0..50_000);
        node.verified = r.random::<f64>() < 0.2;
        node.post_text = random_text(r);
        node.profile_text = random_text(r);
        nodes.push(node);
        edges.push((p, k));
        ts.push(t);
    }
    PropagationGraph {
        graph_id: id.to_string(),
        label: if r.random::<bool>() { Label::Fake } else { Label::True },
        nodes,
        edges,
    }
}

pub fn random_sources<R: Rng>(r: &mut R, graphs: &[PropagationGraph], d: usize) -> (StaticTable, ContextualStore) {
    let mut table = StaticTable::new(d);
    for w in WORDS {
        table.insert(w, (0..d).map(|_| r.random_range(-1.0..1.0)).collect());
    }
    let mut store = ContextualStore::new(d);
    for g in graphs {
        for n in g.nodes.iter().skip(1) {
            for s in [TextSource::Profile, TextSource::Post] {
                if r.random::<f64>() < 0.85 {
                    let v = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
                    store.insert(n.node_id.clone(), s, v).unwrap();
                }
            }
        }
    }
    (table, store)
}

/// Glorot weights plus non-zero attention vectors and biases, so that every
/// parameter has a non-trivial gradient.
pub fn random_params<R: Rng>(r: &mut R, d_in: usize) -> ModelParams {
    let mut p = ModelParams::init(textgnn_core::gnn::ModelShape::standard(d_in), r);
    for (name, t) in p.tensors_mut() {
        if name.contains("att") || name.contains(".b") {
            for v in t.iter_mut() {
                *v = r.random_range(-0.5..0.5);
            }
        }
    }
    p
}

/// Signs of every input to a non-smooth function (LeakyReLU, ELU) in the
/// forward pass.
fn kink_signature(p: &ModelParams, batch: &GraphBatch) -> Vec<bool> {
    let c = forward_batch(p, batch).unwrap();
    c.gat1
        .u
        .iter()
        .chain(&c.gat2.u)
        .chain(c.gat1.out.iter())
        .chain(c.hid_pre.iter())
        .map(|v| *v > 0.0)
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Compares analytic gradients against Richardson-extrapolated central
/// differences, coordinate by coordinate. Coordinates whose perturbation
/// crosses a kink are skipped and counted.
pub fn grad_check(p: &ModelParams, batch: &GraphBatch, labels: &[u8], h: f64, floor: f64) -> GradReport {
    let (_, grads) = backward(p, batch, labels).unwrap();
    let base_sig = kink_signature(p, batch);
    let mut rep = GradReport::default();
    let mut work = p.clone();
    let names = ModelParams::TENSOR_NAMES;
    for (ti, _) in names.iter().enumerate() {
        let len = p.tensors()[ti].1.len();
        for k in 0..len {
            let orig = p.tensors()[ti].1[k];
            let mut eval = |delta: f64| -> (f64, bool) {
                work.tensors_mut()[ti].1[k] = orig + delta;
                let l = batch_loss(&work, batch, labels).unwrap();
                let same = kink_signature(&work, batch) == base_sig;
                work.tensors_mut()[ti].1[k] = orig;
                (l, same)
            };
            let (lp, sp) = eval(h);
            let (lm, sm) = eval(-h);
            if !(sp && sm) {
                rep.skipped += 1;
                continue;
            }
            let (lp2, _) = eval(h / 2.0);
            let (lm2, _) = eval(-h / 2.0);
            let d1 = (lp - lm) / (2.0 * h);
            let d2 = (lp2 - lm2) / h;
            let numeric = (4.0 * d2 - d1) / 3.0;
            let analytic = grads.tensors()[ti].1[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            rep.max_rel = rep.max_rel.max(rel);
            rep.checked += 1;
        }
    }
    rep
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn brute_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let mut wins2 = 0u64;
    let (mut np, mut nn) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            np += 1;
        } else {
            nn += 1;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                if scores[i] > scores[j] {
                    wins2 += 2;
                } else if scores[i] == scores[j] {
                    wins2 += 1;
                }
            }
        }
    }
    wins2 as f64 / 2.0 / (np * nn) as f64
}

/// Average precision by sweeping every distinct score as a threshold.
pub fn brute_ap(labels: &[u8], scores: &[f64]) -> f64 {
    let mut th: Vec<f64> = scores.to_vec();
    th.sort_by(|a, b| b.partial_cmp(a).unwrap());
    th.dedup();
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in th {
        let mut tp = 0.0;
        let mut pp = 0.0;
        for (&l, &s) in labels.iter().zip(scores) {
            if s >= t {
                pp += 1.0;
                if l == 1 {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        ap += (recall - prev_recall) * (tp / pp);
        prev_recall = recall;
    }
    ap
}

/// Two-sided signed-rank p by enumerating all 2^n sign assignments.
pub fn wilcoxon_enumeration(a: &[f64], b: &[f64]) -> Option<f64> {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return None;
    }
    // doubled midranks, as integers
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].abs().partial_cmp(&d[j].abs()).unwrap());
    let mut r2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        for k in i..=j {
            r2[idx[k]] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    let total: u64 = r2.iter().sum();
    let w_plus: u64 = (0..n).filter(|&k| d[k] > 0.0).map(|k| r2[k]).sum();
    let obs = w_plus.min(total - w_plus);
    let mut count = 0u64;
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| r2[k]).sum();
        if w.min(total - w) <= obs {
            count += 1;
        }
    }
    Some(count as f64 / (1u64 << n) as f64)
}

pub fn eval(f1: f64, auc: f64, ap: f64) -> EvalResult {
    EvalResult {
        f1_macro: f1,
        roc_auc: auc,
        auc_pr: ap,
        n_pos: 10,
        n_neg: 90,
        threshold: 0.5,
    }
}

/// A result row with fixed aggregates and per-fold values spread around them.
pub fn mock_row(cfg: ExperimentConfig, f1: f64, auc: f64, ap: f64) -> ResultRow {
    let offsets = [-0.01, 0.01, -0.005, 0.005, 0.0];
    let folds: Vec<EvalResult> = offsets
        .iter()
        .map(|o| eval(f1 / 100.0 + o, auc / 100.0 + o, ap / 100.0 + o))
        .collect();
    ResultRow {
        aggregate: FoldAggregate {
            f1_macro: MeanStd { mean: f1, std: 1.0 },
            roc_auc: MeanStd { mean: auc, std: 0.6 },
            auc_pr: MeanStd { mean: ap, std: 0.7 },
        },
        fold_records: vec![
            FoldRecord {
                best_epoch: 7,
                best_val_loss: 0.5,
                prob_std: 0.1,
            };
            folds.len()
        ],
        folds,
        seed: cfg.seed,
        config: cfg,
        fold_hash: "00112233aabbccdd".into(),
        wall_clock_secs: 0.0,
    }
}

pub fn text_configs() -> Vec<TextConfig> {
    TextConfig::all()
}

pub fn feature_block(x: &Array2<f64>, cols: std::ops::Range<usize>) -> Array2<f64> {
    x.slice(ndarray::s![.., cols]).to_owned()
}
