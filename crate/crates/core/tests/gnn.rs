mod common;

use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::Rng;

use common::*;
use textgnn_core::augment::NoiseConfig;
use textgnn_core::features::{assemble_features, FeatureLayout};
use textgnn_core::gnn::model::forward_batch;
use textgnn_core::gnn::params::HeadMerge;
use textgnn_core::gnn::{
    backward, forward, gat_layer_forward, neighbor_lists, predict, train, Activation, Example,
    GatLayerParams, GraphBatch, GraphRef, MessageDirection, ModelParams, StreamKey, TrainConfig,
};
use textgnn_core::text_embed::{TextConfig, TextSources};

fn single(x: ArrayView2<'_, f64>, nb: &[Vec<usize>]) -> GraphBatch {
    GraphBatch::new(&[GraphRef { x, neighbors: nb }])
}

#[test]
fn gradients_match_finite_differences_across_configs() {
    let mut r = rng(101);
    let graphs: Vec<_> = (0..20)
        .map(|i| {
            let n = r.random_range(1..=6);
            random_graph(&mut r, &format!("g{i}"), n)
        })
        .collect();
    let (table, store) = random_sources(&mut r, &graphs, 3);
    let sources = TextSources {
        table: Some(&table),
        store: Some(&store),
    };
    let cfgs = TextConfig::all();
    let mut worst = GradReport::default();
    for (i, g) in graphs.iter().enumerate() {
        let cfg = cfgs[i % cfgs.len()];
        let m = assemble_features(g, &cfg, &sources).unwrap();
        let nb = neighbor_lists(g, MessageDirection::Downstream);
        let p = random_params(&mut r, m.cols());
        let rep = grad_check(&p, &single(m.x.view(), &nb), &[g.label.target()], 1e-4, 1e-6);
        worst.max_rel = worst.max_rel.max(rep.max_rel);
        worst.checked += rep.checked;
        worst.skipped += rep.skipped;
    }
    assert!(worst.max_rel <= 1e-4, "{worst:?}");
    assert!(worst.skipped * 100 < worst.checked, "{worst:?}");
}

#[test]
fn batched_gradient_is_mean_of_single_gradients() {
    let mut r = rng(7);
    let graphs: Vec<_> = (0..4).map(|i| random_graph(&mut r, &format!("b{i}"), 2 + i)).collect();
    let cfg = TextConfig::all()[0];
    let sources = TextSources::default();
    let mats: Vec<_> = graphs.iter().map(|g| assemble_features(g, &cfg, &sources).unwrap()).collect();
    let nbs: Vec<_> = graphs.iter().map(|g| neighbor_lists(g, MessageDirection::Downstream)).collect();
    let p = random_params(&mut r, mats[0].cols());
    let labels: Vec<u8> = vec![1, 0, 0, 1];
    let refs: Vec<GraphRef<'_>> = mats
        .iter()
        .zip(&nbs)
        .map(|(m, nb)| GraphRef {
            x: m.x.view(),
            neighbors: nb,
        })
        .collect();
    let (loss, g_batch) = backward(&p, &GraphBatch::new(&refs), &labels).unwrap();
    let mut acc = p.zeros_like();
    let mut loss_acc = 0.0;
    for (i, rf) in refs.iter().enumerate() {
        let (l, g) = backward(&p, &GraphBatch::new(&[*rf]), &labels[i..=i]).unwrap();
        acc.axpy(0.25, &g);
        loss_acc += l / 4.0;
    }
    assert!((loss - loss_acc).abs() < 1e-12);
    for ((_, a), (_, b)) in g_batch.tensors().iter().zip(acc.tensors().iter()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

/// Dense reference for one GAT layer: explicit loops over heads and
/// aggregation lists.
fn dense_gat(layer: &GatLayerParams, h: &Array2<f64>, nb: &[Vec<usize>]) -> (Array2<f64>, Vec<Vec<Vec<f64>>>) {
    let z = h.dot(&layer.w);
    let (heads, dh) = (layer.heads, layer.d_head);
    let mut out = Array2::zeros((h.nrows(), heads * dh));
    let mut atts = Vec::new();
    for i in 0..h.nrows() {
        let mut per_head = Vec::new();
        for k in 0..heads {
            let score = |j: usize| {
                let mut e = 0.0;
                for c in 0..dh {
                    e += layer.att_self[[k, c]] * z[[i, k * dh + c]] + layer.att_neigh[[k, c]] * z[[j, k * dh + c]];
                }
                if e > 0.0 {
                    e
                } else {
                    0.2 * e
                }
            };
            let es: Vec<f64> = nb[i].iter().map(|&j| score(j)).collect();
            let mx = es.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = es.iter().map(|e| (e - mx).exp()).collect();
            let s: f64 = ex.iter().sum();
            let a: Vec<f64> = ex.iter().map(|e| e / s).collect();
            for (pos, &j) in nb[i].iter().enumerate() {
                for c in 0..dh {
                    out[[i, k * dh + c]] += a[pos] * z[[j, k * dh + c]];
                }
            }
            per_head.push(a);
        }
        atts.push(per_head);
    }
    (out, atts)
}

#[test]
fn gat_layer_matches_dense_reference() {
    let mut r = rng(3);
    for trial in 0..20 {
        let n = r.random_range(1..=8);
        let g = random_graph(&mut r, "d", n);
        let nb = neighbor_lists(&g, if trial % 2 == 0 { MessageDirection::Downstream } else { MessageDirection::Upstream });
        let p = random_params(&mut r, 5);
        let h = Array2::from_shape_fn((n, 5), |_| r.random_range(-2.0..2.0));
        let (out, att) = gat_layer_forward(&p.gat1, h.view(), &nb, Activation::Identity).unwrap();
        let (dense, datt) = dense_gat(&p.gat1, &h, &nb);
        for (a, b) in out.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in att.iter().flatten().flatten().zip(datt.iter().flatten().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_rows_are_distributions() {
    let mut r = rng(5);
    for i in 0..100 {
        let n = r.random_range(1..=12);
        let g = random_graph(&mut r, &format!("a{i}"), n);
        let nb = neighbor_lists(&g, MessageDirection::Downstream);
        let p = random_params(&mut r, 10);
        let x = Array2::from_shape_fn((n, 10), |_| r.random_range(-3.0..3.0));
        let batch = single(x.view(), &nb);
        let c = forward_batch(&p, &batch).unwrap();
        for att in [c.attention1(&batch), c.attention2(&batch)] {
            for row in att.iter().flatten() {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() <= 1e-9);
                assert!(row.iter().all(|a| (0.0..=1.0).contains(a)));
            }
        }
    }
}

fn permute_graph(x: &Array2<f64>, nb: &[Vec<usize>], perm: &[usize]) -> (Array2<f64>, Vec<Vec<usize>>) {
    // node i moves to position perm[i]
    let n = x.nrows();
    let mut px = Array2::zeros(x.raw_dim());
    let mut pnb = vec![Vec::new(); n];
    for i in 0..n {
        px.row_mut(perm[i]).assign(&x.row(i));
        pnb[perm[i]] = nb[i].iter().map(|&j| perm[j]).collect();
    }
    (px, pnb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graph_output_is_permutation_invariant(seed in 0u64..10_000, n in 1usize..8) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, "p", n);
        let nb = neighbor_lists(&g, MessageDirection::Downstream);
        let p = random_params(&mut r, 4);
        let x = Array2::from_shape_fn((n, 4), |_| r.random_range(-1.0..1.0));
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let (px, pnb) = permute_graph(&x, &nb, &perm);
        let a = forward(&p, x.view(), &nb).unwrap();
        let b = forward(&p, px.view(), &pnb).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn batching_does_not_change_predictions(seed in 0u64..10_000, k in 1usize..5) {
        let mut r = rng(seed);
        let items: Vec<(Array2<f64>, Vec<Vec<usize>>)> = (0..k)
            .map(|i| {
                let n = r.random_range(1..6);
                let g = random_graph(&mut r, &format!("q{i}"), n);
                let x = Array2::from_shape_fn((n, 3), |_| r.random_range(-1.0..1.0));
                (x, neighbor_lists(&g, MessageDirection::Upstream))
            })
            .collect();
        let p = random_params(&mut r, 3);
        let refs: Vec<GraphRef<'_>> = items.iter().map(|(x, nb)| GraphRef { x: x.view(), neighbors: nb }).collect();
        let batched = predict(&p, &GraphBatch::new(&refs)).unwrap();
        for (i, (x, nb)) in items.iter().enumerate() {
            prop_assert_eq!(batched[i], forward(&p, x.view(), nb).unwrap());
        }
    }
}

#[test]
fn single_head_layer_shapes() {
    let layer = GatLayerParams::zeros(6, 1, 32, HeadMerge::Single);
    assert_eq!((layer.d_in(), layer.d_out()), (6, 32));
}

/// Two linearly separable clusters of tiny graphs.
fn toy_examples(seed: u64, n: usize) -> Vec<(Array2<f64>, Vec<Vec<usize>>, u8)> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let nodes = r.random_range(2..5);
            let g = random_graph(&mut r, "t", nodes);
            let shift = if label == 1 { 1.0 } else { -1.0 };
            let x = Array2::from_shape_fn((nodes, 4), |(_, c)| {
                if c == 0 {
                    shift + r.random_range(-0.3..0.3)
                } else {
                    r.random_range(-1.0..1.0)
                }
            });
            (x, neighbor_lists(&g, MessageDirection::Downstream), label)
        })
        .collect()
}

#[test]
fn training_separates_toy_set_and_is_deterministic() {
    let data = toy_examples(9, 60);
    let ex: Vec<Example<'_>> = data
        .iter()
        .map(|(x, nb, y)| Example {
            x: x.view(),
            neighbors: nb,
            label: *y,
        })
        .collect();
    let (tr, va) = ex.split_at(40);
    let layout = FeatureLayout::new(&TextConfig::all()[0], 0);
    let mut layout4 = layout.clone();
    layout4.profile = Some(1..4);
    let cfg = TrainConfig::default();
    let key = StreamKey { master: 3, fold: 0 };
    let init = ModelParams::init(textgnn_core::gnn::ModelShape::standard(4), &mut rng(1));
    let run = || train(init.clone(), tr, va, &layout4, &cfg, NoiseConfig::new(5.0), key).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert!(a.best_val_loss < 0.3, "{}", a.best_val_loss);
    assert_eq!(a.history.len(), 60);
    let best = a.history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(best, a.best_val_loss);
    assert_eq!(a.history[a.best_epoch - 1].val_loss, best);
}
