mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use textgnn_core::eval_metrics::{auc_pr, f1_macro, roc_auc, Metric};
use textgnn_core::harness::{Axis, ExperimentConfig, GridSpec};
use textgnn_core::stats::{
    holm_adjust, pairwise_table, wilcoxon_signed_rank, PairedSample, StatsError, WilcoxonMethod,
};
use textgnn_core::text_embed::{Encoder, TextConfig};

/// Labels with both classes and scores drawn from a small grid, so ties occur.
fn instance(seed: u64) -> (Vec<u8>, Vec<f64>) {
    let mut r = rng(seed);
    let n = r.random_range(2..=50);
    let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
    labels[0] = 1;
    labels[1] = 0;
    let scores = (0..n).map(|_| r.random_range(0..12) as f64 / 11.0).collect();
    (labels, scores)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn auc_matches_pair_counting(seed in any::<u64>()) {
        let (l, s) = instance(seed);
        prop_assert_eq!(roc_auc(&l, &s).unwrap(), brute_auc(&l, &s));
    }

    #[test]
    fn ap_matches_threshold_sweep(seed in any::<u64>()) {
        let (l, s) = instance(seed);
        prop_assert!((auc_pr(&l, &s).unwrap() - brute_ap(&l, &s)).abs() < 1e-12);
    }

    #[test]
    fn ranking_metrics_invariant_under_monotone_maps(seed in any::<u64>()) {
        let (l, s) = instance(seed);
        let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
        prop_assert_eq!(roc_auc(&l, &s).unwrap(), roc_auc(&l, &t).unwrap());
        prop_assert!((auc_pr(&l, &s).unwrap() - auc_pr(&l, &t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_complement_without_ties(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..40);
        let mut l: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        l[0] = 0;
        l[1] = 1;
        let s: Vec<f64> = (0..n).map(|i| i as f64 + r.random_range(0.0..0.5)).collect();
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((roc_auc(&l, &s).unwrap() + roc_auc(&l, &neg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f1_symmetric_under_relabeling(seed in any::<u64>()) {
        let (l, s) = instance(seed);
        let flipped_l: Vec<u8> = l.iter().map(|y| 1 - y).collect();
        // strict complement of the >= 0.5 rule
        let flipped_p: Vec<f64> = s.iter().map(|p| if *p >= 0.5 { 0.0 } else { 1.0 }).collect();
        prop_assert!((f1_macro(&l, &s, 0.5).unwrap() - f1_macro(&flipped_l, &flipped_p, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=12);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64 / 5.0).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64 / 5.0).collect();
        let res = wilcoxon_signed_rank(&PairedSample::new(a.clone(), b.clone()).unwrap());
        match wilcoxon_enumeration(&a, &b) {
            None => prop_assert_eq!(res.method, WilcoxonMethod::Degenerate),
            Some(p) => {
                prop_assert_eq!(res.method, WilcoxonMethod::Exact);
                prop_assert_eq!(res.p_value, p);
            }
        }
        let swapped = wilcoxon_signed_rank(&PairedSample::new(b, a).unwrap());
        prop_assert_eq!(swapped.p_value, res.p_value);
    }

    #[test]
    fn holm_is_monotone_and_conservative(ps in prop::collection::vec(0.0f64..=1.0, 1..20)) {
        let adj = holm_adjust(&ps).unwrap();
        let mut order: Vec<usize> = (0..ps.len()).collect();
        order.sort_by(|&i, &j| ps[i].partial_cmp(&ps[j]).unwrap());
        for w in order.windows(2) {
            prop_assert!(adj[w[0]] <= adj[w[1]]);
        }
        for (a, p) in adj.iter().zip(&ps) {
            prop_assert!(a >= p && *a <= 1.0);
            if *a < 0.05 {
                prop_assert!(*p < 0.05);
            }
        }
    }
}

#[test]
fn shift_gives_minimal_p() {
    let mut r = rng(4);
    for n in 1..=12 {
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let shifted: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        let res = wilcoxon_signed_rank(&PairedSample::new(shifted, b).unwrap());
        assert_eq!(res.w_minus, 0.0);
        assert_eq!(res.p_value, 2.0 / 2f64.powi(n));
    }
}

#[test]
fn holm_rejects_out_of_range() {
    assert!(matches!(holm_adjust(&[0.2, 1.5]), Err(StatsError::PValueRange(_))));
}

fn alpha_grid_rows(margin: f64) -> Vec<textgnn_core::harness::ResultRow> {
    let mut spec = GridSpec::full(1);
    spec.encoders = vec![Encoder::Contextual];
    spec.profiles = vec![true];
    spec.retweets = vec![true];
    spec.k_folds = 8;
    spec.configs()
        .into_iter()
        .map(|c| {
            let level = c.alpha / 5.0;
            let mut row = mock_row(c, 60.0, 80.0, 40.0);
            let mut r = rng(99);
            row.folds = (0..8)
                .map(|f| {
                    let base = 0.6 + 0.01 * f as f64 + r.random_range(0.0..0.001);
                    eval(base - margin * level, 0.8 - margin * level, 0.4 - margin * level)
                })
                .collect();
            row
        })
        .collect()
}

#[test]
fn alpha_table_has_fifteen_rows_and_detects_degradation() {
    let rows = alpha_grid_rows(0.02);
    for m in Metric::ALL {
        let t = pairwise_table(&rows, Axis::Alpha, m).unwrap();
        assert_eq!(t.comparisons.len(), 15);
        assert_eq!(t.comparisons[0].label, "0 vs 5");
        assert_eq!(t.comparisons[14].label, "20 vs 25");
        for c in &t.comparisons {
            assert_eq!(c.n_pairs, 8);
            assert!(c.raw_p < 0.05, "{} {}", c.label, c.raw_p);
            assert!(c.adjusted_p >= c.raw_p);
        }
    }
}

#[test]
fn identical_groups_flagged_degenerate() {
    let rows = alpha_grid_rows(0.0);
    let t = pairwise_table(&rows, Axis::Alpha, Metric::F1Macro).unwrap();
    assert!(t.comparisons.iter().all(|c| c.degenerate && c.raw_p == 1.0));
}

#[test]
fn misaligned_folds_rejected() {
    let mut rows = alpha_grid_rows(0.01);
    rows[3].fold_hash = "ffffffffffffffff".into();
    assert!(matches!(
        pairwise_table(&rows, Axis::Alpha, Metric::RocAuc),
        Err(StatsError::Misaligned(_))
    ));
}

#[test]
fn encoder_axis_pairs_matching_cells() {
    let mk = |e| ExperimentConfig::new(TextConfig::new(e, true, false), 0.0, 1);
    let rows = vec![
        mock_row(mk(Encoder::Static), 50.0, 70.0, 30.0),
        mock_row(mk(Encoder::Contextual), 60.0, 80.0, 40.0),
    ];
    let t = pairwise_table(&rows, Axis::Encoder, Metric::F1Macro).unwrap();
    assert_eq!(t.comparisons.len(), 1);
    assert_eq!(t.comparisons[0].label, "static vs contextual");
    assert_eq!(t.comparisons[0].n_pairs, 5);
    assert!(matches!(
        pairwise_table(&rows, Axis::Alpha, Metric::F1Macro),
        Err(StatsError::TooFewLevels { .. })
    ));
}
