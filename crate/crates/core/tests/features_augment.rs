mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use textgnn_core::augment::{neftune_noise, noise_scale, oversample, add_noise_in_place, NoiseConfig};
use textgnn_core::data_model::Label;
use textgnn_core::features::{
    apply_normalizer, assemble_features, feature_dim, fit_normalizer, prop_block_means, PROP_DIM,
};
use textgnn_core::text_embed::{Encoder, TextConfig, TextSources};

#[test]
fn widths_for_all_configs() {
    let mut r = rng(8);
    let graphs: Vec<_> = (0..5).map(|i| random_graph(&mut r, &format!("w{i}"), 1 + i)).collect();
    let (table, store) = random_sources(&mut r, &graphs, 7);
    let sources = TextSources {
        table: Some(&table),
        store: Some(&store),
    };
    for cfg in TextConfig::all() {
        let segs = usize::from(cfg.use_profiles) + usize::from(cfg.use_retweets);
        let nominal = PROP_DIM + segs * cfg.encoder.nominal_dim();
        assert_eq!(feature_dim(&cfg), nominal);
        for g in &graphs {
            let m = assemble_features(g, &cfg, &sources).unwrap();
            assert_eq!(m.rows(), g.nodes.len());
            assert_eq!(m.cols(), PROP_DIM + 7 * segs);
            // news node: zero text
            assert!(m.x.row(0).iter().skip(PROP_DIM).all(|v| *v == 0.0));
        }
    }
    assert_eq!(feature_dim(&TextConfig::new(Encoder::Contextual, true, true)), 1546);
    assert_eq!(feature_dim(&TextConfig::new(Encoder::Static, false, true)), 110);
}

#[test]
fn text_free_features_ignore_encoder_and_sources() {
    let mut r = rng(9);
    let g = random_graph(&mut r, "nt", 6);
    let (table, store) = random_sources(&mut r, std::slice::from_ref(&g), 4);
    let full = TextSources {
        table: Some(&table),
        store: Some(&store),
    };
    let a = assemble_features(&g, &TextConfig::new(Encoder::Static, false, false), &full).unwrap();
    let b = assemble_features(&g, &TextConfig::new(Encoder::Contextual, false, false), &TextSources::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_source_is_an_error() {
    let mut r = rng(10);
    let g = random_graph(&mut r, "ms", 3);
    assert!(assemble_features(&g, &TextConfig::new(Encoder::Contextual, false, true), &TextSources::default()).is_err());
}

#[test]
fn normalizer_centres_training_rows_and_leaves_text_alone() {
    let mut r = rng(11);
    let graphs: Vec<_> = (0..8).map(|i| random_graph(&mut r, &format!("n{i}"), 2 + i % 4)).collect();
    let (table, store) = random_sources(&mut r, &graphs, 3);
    let sources = TextSources {
        table: Some(&table),
        store: Some(&store),
    };
    let cfg = TextConfig::new(Encoder::Contextual, true, true);
    let mats: Vec<_> = graphs.iter().map(|g| assemble_features(g, &cfg, &sources).unwrap()).collect();
    let nrm = fit_normalizer(&mats);
    let normed: Vec<_> = mats.iter().map(|m| apply_normalizer(&nrm, m)).collect();
    for m in prop_block_means(&normed) {
        assert!(m.abs() <= 1e-9);
    }
    for (a, b) in mats.iter().zip(&normed) {
        assert_eq!(
            a.x.slice(ndarray::s![.., PROP_DIM..]),
            b.x.slice(ndarray::s![.., PROP_DIM..])
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn noise_respects_componentwise_bound(seed in any::<u64>(), alpha in 0.0f64..30.0, d in 1usize..40) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let y = neftune_noise(&x, alpha, &mut r);
        let s = noise_scale(&x, alpha);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() <= s * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_alpha_is_bit_identity(seed in any::<u64>(), d in 1usize..40) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let y = neftune_noise(&x, 0.0, &mut r);
        prop_assert!(x.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn oversampled_folds_balance(seed in any::<u64>(), n_fake in 1usize..40, n_true in 1usize..40) {
        let items: Vec<(usize, Label)> = (0..n_fake)
            .map(|i| (i, Label::Fake))
            .chain((0..n_true).map(|i| (1000 + i, Label::True)))
            .collect();
        let out = oversample(&items, &mut rng(seed)).unwrap();
        let f = out.iter().filter(|(_, l)| *l == Label::Fake).count();
        prop_assert_eq!(f, out.len() - f);
        prop_assert_eq!(out.len(), 2 * n_fake.max(n_true));
        prop_assert_eq!(&out[..items.len()], &items[..]);
        // duplicates only ever come from the minority class
        let minority = if n_fake < n_true { Label::Fake } else { Label::True };
        prop_assert!(out[items.len()..].iter().all(|(_, l)| *l == minority));
    }
}

#[test]
fn matrix_noise_only_touches_text_columns() {
    let mut r = rng(12);
    let g = random_graph(&mut r, "mn", 5);
    let (table, store) = random_sources(&mut r, std::slice::from_ref(&g), 6);
    let sources = TextSources {
        table: Some(&table),
        store: Some(&store),
    };
    let m = assemble_features(&g, &TextConfig::new(Encoder::Static, true, true), &sources).unwrap();
    let mut noisy = m.clone();
    add_noise_in_place(&mut noisy, &NoiseConfig::new(15.0), &mut r);
    assert_eq!(
        m.x.slice(ndarray::s![.., ..PROP_DIM]),
        noisy.x.slice(ndarray::s![.., ..PROP_DIM])
    );
    for (row_a, row_b) in m.x.rows().into_iter().zip(noisy.x.rows()) {
        for seg in m.layout.text_segments() {
            let xa: Vec<f64> = row_a.slice(ndarray::s![seg.clone()]).to_vec();
            let xb: Vec<f64> = row_b.slice(ndarray::s![seg.clone()]).to_vec();
            let s = noise_scale(&xa, 15.0);
            if s == 0.0 {
                assert_eq!(xa, xb);
            }
            for (a, b) in xa.iter().zip(&xb) {
                assert!((a - b).abs() <= s * (1.0 + 1e-12));
            }
        }
    }
}
