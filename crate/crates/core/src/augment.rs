//! Minority-class oversampling and noisy-embedding augmentation of the text
//! segments.

use ndarray::{s, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::Label;
use crate::features::{FeatureLayout, FeatureMatrix};

/// Noise amplitudes evaluated by the experiment grid.
pub const ALPHAS: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AugmentError {
    #[error("cannot oversample a fold containing only {0} graphs")]
    SingleClass(Label),
    #[error("cannot oversample an empty fold")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub alpha: f64,
}

impl NoiseConfig {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha >= 0.0 && alpha.is_finite(), "alpha must be finite and >= 0");
        NoiseConfig { alpha }
    }
}

/// Every input item once, followed by minority items drawn uniformly with
/// replacement until both classes have the majority count.
pub fn oversample<T: Clone, R: Rng + ?Sized>(
    items: &[(T, Label)],
    rng: &mut R,
) -> Result<Vec<(T, Label)>, AugmentError> {
    let n_fake = items.iter().filter(|(_, l)| *l == Label::Fake).count();
    let n_true = items.len() - n_fake;
    match (n_fake, n_true) {
        (0, 0) => return Err(AugmentError::Empty),
        (0, _) => return Err(AugmentError::SingleClass(Label::True)),
        (_, 0) => return Err(AugmentError::SingleClass(Label::Fake)),
        _ => {}
    }
    let (minority, deficit) = if n_fake < n_true {
        (Label::Fake, n_true - n_fake)
    } else {
        (Label::True, n_fake - n_true)
    };
    let pool: Vec<&(T, Label)> = items.iter().filter(|(_, l)| *l == minority).collect();
    let mut out = items.to_vec();
    out.reserve(deficit);
    for _ in 0..deficit {
        out.push(pool[rng.random_range(0..pool.len())].clone());
    }
    Ok(out)
}

/// Per-component scale `alpha / sqrt(‖x‖₂)`; zero when either factor is zero.
pub fn noise_scale(x: &[f64], alpha: f64) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if alpha == 0.0 || norm == 0.0 {
        0.0
    } else {
        alpha / norm.sqrt()
    }
}

/// `x + scale·eps` with caller-supplied `eps`.
pub fn neftune_with_eps(x: &[f64], alpha: f64, eps: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), eps.len());
    let s = noise_scale(x, alpha);
    if s == 0.0 {
        return x.to_vec();
    }
    x.iter().zip(eps).map(|(v, e)| v + s * e).collect()
}

/// `x' = x + (alpha / sqrt(‖x‖₂))·eps`, `eps ~ U(-1, 1)` i.i.d.
pub fn neftune_noise<R: Rng + ?Sized>(x: &[f64], alpha: f64, rng: &mut R) -> Vec<f64> {
    let mut out = x.to_vec();
    perturb_in_place(ndarray::ArrayViewMut1::from(&mut out[..]), alpha, rng);
    out
}

fn perturb_in_place<R: Rng + ?Sized>(mut seg: ArrayViewMut1<'_, f64>, alpha: f64, rng: &mut R) {
    let norm = seg.iter().map(|v| v * v).sum::<f64>().sqrt();
    if alpha == 0.0 || norm == 0.0 {
        return;
    }
    let s = alpha / norm.sqrt();
    for v in seg.iter_mut() {
        *v += s * rng.random_range(-1.0..1.0);
    }
}

/// Perturbs every node's profile and post segments independently. The
/// propagation block is never touched.
pub fn apply_noise_to_matrix<R: Rng + ?Sized>(
    m: &FeatureMatrix,
    noise: &NoiseConfig,
    rng: &mut R,
) -> FeatureMatrix {
    let mut out = m.clone();
    add_noise_in_place(&mut out, noise, rng);
    out
}

pub fn add_noise_in_place<R: Rng + ?Sized>(m: &mut FeatureMatrix, noise: &NoiseConfig, rng: &mut R) {
    add_noise_to_rows(m.x.view_mut(), &m.layout, noise, rng);
}

/// Row-wise segment noise on any matrix laid out per `layout` (e.g. a stacked
/// batch of graphs).
pub fn add_noise_to_rows<R: Rng + ?Sized>(
    mut x: ArrayViewMut2<'_, f64>,
    layout: &FeatureLayout,
    noise: &NoiseConfig,
    rng: &mut R,
) {
    if noise.alpha == 0.0 {
        return;
    }
    let segments: Vec<_> = layout.text_segments().collect();
    if segments.is_empty() {
        return;
    }
    for mut row in x.rows_mut() {
        for r in &segments {
            perturb_in_place(row.slice_mut(s![r.clone()]), noise.alpha, rng);
        }
    }
}
