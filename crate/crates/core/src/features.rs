//! Node feature matrices: propagation columns, then optional profile and
//! post text segments.
//!
//! Column layout of the propagation block:
//!
//! | col | feature                 |
//! |-----|-------------------------|
//! | 0   | `ln(1 + followers)`     |
//! | 1   | `ln(1 + followees)`     |
//! | 2   | `ln(1 + statuses)`      |
//! | 3   | verified (0/1)          |
//! | 4   | `ln(1 + delay seconds)` |
//! | 5   | depth below the news node |
//! | 6-9 | one-hot kind (news, tweet, retweet, reply) |
//!
//! The profile segment and post segment follow, in that order, when enabled. Only the propagation block is ever z-normalized.

use std::io::Write;
use std::ops::Range;

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data_model::{PropagationGraph, RawNode};
use crate::text_embed::{text_segments, TextConfig, TextError, TextSources};

pub const PROP_DIM: usize = 10;

pub const PROP_FEATURE_NAMES: [&str; PROP_DIM] = [
    "log1p_followers",
    "log1p_followees",
    "log1p_statuses",
    "verified",
    "log1p_delay_seconds",
    "depth",
    "kind_news",
    "kind_tweet",
    "kind_retweet",
    "kind_reply",
];

/// The propagation block of one node.
pub fn propagation_features(node: &RawNode, parent: Option<&RawNode>, depth: usize) -> [f64; PROP_DIM] {
    let delay = match (parent.and_then(|p| p.timestamp), node.timestamp) {
        (Some(pt), Some(t)) => (t - pt).max(0) as f64,
        _ => 0.0,
    };
    let mut x = [0.0; PROP_DIM];
    x[0] = (node.follower_count as f64).ln_1p();
    x[1] = (node.followee_count as f64).ln_1p();
    x[2] = (node.status_count as f64).ln_1p();
    x[3] = if node.verified { 1.0 } else { 0.0 };
    x[4] = delay.ln_1p();
    x[5] = depth as f64;
    x[6 + node.kind.index()] = 1.0;
    x
}

/// Column count for `cfg` at text dimension `d_text`.
pub fn feature_dim_with(cfg: &TextConfig, d_text: usize) -> usize {
    PROP_DIM + d_text * usize::from(cfg.use_profiles) + d_text * usize::from(cfg.use_retweets)
}

/// Column count for `cfg` with the reference encoder dimensions.
pub fn feature_dim(cfg: &TextConfig) -> usize {
    feature_dim_with(cfg, cfg.d_text())
}

/// Where each segment lives inside a feature row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub d_text: usize,
    pub profile: Option<Range<usize>>,
    pub post: Option<Range<usize>>,
}

impl FeatureLayout {
    pub fn new(cfg: &TextConfig, d_text: usize) -> Self {
        let mut next = PROP_DIM;
        let mut take = |on: bool| {
            on.then(|| {
                let r = next..next + d_text;
                next += d_text;
                r
            })
        };
        let profile = take(cfg.use_profiles);
        let post = take(cfg.use_retweets);
        FeatureLayout {
            d_text,
            profile,
            post,
        }
    }

    pub fn width(&self) -> usize {
        PROP_DIM
            + self.profile.as_ref().map_or(0, |r| r.len())
            + self.post.as_ref().map_or(0, |r| r.len())
    }

    pub fn text_segments(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.profile.iter().chain(self.post.iter()).cloned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub graph_id: String,
    pub x: Array2<f64>,
    pub layout: FeatureLayout,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    /// Tab-separated dump with a named header row, for debugging.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header: Vec<String> = PROP_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        if let Some(r) = &self.layout.profile {
            header.extend((0..r.len()).map(|i| format!("profile_{i}")));
        }
        if let Some(r) = &self.layout.post {
            header.extend((0..r.len()).map(|i| format!("post_{i}")));
        }
        writeln!(w, "# graph_id={}", self.graph_id)?;
        writeln!(w, "{}", header.join("\t"))?;
        for row in self.x.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", cells.join("\t"))?;
        }
        Ok(())
    }
}

/// Builds `X` for one graph; rows follow node order.
pub fn assemble_features(
    g: &PropagationGraph,
    cfg: &TextConfig,
    sources: &TextSources<'_>,
) -> Result<FeatureMatrix, TextError> {
    let d_text = if cfg.has_text() {
        sources
            .dimension(cfg.encoder)
            .ok_or(TextError::MissingSource(cfg.encoder))?
    } else {
        0
    };
    let layout = FeatureLayout::new(cfg, d_text);
    let mut x = Array2::zeros((g.nodes.len(), layout.width()));
    let parents = g.parents();
    let depths = g.depths();
    for (i, node) in g.nodes.iter().enumerate() {
        let parent = parents[i].map(|p| &g.nodes[p]);
        let prop = propagation_features(node, parent, depths[i]);
        let mut row = x.row_mut(i);
        row.slice_mut(s![..PROP_DIM])
            .assign(&Array1::from(prop.to_vec()));
        let (x2, x3) = text_segments(cfg, node, sources)?;
        if let (Some(r), Some(v)) = (&layout.profile, x2) {
            row.slice_mut(s![r.clone()]).assign(&Array1::from(v));
        }
        if let (Some(r), Some(v)) = (&layout.post, x3) {
            row.slice_mut(s![r.clone()]).assign(&Array1::from(v));
        }
    }
    Ok(FeatureMatrix {
        graph_id: g.graph_id.clone(),
        x,
        layout,
    })
}

/// Per-column z-scoring of the propagation block, fit on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            mean: vec![0.0; PROP_DIM],
            std: vec![1.0; PROP_DIM],
        }
    }
}

/// Fits population mean/std of the propagation columns over all rows of `train`.
/// Zero-variance columns get std 1.
pub fn fit_normalizer<'a>(train: impl IntoIterator<Item = &'a FeatureMatrix>) -> Normalizer {
    let mut n = 0usize;
    let mut sum = [0.0f64; PROP_DIM];
    let mats: Vec<&FeatureMatrix> = train.into_iter().collect();
    for m in &mats {
        for row in m.x.slice(s![.., ..PROP_DIM]).rows() {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Normalizer::identity();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut ss = [0.0f64; PROP_DIM];
    for m in &mats {
        for row in m.x.slice(s![.., ..PROP_DIM]).rows() {
            for ((acc, v), mu) in ss.iter_mut().zip(row).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
    }
    let std = ss
        .iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Normalizer { mean, std }
}

pub fn apply_normalizer(nrm: &Normalizer, m: &FeatureMatrix) -> FeatureMatrix {
    let mut out = m.clone();
    for mut row in out.x.rows_mut() {
        for (j, v) in row.iter_mut().take(PROP_DIM).enumerate() {
            *v = (*v - nrm.mean[j]) / nrm.std[j];
        }
    }
    out
}

/// Column means of the propagation block, for tests and diagnostics.
pub fn prop_block_means(mats: &[FeatureMatrix]) -> Vec<f64> {
    let stacked: Vec<_> = mats.iter().map(|m| m.x.slice(s![.., ..PROP_DIM])).collect();
    let all = ndarray::concatenate(Axis(0), &stacked).expect("uniform propagation width");
    all.mean_axis(Axis(0)).map(|a| a.to_vec()).unwrap_or_default()
}
