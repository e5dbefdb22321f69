use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::ALPHAS;
use crate::eval_metrics::{EvalResult, FoldAggregate};
use crate::gnn::TrainConfig;
use crate::text_embed::{Encoder, TextConfig};

/// A configuration axis of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Encoder,
    Profiles,
    Retweets,
    Alpha,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Encoder, Axis::Profiles, Axis::Retweets, Axis::Alpha];

    /// Orders level strings produced by [`ExperimentConfig::level`].
    pub fn compare_levels(self, a: &str, b: &str) -> Ordering {
        match self {
            Axis::Alpha => {
                let pa: f64 = a.parse().unwrap_or(f64::NAN);
                let pb: f64 = b.parse().unwrap_or(f64::NAN);
                pa.partial_cmp(&pb).unwrap_or(Ordering::Equal)
            }
            Axis::Encoder => encoder_rank(a).cmp(&encoder_rank(b)),
            Axis::Profiles | Axis::Retweets => presence_rank(a).cmp(&presence_rank(b)),
        }
    }
}

fn encoder_rank(s: &str) -> u8 {
    if s == "static" {
        0
    } else {
        1
    }
}

fn presence_rank(s: &str) -> u8 {
    if s == "Absent" {
        0
    } else {
        1
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Encoder => "encoder",
            Axis::Profiles => "profiles",
            Axis::Retweets => "retweets",
            Axis::Alpha => "alpha",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "encoder" => Ok(Axis::Encoder),
            "profiles" => Ok(Axis::Profiles),
            "retweets" => Ok(Axis::Retweets),
            "alpha" => Ok(Axis::Alpha),
            other => Err(format!("unknown axis `{other}` (encoder|profiles|retweets|alpha)")),
        }
    }
}

pub fn presence(b: bool) -> &'static str {
    if b {
        "Present"
    } else {
        "Absent"
    }
}

fn default_k_folds() -> usize {
    10
}

fn default_test_fraction() -> f64 {
    0.10
}

/// One cell of the experiment grid plus the shared protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub encoder: Encoder,
    pub use_profiles: bool,
    pub use_retweets: bool,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(text: TextConfig, alpha: f64, seed: u64) -> Self {
        ExperimentConfig {
            encoder: text.encoder,
            use_profiles: text.use_profiles,
            use_retweets: text.use_retweets,
            alpha,
            seed,
            k_folds: default_k_folds(),
            test_fraction: default_test_fraction(),
            train: TrainConfig::default(),
        }
    }

    pub fn text(&self) -> TextConfig {
        TextConfig::new(self.encoder, self.use_profiles, self.use_retweets)
    }

    pub fn level(&self, axis: Axis) -> String {
        match axis {
            Axis::Encoder => self.encoder.to_string(),
            Axis::Profiles => presence(self.use_profiles).to_string(),
            Axis::Retweets => presence(self.use_retweets).to_string(),
            Axis::Alpha => format!("{}", self.alpha),
        }
    }

    /// True when both configs agree on every axis except `axis`.
    pub fn same_except(&self, other: &ExperimentConfig, axis: Axis) -> bool {
        Axis::ALL
            .iter()
            .filter(|&&a| a != axis)
            .all(|&a| self.level(a) == other.level(a))
    }

    /// Row order of the results table: encoder, profiles, retweets, alpha.
    pub fn sort_key(&self) -> (Encoder, bool, bool, i64) {
        (
            self.encoder,
            self.use_profiles,
            self.use_retweets,
            (self.alpha * 1_000_000.0).round() as i64,
        )
    }

    /// The config whose computation this one shares: text-free configs do not
    /// depend on the encoder or the noise amplitude.
    pub fn effective(&self) -> ExperimentConfig {
        let mut c = self.clone();
        if !self.text().has_text() {
            c.encoder = Encoder::Static;
            c.alpha = 0.0;
        }
        c
    }

    pub fn label(&self) -> String {
        format!(
            "{}/profiles={}/retweets={}/alpha={}",
            self.encoder,
            presence(self.use_profiles),
            presence(self.use_retweets),
            self.alpha
        )
    }
}

/// Which cells of the grid to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub encoders: Vec<Encoder>,
    pub profiles: Vec<bool>,
    pub retweets: Vec<bool>,
    pub alphas: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub train: TrainConfig,
}

impl GridSpec {
    /// 2 encoders × 2 × 2 × 6 alphas = 48 cells.
    pub fn full(seed: u64) -> Self {
        GridSpec {
            encoders: Encoder::ALL.to_vec(),
            profiles: vec![false, true],
            retweets: vec![false, true],
            alphas: ALPHAS.to_vec(),
            seed,
            k_folds: default_k_folds(),
            test_fraction: default_test_fraction(),
            train: TrainConfig::default(),
        }
    }

    /// Every cell, sorted by (encoder, profiles, retweets, alpha).
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &encoder in &self.encoders {
            for &p in &self.profiles {
                for &r in &self.retweets {
                    for &alpha in &self.alphas {
                        let mut c = ExperimentConfig::new(TextConfig::new(encoder, p, r), alpha, self.seed);
                        c.k_folds = self.k_folds;
                        c.test_fraction = self.test_fraction;
                        c.train = self.train;
                        out.push(c);
                    }
                }
            }
        }
        out.sort_by_key(|c| c.sort_key());
        out
    }
}

/// Per-fold outcome beyond the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Std of the selected snapshot's validation probabilities.
    pub prob_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config: ExperimentConfig,
    pub folds: Vec<EvalResult>,
    pub fold_records: Vec<FoldRecord>,
    pub aggregate: FoldAggregate,
    /// Digest of the fold partition; rows are pairable only when it matches.
    pub fold_hash: String,
    pub seed: u64,
    pub wall_clock_secs: f64,
}
