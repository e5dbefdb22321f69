//! Classification metrics with the fake class as positive, and fold
//! aggregation into `mean ± std` percentages.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("metric needs at least one example")]
    Empty,
    #[error("ROC AUC is undefined without both classes ({n_pos} positive, {n_neg} negative)")]
    SingleClass { n_pos: usize, n_neg: usize },
    #[error("average precision is undefined without positives")]
    NoPositives,
    #[error("{labels} labels but {scores} scores")]
    Length { labels: usize, scores: usize },
    #[error("fold aggregation needs at least two folds, got {0}")]
    TooFewFolds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    F1Macro,
    RocAuc,
    AucPr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::F1Macro, Metric::RocAuc, Metric::AucPr];

    pub fn title(self) -> &'static str {
        match self {
            Metric::F1Macro => "F1 Macro",
            Metric::RocAuc => "ROC AUC",
            Metric::AucPr => "AUC PR",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Metric::F1Macro => "f1_macro",
            Metric::RocAuc => "roc_auc",
            Metric::AucPr => "auc_pr",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

fn check(labels: &[u8], scores: &[f64]) -> Result<(), MetricError> {
    if labels.len() != scores.len() {
        return Err(MetricError::Length {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 || tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of the per-class F1 scores; a prediction is positive when
/// `prob >= threshold`.
pub fn f1_macro(labels: &[u8], probs: &[f64], threshold: f64) -> Result<f64, MetricError> {
    check(labels, probs)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&y, &p) in labels.iter().zip(probs) {
        match (y == 1, p >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    // the negative class sees tn as its true positives
    Ok((f1(tp, fp, fn_) + f1(tn, fn_, fp)) / 2.0)
}

/// Ascending midranks (1-based) of `values`.
pub(crate) fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney form of the ROC AUC with midranks for ties.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64, MetricError> {
    check(labels, scores)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass { n_pos, n_neg });
    }
    let ranks = midranks(scores);
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .sum();
    let np = n_pos as f64;
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Average precision: `Σ (R_k − R_{k−1})·P_k` over descending distinct score
/// thresholds, tied scores entering together.
pub fn auc_pr(labels: &[u8], scores: &[f64]) -> Result<f64, MetricError> {
    check(labels, scores)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            tp += usize::from(labels[idx[i]] == 1);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub f1_macro: f64,
    pub roc_auc: f64,
    pub auc_pr: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
}

impl EvalResult {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::F1Macro => self.f1_macro,
            Metric::RocAuc => self.roc_auc,
            Metric::AucPr => self.auc_pr,
        }
    }
}

/// All three metrics at `threshold`.
pub fn evaluate(labels: &[u8], probs: &[f64], threshold: f64) -> Result<EvalResult, MetricError> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    Ok(EvalResult {
        f1_macro: f1_macro(labels, probs, threshold)?,
        roc_auc: roc_auc(labels, probs)?,
        auc_pr: auc_pr(labels, probs)?,
        n_pos,
        n_neg: labels.len() - n_pos,
        threshold,
    })
}

/// Mean and sample standard deviation, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1} ± {:.1}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldAggregate {
    pub f1_macro: MeanStd,
    pub roc_auc: MeanStd,
    pub auc_pr: MeanStd,
}

impl FoldAggregate {
    pub fn get(&self, m: Metric) -> MeanStd {
        match m {
            Metric::F1Macro => self.f1_macro,
            Metric::RocAuc => self.roc_auc,
            Metric::AucPr => self.auc_pr,
        }
    }
}

pub fn aggregate_folds(per_fold: &[EvalResult]) -> Result<FoldAggregate, MetricError> {
    if per_fold.len() < 2 {
        return Err(MetricError::TooFewFolds(per_fold.len()));
    }
    let pct = |m: Metric| -> MeanStd {
        let v: Vec<f64> = per_fold.iter().map(|r| 100.0 * r.get(m)).collect();
        MeanStd::of(&v)
    };
    Ok(FoldAggregate {
        f1_macro: pct(Metric::F1Macro),
        roc_auc: pct(Metric::RocAuc),
        auc_pr: pct(Metric::AucPr),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_macro(&[1, 0, 1], &[0.9, 0.1, 0.6], 0.5).unwrap(), 1.0);
        let mut labels = vec![0u8; 9];
        labels.push(1);
        let probs = vec![0.1; 10];
        // true class: tp 9, fp 1, fn 0 → 18/19; fake class: 0
        let f = f1_macro(&labels, &probs, 0.5).unwrap();
        assert!((f - (18.0 / 19.0) / 2.0).abs() < 1e-12);
        assert!((f - 0.47368).abs() < 1e-5);
        assert_eq!(f1_macro(&[1, 0, 1, 0], &[0.1, 0.9, 0.2, 0.8], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn roc_examples() {
        assert_eq!(roc_auc(&[1, 1, 0, 0], &[0.9, 0.8, 0.3, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[1, 0, 1, 0], &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[1, 0, 1, 0], &[0.9, 0.8, 0.4, 0.2]).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&[1, 1], &[0.1, 0.2]),
            Err(MetricError::SingleClass { .. })
        ));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(auc_pr(&[1, 1, 0], &[0.9, 0.8, 0.1]).unwrap(), 1.0);
        assert!((auc_pr(&[0, 0, 0, 1], &[0.9, 0.8, 0.7, 0.1]).unwrap() - 0.25).abs() < 1e-12);
        let ap = auc_pr(&[1, 0, 1], &[0.9, 0.8, 0.7]).unwrap();
        assert!((ap - (0.5 + (2.0 / 3.0) * 0.5)).abs() < 1e-12);
        assert!((ap - 0.8333).abs() < 1e-4);
        assert_eq!(auc_pr(&[0, 0], &[0.1, 0.2]), Err(MetricError::NoPositives));
    }

    #[test]
    fn tied_scores_form_one_threshold() {
        // both at 0.5: one step to recall 1 at precision 1/2
        assert_eq!(auc_pr(&[1, 0], &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn aggregation() {
        let r = |v: f64| EvalResult {
            f1_macro: v,
            roc_auc: v,
            auc_pr: v,
            n_pos: 1,
            n_neg: 1,
            threshold: 0.5,
        };
        let same = aggregate_folds(&[r(0.7), r(0.7), r(0.7)]).unwrap();
        assert_eq!(same.f1_macro.std, 0.0);
        let a = aggregate_folds(&[r(0.6), r(0.8)]).unwrap();
        assert!((a.f1_macro.mean - 70.0).abs() < 1e-9);
        assert!((a.f1_macro.std - 14.142).abs() < 1e-3);
        assert_eq!(
            MeanStd {
                mean: 68.7,
                std: 1.0
            }
            .to_string(),
            "68.7 ± 1.0"
        );
        assert_eq!(aggregate_folds(&[r(0.5)]), Err(MetricError::TooFewFolds(1)));
    }

    #[test]
    fn midranks_handle_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
