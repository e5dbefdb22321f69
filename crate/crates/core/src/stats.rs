//! Paired Wilcoxon signed-rank tests over cross-validation folds, with Holm
//! step-down correction.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::eval_metrics::{midranks, Metric};
use crate::harness::{Axis, ResultRow};

/// Largest number of nonzero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 20;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({a} vs {b})")]
    Length { a: usize, b: usize },
    #[error("p-value {0} outside [0, 1]")]
    PValueRange(f64),
    #[error("results are not aligned on identical folds: {0}")]
    Misaligned(String),
    #[error("axis {axis} has fewer than two levels in the results")]
    TooFewLevels { axis: Axis },
}

/// Per-fold metric values of two models trained on the same folds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PairedSample {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self, StatsError> {
        if a.len() != b.len() {
            return Err(StatsError::Length {
                a: a.len(),
                b: b.len(),
            });
        }
        Ok(PairedSample { a, b })
    }

    pub fn swapped(&self) -> Self {
        PairedSample {
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero; p is reported as 1.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Two-sided Wilcoxon signed-rank test on `a - b`.
///
/// Zero differences are dropped and tied magnitudes get midranks. Up to
/// [`EXACT_MAX_N`] differences the null distribution over all `2^n` sign
/// assignments is counted exactly; above that the tie-corrected normal
/// approximation with continuity correction is used.
pub fn wilcoxon_signed_rank(sample: &PairedSample) -> WilcoxonResult {
    let diffs: Vec<f64> = sample
        .a
        .iter()
        .zip(&sample.b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return WilcoxonResult {
            n: 0,
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            method: WilcoxonMethod::Degenerate,
        };
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, w_plus), WilcoxonMethod::Exact)
    } else {
        (normal_p(&abs, n, statistic), WilcoxonMethod::Normal)
    };
    WilcoxonResult {
        n,
        w_plus,
        w_minus,
        statistic,
        p_value,
        method,
    }
}

/// Counts sign assignments whose `min(W+, W-)` is at most the observed one.
/// Midranks are multiples of ½, so rank sums are tracked doubled as integers.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // counts[v] = number of sign assignments with doubled W+ = v
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for v in (0..=reach).rev() {
            if counts[v] > 0 {
                counts[v + r] += counts[v];
            }
        }
        reach += r;
    }
    let observed = (2.0 * w_plus).round() as usize;
    let observed = observed.min(total - observed);
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|(v, _)| (*v).min(total - *v) <= observed)
        .map(|(_, c)| c)
        .sum();
    let all = 1u64 << ranks.len();
    (hits as f64 / all as f64).min(1.0)
}

fn normal_p(abs: &[f64], n: usize, statistic: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = -((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std_normal = Normal::standard();
    (2.0 * std_normal.cdf(z)).min(1.0)
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StatsError::PValueRange(bad));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        let v = ((m - k) as f64 * p[i]).min(1.0);
        running = running.max(v);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub level_a: String,
    pub level_b: String,
    pub n_pairs: usize,
    pub test: WilcoxonResult,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub significant: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueTable {
    pub axis: Axis,
    pub metric: Metric,
    pub comparisons: Vec<Comparison>,
}

impl fmt::Display for PValueTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} by {}", self.metric, self.axis)?;
        for c in &self.comparisons {
            writeln!(
                f,
                "  {:<24} n={:<4} p={:<8} holm={:<8}{}{}",
                c.label,
                c.n_pairs,
                format_p(c.raw_p),
                format_p(c.adjusted_p),
                if c.significant { " *" } else { "" },
                if c.degenerate { " (all differences zero)" } else { "" },
            )?;
        }
        Ok(())
    }
}

/// Three decimals, with `<0.001` below the print floor.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

/// Pairwise comparisons of every level pair of `axis` on `metric`.
///
/// For a pair of levels, every result row at the first level is matched with
/// the row at the second level that agrees on all other axes; their per-fold
/// values are concatenated across matches (in row order) into one paired
/// sample. Holm correction runs across the comparisons of this table.
pub fn pairwise_table(rows: &[ResultRow], axis: Axis, metric: Metric) -> Result<PValueTable, StatsError> {
    if let Some(first) = rows.first() {
        for r in rows {
            if r.fold_hash != first.fold_hash || r.folds.len() != first.folds.len() {
                return Err(StatsError::Misaligned(format!(
                    "{} uses fold partition {} ({} folds), expected {} ({} folds)",
                    r.config.label(),
                    r.fold_hash,
                    r.folds.len(),
                    first.fold_hash,
                    first.folds.len()
                )));
            }
        }
    }
    let mut levels: Vec<String> = Vec::new();
    let mut sorted_rows: Vec<&ResultRow> = rows.iter().collect();
    sorted_rows.sort_by_key(|r| r.config.sort_key());
    for r in &sorted_rows {
        let l = r.config.level(axis);
        if !levels.contains(&l) {
            levels.push(l);
        }
    }
    levels.sort_by(|a, b| axis.compare_levels(a, b));
    if levels.len() < 2 {
        return Err(StatsError::TooFewLevels { axis });
    }

    let mut comparisons = Vec::new();
    for i in 0..levels.len() {
        for j in i + 1..levels.len() {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for ra in sorted_rows.iter().filter(|r| r.config.level(axis) == levels[i]) {
                let partner = sorted_rows.iter().find(|rb| {
                    rb.config.level(axis) == levels[j] && rb.config.same_except(&ra.config, axis)
                });
                if let Some(rb) = partner {
                    a.extend(ra.folds.iter().map(|f| f.get(metric)));
                    b.extend(rb.folds.iter().map(|f| f.get(metric)));
                }
            }
            let n_pairs = a.len();
            let test = wilcoxon_signed_rank(&PairedSample::new(a, b)?);
            comparisons.push(Comparison {
                label: format!("{} vs {}", levels[i], levels[j]),
                level_a: levels[i].clone(),
                level_b: levels[j].clone(),
                n_pairs,
                raw_p: test.p_value,
                adjusted_p: test.p_value,
                significant: false,
                degenerate: test.method == WilcoxonMethod::Degenerate,
                test,
            });
        }
    }
    let raw: Vec<f64> = comparisons.iter().map(|c| c.raw_p).collect();
    let adjusted = holm_adjust(&raw)?;
    for (c, adj) in comparisons.iter_mut().zip(adjusted) {
        c.adjusted_p = adj;
        c.significant = adj < SIGNIFICANCE;
    }
    Ok(PValueTable {
        axis,
        metric,
        comparisons,
    })
}
