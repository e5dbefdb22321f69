use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::config::{presence, Axis, ResultRow};
use super::io::io_err;
use super::HarnessError;
use crate::eval_metrics::{MeanStd, Metric};
use crate::stats::{pairwise_table, PValueTable, StatsError};
use crate::text_embed::Encoder;

pub const RESULTS_CSV: &str = "results.csv";
pub const DETAIL_CSV: &str = "results_detail.csv";
pub const FOLDS_CSV: &str = "folds.csv";
pub const PVALUES_CSV: &str = "pvalues.csv";
pub const FIGURE_CSV: &str = "figure_data.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

fn sorted(rows: &[ResultRow]) -> Vec<&ResultRow> {
    let mut v: Vec<&ResultRow> = rows.iter().collect();
    v.sort_by_key(|r| r.config.sort_key());
    v
}

/// Relative improvement of `value` over `base`, in percent.
pub fn relative_gain(value: f64, base: f64) -> f64 {
    (value / base - 1.0) * 100.0
}

/// Mean ± std per metric, one row per config.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("Encoder,Profiles,Retweets,NEFTune Alpha,F1 Macro,ROC AUC,AUC PR\n");
    for r in sorted(rows) {
        let c = &r.config;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.encoder,
            presence(c.use_profiles),
            presence(c.use_retweets),
            c.alpha,
            r.aggregate.f1_macro,
            r.aggregate.roc_auc,
            r.aggregate.auc_pr
        );
    }
    s
}

/// Unrounded aggregates plus seed and fold digest.
pub fn detail_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("encoder,profiles,retweets,alpha,seed,k_folds,epochs,fold_hash");
    for m in Metric::ALL {
        let _ = write!(s, ",{0}_mean,{0}_std", m.key());
    }
    s.push('\n');
    for r in sorted(rows) {
        let c = &r.config;
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            c.encoder,
            c.use_profiles,
            c.use_retweets,
            c.alpha,
            r.seed,
            r.folds.len(),
            c.train.epochs,
            r.fold_hash
        );
        for m in Metric::ALL {
            let ms = r.aggregate.get(m);
            let _ = write!(s, ",{:.6},{:.6}", ms.mean, ms.std);
        }
        s.push('\n');
    }
    s
}

/// One line per (config, fold).
pub fn folds_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(
        "encoder,profiles,retweets,alpha,fold,f1_macro,roc_auc,auc_pr,n_pos,n_neg,best_epoch,best_val_loss,prob_std\n",
    );
    for r in sorted(rows) {
        let c = &r.config;
        for (i, f) in r.folds.iter().enumerate() {
            let rec = r.fold_records.get(i);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6}",
                c.encoder,
                c.use_profiles,
                c.use_retweets,
                c.alpha,
                i,
                f.f1_macro,
                f.roc_auc,
                f.auc_pr,
                f.n_pos,
                f.n_neg,
                rec.map_or(0, |r| r.best_epoch),
                rec.map_or(f64::NAN, |r| r.best_val_loss),
                rec.map_or(f64::NAN, |r| r.prob_std),
            );
        }
    }
    s
}

/// Comparison rows with raw and adjusted p per metric. Tables must share
/// their comparison lists per axis, which `stats_tables` guarantees.
pub fn pvalues_csv(tables: &[PValueTable]) -> String {
    let mut s = String::from("axis,comparison");
    for m in Metric::ALL {
        let _ = write!(s, ",{}", m.title());
    }
    for m in Metric::ALL {
        let _ = write!(s, ",{} (Holm)", m.title());
    }
    s.push('\n');
    let mut axes: Vec<Axis> = tables.iter().map(|t| t.axis).collect();
    axes.dedup();
    for axis in axes {
        let per_metric: Vec<Option<&PValueTable>> = Metric::ALL
            .iter()
            .map(|&m| tables.iter().find(|t| t.axis == axis && t.metric == m))
            .collect();
        let Some(base) = per_metric.iter().flatten().next() else {
            continue;
        };
        for (k, cmp) in base.comparisons.iter().enumerate() {
            let _ = write!(s, "{axis},{}", cmp.label);
            for adjusted in [false, true] {
                for t in &per_metric {
                    match t.and_then(|t| t.comparisons.get(k)) {
                        Some(c) if adjusted => {
                            let _ = write!(s, ",{:.6}", c.adjusted_p);
                        }
                        Some(c) => {
                            let _ = write!(s, ",{:.6}", c.raw_p);
                        }
                        None => s.push(','),
                    }
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Per-axis level means for plotting: metric, axis, level, mean, std.
pub fn figure_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("metric,axis,level,mean,std\n");
    for m in Metric::ALL {
        for axis in Axis::ALL {
            let mut levels: Vec<String> = rows.iter().map(|r| r.config.level(axis)).collect();
            levels.sort_by(|a, b| axis.compare_levels(a, b));
            levels.dedup();
            for level in levels {
                let at: Vec<MeanStd> = rows
                    .iter()
                    .filter(|r| r.config.level(axis) == level)
                    .map(|r| r.aggregate.get(m))
                    .collect();
                let n = at.len() as f64;
                let mean = at.iter().map(|x| x.mean).sum::<f64>() / n;
                let std = at.iter().map(|x| x.std).sum::<f64>() / n;
                let _ = writeln!(s, "{},{axis},{level},{mean:.6},{std:.6}", m.key());
            }
        }
    }
    s
}

fn f1(r: &ResultRow) -> f64 {
    r.aggregate.f1_macro.mean
}

/// Headline figures: best config, its gains over the text-free model and
/// over the static encoder with the same sources and alpha.
pub fn summary_text(rows: &[ResultRow]) -> String {
    let mut s = String::new();
    let Some(best) = sorted(rows)
        .into_iter()
        .reduce(|a, b| if f1(b) > f1(a) { b } else { a })
    else {
        return "no results\n".into();
    };
    let _ = writeln!(s, "rows: {}", rows.len());
    let _ = writeln!(s, "seed: {}", best.seed);
    let _ = writeln!(s, "folds: {} (partition {})", best.folds.len(), best.fold_hash);
    let _ = writeln!(s, "best configuration: {}", best.config.label());
    for m in Metric::ALL {
        let _ = writeln!(s, "  {}: {}", m.title(), best.aggregate.get(m));
    }
    let no_text = sorted(rows)
        .into_iter()
        .find(|r| !r.config.text().has_text());
    match no_text {
        Some(base) => {
            let _ = writeln!(s, "no-text F1 Macro: {}", base.aggregate.f1_macro);
            let _ = writeln!(
                s,
                "relative F1 Macro gain over no text: {:.1}%",
                relative_gain(f1(best), f1(base))
            );
        }
        None => s.push_str("relative F1 Macro gain over no text: n/a (no text-free row)\n"),
    }
    let static_twin = rows.iter().find(|r| {
        best.config.encoder == Encoder::Contextual
            && r.config.encoder == Encoder::Static
            && r.config.same_except(&best.config, Axis::Encoder)
    });
    match static_twin {
        Some(twin) => {
            let _ = writeln!(
                s,
                "relative F1 Macro gain over static encoder: {:.1}%",
                relative_gain(f1(best), f1(twin))
            );
        }
        None => s.push_str("relative F1 Macro gain over static encoder: n/a\n"),
    }
    s
}

/// Pairwise tables for every axis with at least two levels, all metrics.
pub fn stats_tables(rows: &[ResultRow], axes: &[Axis]) -> Result<Vec<PValueTable>, StatsError> {
    let mut out = Vec::new();
    for &axis in axes {
        for m in Metric::ALL {
            match pairwise_table(rows, axis, m) {
                Ok(t) => out.push(t),
                Err(StatsError::TooFewLevels { .. }) => break,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

fn write_file(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let p = dir.join(name);
    fs::write(&p, body).map_err(io_err(&p))?;
    written.push(p);
    Ok(())
}

/// Writes every report file into `out_dir` and returns their paths. The
/// p-value file is skipped, with a warning, when `tables` is empty.
pub fn report(rows: &[ResultRow], tables: &[PValueTable], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Mismatch("nothing to report: no result rows".into()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    write_file(out_dir, RESULTS_CSV, &results_csv(rows), &mut written)?;
    write_file(out_dir, DETAIL_CSV, &detail_csv(rows), &mut written)?;
    write_file(out_dir, FOLDS_CSV, &folds_csv(rows), &mut written)?;
    if tables.is_empty() {
        warn!("no p-value tables; {PVALUES_CSV} not written");
    } else {
        write_file(out_dir, PVALUES_CSV, &pvalues_csv(tables), &mut written)?;
    }
    write_file(out_dir, FIGURE_CSV, &figure_csv(rows), &mut written)?;
    write_file(out_dir, SUMMARY_TXT, &summary_text(rows), &mut written)?;
    Ok(written)
}
