use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_model::Label;
use crate::rng::{stream, Purpose};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("class {label} has {count} graphs, need at least {needed} to stratify")]
    ClassTooSmall {
        label: Label,
        count: usize,
        needed: usize,
    },
    #[error("fraction {0} outside (0, 1)")]
    Fraction(String),
    #[error("k must be at least 2, got {0}")]
    TooFewFolds(usize),
}

/// Held-out test indices and the development indices left for cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

fn by_class(indices: impl Iterator<Item = usize>, labels: &[Label]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for i in indices {
        let c = usize::from(labels[i] == Label::True);
        out[c].push(i);
    }
    out
}

const CLASSES: [Label; 2] = [Label::Fake, Label::True];

/// Stratified hold-out: `floor(N * fraction)` test graphs, allocated per class
/// by floor of the proportional share, remainders going to the class with the
/// larger fractional part (fake first on ties).
pub fn stratified_split(labels: &[Label], fraction: f64, seed: u64) -> Result<Split, SplitError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SplitError::Fraction(fraction.to_string()));
    }
    let mut classes = by_class(0..labels.len(), labels);
    for (c, members) in classes.iter().enumerate() {
        if members.len() < 2 {
            return Err(SplitError::ClassTooSmall {
                label: CLASSES[c],
                count: members.len(),
                needed: 2,
            });
        }
    }
    let total = (labels.len() as f64 * fraction).floor() as usize;
    let shares: Vec<f64> = classes.iter().map(|m| m.len() as f64 * fraction).collect();
    let mut take: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut missing = total.saturating_sub(take.iter().sum());
    for &c in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if take[c] < classes[c].len() - 1 {
            take[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = stream(seed, Purpose::Split, &[]);
    let mut split = Split {
        dev: Vec::new(),
        test: Vec::new(),
    };
    for (c, members) in classes.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        split.test.extend_from_slice(&members[..take[c]]);
        split.dev.extend_from_slice(&members[take[c]..]);
    }
    split.dev.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Stratified k-fold over `indices`: each class is shuffled, the classes are
/// concatenated (fake first) and position `p` goes to fold `p mod k`.
pub fn stratified_kfold(
    indices: &[usize],
    labels: &[Label],
    k: usize,
    seed: u64,
) -> Result<Vec<Fold>, SplitError> {
    if k < 2 {
        return Err(SplitError::TooFewFolds(k));
    }
    let mut classes = by_class(indices.iter().copied(), labels);
    for (c, members) in classes.iter().enumerate() {
        if members.len() < k {
            return Err(SplitError::ClassTooSmall {
                label: CLASSES[c],
                count: members.len(),
                needed: k,
            });
        }
    }
    let mut rng = stream(seed, Purpose::Folds, &[]);
    let mut assignment = vec![Vec::new(); k];
    let mut pos = 0usize;
    for members in classes.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[pos % k].push(i);
            pos += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let mut val = assignment[f].clone();
            val.sort_unstable();
            let mut train: Vec<usize> = (0..k)
                .filter(|&g| g != f)
                .flat_map(|g| assignment[g].iter().copied())
                .collect();
            train.sort_unstable();
            Fold { train, val }
        })
        .collect())
}

/// Short digest of a fold partition in terms of graph ids.
pub fn fold_hash(folds: &[Fold], ids: &[&str]) -> String {
    let mut h = Sha256::new();
    for (f, fold) in folds.iter().enumerate() {
        h.update(format!("fold {f}:"));
        for &i in &fold.val {
            h.update(ids[i].as_bytes());
            h.update(b",");
        }
        h.update(b"\n");
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}
