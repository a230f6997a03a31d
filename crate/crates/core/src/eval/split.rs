use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub ratio: f64,
    pub stratified: bool,
    pub seed: u64,
}

fn class_indices(labels: &[bool]) -> [Vec<usize>; 2] {
    let pos = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg = (0..labels.len()).filter(|&i| !labels[i]).collect();
    [pos, neg]
}

fn check_two_classes(labels: &[bool]) -> Result<()> {
    if labels.iter().all(|&y| y) || !labels.iter().any(|&y| y) {
        return Err(Error::SingleClass("split labels".into()));
    }
    Ok(())
}

fn train_size(n: usize, ratio: f64) -> usize {
    (n as f64 * ratio + 1e-9).floor() as usize
}

/// Train/test split with `⌊n·ratio⌋` training rows. Stratified mode
/// allocates per-class floors and hands the remaining rows to the classes
/// with the largest fractional parts.
pub fn stratified_split(labels: &[bool], ratio: f64, stratify: bool, seed: u64) -> Result<SplitSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::invalid("need at least two rows to split"));
    }
    let total = train_size(n, ratio);
    let mut r = rng::stream(seed, 0x31);
    let mut train = Vec::with_capacity(total);
    if stratify {
        check_two_classes(labels)?;
        let mut classes = class_indices(labels);
        let exact: Vec<f64> = classes.iter().map(|c| c.len() as f64 * ratio).collect();
        let mut take: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
        let mut by_frac: Vec<usize> = vec![0, 1];
        by_frac.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        let mut k = 0;
        while take.iter().sum::<usize>() < total {
            let c = by_frac[k % 2];
            if take[c] < classes[c].len() {
                take[c] += 1;
            }
            k += 1;
        }
        for (c, idx) in classes.iter_mut().enumerate() {
            idx.shuffle(&mut r);
            train.extend_from_slice(&idx[..take[c]]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut r);
        train.extend_from_slice(&all[..total]);
    }
    train.sort_unstable();
    let mut in_train = vec![false; n];
    train.iter().for_each(|&i| in_train[i] = true);
    let test = (0..n).filter(|&i| !in_train[i]).collect();
    Ok(SplitSpec {
        train,
        test,
        ratio,
        stratified: stratify,
        seed,
    })
}

/// Keep every minority row and at most `ratio × minority` majority rows,
/// drawn without replacement. Returns sorted positions into `labels`.
pub fn undersample(labels: &[bool], ratio: f64, seed: u64) -> Result<Vec<usize>> {
    check_two_classes(labels)?;
    if !(ratio >= 1.0) {
        return Err(Error::Config(format!("under-sampling ratio must be at least 1, got {ratio}")));
    }
    let [pos, neg] = class_indices(labels);
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let cap = (minority.len() as f64 * ratio + 1e-9).floor() as usize;
    let mut kept = minority;
    if majority.len() <= cap {
        kept.extend(majority);
    } else {
        let mut r = rng::stream(seed, 0x32);
        kept.extend(sample(&mut r, majority.len(), cap).into_iter().map(|i| majority[i]));
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Stratified folds: each class is shuffled, classes are concatenated and
/// rows are dealt round-robin. Returns the validation positions per fold.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config("cross-validation needs k >= 2".into()));
    }
    if labels.len() < k {
        return Err(Error::invalid(format!("{} rows cannot fill {k} folds", labels.len())));
    }
    let mut r = rng::stream(seed, 0x33);
    let mut folds = vec![Vec::new(); k];
    let mut i = 0;
    for mut class in class_indices(labels) {
        class.shuffle(&mut r);
        for row in class {
            folds[i % k].push(row);
            i += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}
