use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, classification_report};
use super::split::stratified_kfold;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    #[default]
    F1,
    Auc,
}

/// Validation scores of one grid cell on one fold; `threshold` is the
/// cutoff for F1.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub scores: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub label: String,
    pub fold_metrics: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub metric: SelectionMetric,
    pub best: usize,
    pub cells: Vec<CvCell>,
}

impl GridResult {
    pub fn to_tsv(&self) -> String {
        let k = self.cells.first().map_or(0, |c| c.fold_metrics.len());
        let mut out = String::from("cell\tparams");
        for f in 0..k {
            out.push_str(&format!("\tfold{}", f + 1));
        }
        out.push_str("\tmean\tbest\n");
        for (i, c) in self.cells.iter().enumerate() {
            out.push_str(&format!("{i}\t{}", c.label));
            for m in &c.fold_metrics {
                out.push_str(&format!("\t{m:.6}"));
            }
            out.push_str(&format!("\t{:.6}\t{}\n", c.mean, i == self.best));
        }
        out
    }
}

/// Stratified k-fold grid search. `evaluate(fold, train, val)` fits every
/// grid cell on the training positions (fitting any featurization there)
/// and returns one [`Scored`] per cell for the validation positions. Folds
/// run in parallel; the result does not depend on scheduling. The best cell
/// has the highest mean metric, the earliest cell winning ties.
pub fn kfold_grid_search<F>(
    labels: &[bool],
    cell_labels: &[String],
    k: usize,
    metric: SelectionMetric,
    seed: u64,
    evaluate: F,
) -> Result<GridResult>
where
    F: Fn(usize, &[usize], &[usize]) -> Result<Vec<Scored>> + Sync,
{
    if cell_labels.is_empty() {
        return Err(Error::Config("grid is empty".into()));
    }
    let folds = stratified_kfold(labels, k, seed)?;
    for (f, fold) in folds.iter().enumerate() {
        let pos = fold.iter().filter(|&&i| labels[i]).count();
        if pos == 0 || pos == fold.len() {
            return Err(Error::SingleClass(format!("validation fold {f}")));
        }
    }
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let val = &folds[f];
            let mut train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            train.sort_unstable();
            let scored = evaluate(f, &train, val)?;
            if scored.len() != cell_labels.len() {
                return Err(Error::DimensionMismatch {
                    expected: cell_labels.len(),
                    found: scored.len(),
                });
            }
            let y: Vec<bool> = val.iter().map(|&i| labels[i]).collect();
            scored
                .iter()
                .map(|s| match metric {
                    SelectionMetric::Auc => auc(&s.scores, &y),
                    SelectionMetric::F1 => Ok(classification_report(&s.scores, &y, s.threshold)?.f1),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let cells: Vec<CvCell> = cell_labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let fold_metrics: Vec<f64> = per_fold.iter().map(|f| f[c]).collect();
            CvCell {
                label: label.clone(),
                mean: fold_metrics.iter().sum::<f64>() / k as f64,
                fold_metrics,
            }
        })
        .collect();
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.mean > cells[best].mean {
            best = i;
        }
    }
    Ok(GridResult { metric, best, cells })
}
