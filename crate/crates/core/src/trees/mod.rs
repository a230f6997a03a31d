//! Random forests and second-order gradient-boosted trees over sparse rows.

mod boost;
mod forest;
mod tree;

pub use boost::{train_gbt, BoostParams, BoostedTree, GradientBoostedTrees};
pub use forest::{train_random_forest, ForestParams, RandomForest};
pub use tree::{leaf_weight, split_gain, Node};

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;

fn check_dim(expected: usize, x: &CsrMatrix) -> Result<()> {
    if x.n_cols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.n_cols(),
        });
    }
    Ok(())
}

fn check_training(x: &CsrMatrix, y: &[bool], instance_weights: Option<&[f64]>, both_classes: bool) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    x.check_finite()?;
    if both_classes && (y.iter().all(|&v| v) || !y.iter().any(|&v| v)) {
        return Err(Error::SingleClass("tree training labels".into()));
    }
    if let Some(w) = instance_weights {
        if w.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                found: w.len(),
            });
        }
        if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("instance weights must be positive and finite"));
        }
    }
    Ok(())
}
