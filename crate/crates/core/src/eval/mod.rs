//! Splits, resampling, cross-validated grid search, metrics and the paired
//! permutation test.

mod cv;
mod metrics;
mod permtest;
mod split;

pub use cv::{kfold_grid_search, CvCell, GridResult, Scored, SelectionMetric};
pub use metrics::{auc, classification_report, f1_score, EvalReport};
pub use permtest::{perm_test_auc, PermTestResult, DEFAULT_PERMUTATIONS};
pub use split::{stratified_kfold, stratified_split, undersample, SplitSpec};
