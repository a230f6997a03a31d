//! Configuration-driven experiment runner: shared split, per-fold
//! featurization, cross-validated grid search, refit and test evaluation for
//! every (feature set, outcome, sampling, algorithm) cell, plus the
//! permutation-test, ranking and synthesis commands.

mod commands;
mod config;
mod features;
mod pipeline;

pub use commands::{cmd_rank, cmd_synth, load_layout, run_permtest};
pub use config::{expand_grid, CohortSource, ExperimentConfig, FeatureSet, Grid, GridCell, Sampling};
pub use features::{featurize, Block, FoldFeatures, Prepared};
pub use pipeline::{
    load_inputs, run_experiment, CellResult, CellStatus, ColumnLayout, Manifest, ManifestCell, ResultsTable,
    MANIFEST_VERSION,
};
