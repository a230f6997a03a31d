//! Early mortality prediction for ICU sepsis admissions from structured
//! admission features fused with first-day clinical notes.
//!
//! The crate covers the whole pipeline: cohort ingestion and synthetic
//! generation ([`cohort`]), chained-equations imputation ([`impute`]), note
//! featurization ([`textfeat`]), the classifier families ([`linmod`],
//! [`trees`], [`neural`]), evaluation and significance testing ([`eval`]) and
//! the experiment runner behind the `mortality` binary ([`experiment`]).
//!
//! Each capability has a runnable program under `examples/`:
//!
//! ```bash
//! cargo run -p mortality --example synth_cohort
//! cargo run -p mortality --example impute_structured
//! cargo run -p mortality --example text_features
//! cargo run -p mortality --example linear_models
//! cargo run -p mortality --example tree_ensembles
//! cargo run -p mortality --example neural_nets
//! cargo run -p mortality --example permutation_test
//! cargo run -p mortality --example full_experiment
//! ```

pub mod cohort;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod impute;
pub mod linmod;
pub mod matrix;
pub mod model;
pub mod neural;
pub mod rng;
pub mod textfeat;
pub mod trees;

pub use error::{Error, Result};
