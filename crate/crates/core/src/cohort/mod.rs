//! Patient data model, cohort I/O, plausibility filtering, structured
//! encoding and the synthetic cohort generator.

mod encoder;
mod ranges;
mod record;
mod schema;
mod synth;

pub use encoder::{encode, fit_encoder, StructuredEncoder};
pub use ranges::{filter_outliers, PlausibleRangeTable, RemovalReport};
pub use record::{
    load_cohort, load_schema, save_cohort, Cohort, FeatureValue, Outcome, PatientRecord,
};
pub use schema::{FeatureDescriptor, FeatureKind, FeatureSchema};
pub use synth::{
    strongest_structured_feature, synth_cohort, synth_cohort_with_truth, SynthConfig, SynthTruth,
    DEFAULT_PROTECTIVE_TOKENS, DEFAULT_RISK_TOKENS,
};
