//! End-to-end run on a synthetic cohort: three feature sets, two samplings,
//! linear models and boosted trees, then a permutation test between the
//! combined and notes-only L2 logistic regression and the top structured
//! coefficients.

use mortality::cohort::SynthConfig;
use mortality::experiment::{cmd_rank, run_experiment, run_permtest, CohortSource, ExperimentConfig, FeatureSet, Sampling};
use mortality::model::Algorithm;

fn main() -> mortality::Result<()> {
    let out = std::env::temp_dir().join("mortality_full_experiment");
    let mut config = ExperimentConfig::new(
        CohortSource::Synth(SynthConfig::default().with_n(2000)),
        vec![Algorithm::L2Lr, Algorithm::L1Lr, Algorithm::Gbt],
    );
    config.feature_sets = vec![FeatureSet::Structured, FeatureSet::Notes, FeatureSet::Combined];
    config.samplings = vec![Sampling::None, Sampling::Under(4)];
    config.grids.insert(Algorithm::Gbt, serde_json::from_str(r#"{"rounds": [50], "max_depth": [2, 3]}"#).unwrap());
    config.seed = 7;
    config.out_dir = out.clone();

    let table = run_experiment(&config, 0)?;
    for fs in &config.feature_sets {
        println!("== {fs}\n{}", table.to_tsv(*fs));
    }

    let a = ExperimentConfig::cell_id(FeatureSet::Combined, config.outcomes[0], Sampling::None, Algorithm::L2Lr);
    let b = ExperimentConfig::cell_id(FeatureSet::Notes, config.outcomes[0], Sampling::None, Algorithm::L2Lr);
    let p = run_permtest(&out, &a, &b, None, None)?;
    println!("{a} vs {b}: |dAUC| {:.4}, p = {:.4}", p.observed, p.p_value);

    println!("\ntop structured coefficients ({a}):");
    for (name, w) in cmd_rank(out.join("models").join(format!("{}.model", a.replace(':', "_"))), 10)? {
        println!("  {name:28} {w:+.4}");
    }
    println!("\nartifacts in {}", out.display());
    Ok(())
}
