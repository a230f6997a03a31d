//! Generate a small synthetic cohort, write it as JSONL and summarize it.

use mortality::cohort::{synth_cohort_with_truth, Cohort, FeatureSchema, Outcome, SynthConfig};

fn main() -> mortality::Result<()> {
    let config = SynthConfig::default().with_n(500);
    let (cohort, truth) = synth_cohort_with_truth(&config, 42)?;

    let rate = |o| cohort.labels(o).iter().filter(|&&y| y).count() as f64 / cohort.len() as f64;
    println!("records            {}", cohort.len());
    println!("hospital mortality {:.3}", rate(Outcome::Hospital));
    println!("30-day mortality   {:.3}", rate(Outcome::ThirtyDay));

    let (cols, block) = cohort.continuous_block();
    let missing = block.iter().flatten().filter(|v| v.is_none()).count();
    println!("continuous columns {} ({missing} missing cells)", cols.len());
    println!("first note: {:.100}...", cohort.records[0].note_text.replace('\n', " "));
    println!("true logit of record 1: {:.3}", truth.logit_hospital[0]);

    let path = std::env::temp_dir().join("synth_cohort.jsonl");
    cohort.save(&path)?;
    let back = Cohort::from_jsonl(&std::fs::read_to_string(&path).unwrap(), &FeatureSchema::default_sepsis())?;
    assert_eq!(back.len(), cohort.len());
    println!("round-tripped through {}", path.display());
    Ok(())
}
