use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use mortality::cohort::{synth_cohort, FeatureValue, Outcome, PlausibleRangeTable, SynthConfig};
use mortality::experiment::{
    cmd_rank, featurize, run_experiment, run_permtest, CellStatus, CohortSource, ExperimentConfig, FeatureSet,
    Prepared, ResultsTable, Sampling,
};
use mortality::model::Algorithm;
use mortality::textfeat::StopWords;
use mortality::Error;

fn small_config(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        CohortSource::Synth(SynthConfig::default().with_n(600)),
        vec![Algorithm::L2Lr, Algorithm::L1Svm, Algorithm::Rf, Algorithm::Gbt],
    );
    c.outcomes = vec![Outcome::Hospital, Outcome::ThirtyDay];
    c.feature_sets = vec![FeatureSet::Structured, FeatureSet::Combined];
    c.samplings = vec![Sampling::None, Sampling::Under(4)];
    c.grids.insert(Algorithm::L2Lr, serde_json::from_str(r#"{"C": [0.1, 1.0]}"#).unwrap());
    c.grids.insert(Algorithm::L1Svm, serde_json::from_str(r#"{"C": [0.1]}"#).unwrap());
    c.grids.insert(Algorithm::Rf, serde_json::from_str(r#"{"n_trees": [10], "max_depth": [4]}"#).unwrap());
    c.grids.insert(Algorithm::Gbt, serde_json::from_str(r#"{"rounds": [10]}"#).unwrap());
    c.folds = 3;
    c.min_df = 5;
    c.impute_cycles = 3;
    c.permutations = 200;
    c.seed = 21;
    c.out_dir = out.to_path_buf();
    c
}

struct Run {
    _dir: tempfile::TempDir,
    out: PathBuf,
    table: ResultsTable,
}

fn shared_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let table = run_experiment(&small_config(&out), 0).unwrap();
        Run { _dir: dir, out, table }
    })
}

fn stem(id: &str) -> String {
    id.replace(':', "_")
}

#[test]
fn one_row_per_cell_and_unique_best_f() {
    let run = shared_run();
    assert_eq!(run.table.cells.len(), 2 * 2 * 2 * 4);
    assert!(run.table.cells.iter().all(|c| c.status == CellStatus::Ok), "{:?}", run.table.cells);
    for fs in [FeatureSet::Structured, FeatureSet::Combined] {
        let tsv = fs::read_to_string(run.out.join(format!("results_{fs}.tsv"))).unwrap();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "outcome\tsampling\talgorithm\tauc\tprecision\trecall\tf1\tbest_f");
        assert_eq!(lines.len(), 1 + 16);
        for block in lines[1..].chunks(4) {
            assert_eq!(block.iter().filter(|l| l.ends_with("\ttrue")).count(), 1);
        }
    }
    for c in &run.table.cells {
        let s = stem(&c.id);
        assert!(run.out.join(format!("cv/{s}.tsv")).is_file());
        assert!(run.out.join(format!("scores/{s}.tsv")).is_file());
        assert!(run.out.join(format!("models/{s}.model")).is_file());
        let auc = c.test.as_ref().unwrap().auc.unwrap();
        assert!(auc > 0.55, "{} auc {auc}", c.id);
    }
}

#[test]
fn rerun_from_manifest_is_byte_identical_and_jobs_invariant() {
    let run = shared_run();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(run.out.join("manifest.json")).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    run_experiment(&cfg, 1).unwrap();
    for f in ["results_structured.tsv", "results_combined.tsv", "results.json"] {
        assert_eq!(
            fs::read(run.out.join(f)).unwrap(),
            fs::read(dir.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    for c in &run.table.cells {
        let f = format!("scores/{}.tsv", stem(&c.id));
        assert_eq!(fs::read(run.out.join(&f)).unwrap(), fs::read(dir.path().join(&f)).unwrap());
    }
}

#[test]
fn permtest_on_stored_scores() {
    let run = shared_run();
    let a = "combined:hospital:none:l2-lr";
    let b = "structured:hospital:none:gbt";
    let same = run_permtest(&run.out, a, a, None, None).unwrap();
    assert_eq!(same.p_value, 1.0);
    let r1 = run_permtest(&run.out, a, b, None, Some(3)).unwrap();
    let r2 = run_permtest(&run.out, a, b, None, Some(3)).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.n_perm, 200);

    let err = run_permtest(&run.out, a, "combined:30day:none:l2-lr", None, None).unwrap_err();
    assert!(err.to_string().contains("mismatched test splits"), "{err}");
    assert!(run_permtest(&run.out, a, "combined:hospital:none:cnn", None, None).is_err());
}

#[test]
fn missing_scores_error_names_the_cell() {
    let run = shared_run();
    let dir = tempfile::tempdir().unwrap();
    fs::copy(run.out.join("manifest.json"), dir.path().join("manifest.json")).unwrap();
    fs::create_dir(dir.path().join("scores")).unwrap();
    let a = "combined:hospital:none:l2-lr";
    let err = run_permtest(dir.path(), a, a, None, None).unwrap_err();
    assert!(err.to_string().contains(a), "{err}");
}

#[test]
fn rank_structured_coefficients() {
    let run = shared_run();
    let model = run.out.join(format!("models/{}.model", stem("combined:hospital:none:l2-lr")));
    let top = cmd_rank(&model, 10).unwrap();
    assert_eq!(top.len(), 10);
    let layout = mortality::experiment::load_layout(&model).unwrap();
    assert!(top.iter().all(|(n, _)| layout.structured.contains(n) && !n.starts_with("tok:")));
    assert!(top.windows(2).all(|w| w[0].1 >= w[1].1));

    let forest = run.out.join(format!("models/{}.model", stem("combined:hospital:none:rf")));
    let err = cmd_rank(&forest, 10).unwrap_err();
    assert!(err.to_string().contains("linear models only"), "{err}");
}

#[test]
fn invalid_config_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut c = small_config(&out);
    c.algorithms.push(Algorithm::Cnn);
    assert!(matches!(run_experiment(&c, 1), Err(Error::Config(_))));
    assert!(!out.exists());
}

#[test]
fn failing_cell_is_recorded_and_others_proceed() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("emb.txt");
    fs::write(&emb, "hypotensive 0.1 0.2\n").unwrap();
    let mut c = ExperimentConfig::new(
        CohortSource::Synth(SynthConfig::default().with_n(300)),
        vec![Algorithm::L2Lr, Algorithm::Cnn],
    );
    c.feature_sets = vec![FeatureSet::Notes];
    c.grids.insert(Algorithm::L2Lr, serde_json::from_str(r#"{"C": [1.0]}"#).unwrap());
    c.folds = 2;
    c.min_df = 5;
    c.impute_cycles = 2;
    c.embeddings = Some(emb);
    c.out_dir = dir.path().join("out");
    let table = run_experiment(&c, 1).unwrap();
    assert_eq!(table.cells[0].status, CellStatus::Ok);
    assert_eq!(table.cells[1].status, CellStatus::Failed);
    assert!(table.cells[1].error.as_ref().unwrap().contains("expected 64 values"));
    let tsv = fs::read_to_string(dir.path().join("out/results_notes.tsv")).unwrap();
    assert!(tsv.lines().nth(2).unwrap().contains("failed"));
    assert!(tsv.lines().nth(1).unwrap().ends_with("true"));
}

#[test]
fn cnn_cell_runs_on_notes() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new(
        CohortSource::Synth(SynthConfig::default().with_n(300)),
        vec![Algorithm::Cnn],
    );
    c.feature_sets = vec![FeatureSet::Notes, FeatureSet::Combined];
    c.grids.insert(
        Algorithm::Cnn,
        serde_json::from_str(
            r#"{"embedding_dim": [8], "filters": [4], "hidden": [8], "widths": [[2, 3]], "max_len": [64],
                "train.max_epochs": [2], "train.learning_rate": [0.005]}"#,
        )
        .unwrap(),
    );
    c.folds = 2;
    c.min_df = 5;
    c.impute_cycles = 2;
    c.out_dir = dir.path().join("out");
    let table = run_experiment(&c, 1).unwrap();
    assert!(table.cells.iter().all(|c| c.status == CellStatus::Ok), "{:?}", table.cells);
    let model = dir.path().join("out/models").join(format!("{}.model", stem(&table.cells[1].id)));
    assert!(cmd_rank(&model, 3).is_err());
}

/// Perturbing evaluation rows must leave every fitted transformer and the
/// fit-side features untouched.
#[test]
fn no_leakage_from_eval_rows() {
    let cohort = synth_cohort(&SynthConfig::default().with_n(200), 5).unwrap();
    let ranges = PlausibleRangeTable::default_table();
    let stop = StopWords::default_list();
    let fit: Vec<usize> = (0..140).collect();
    let eval: Vec<usize> = (140..200).collect();
    let base = featurize(&Prepared::new(&cohort, &ranges, &stop), &fit, &eval, 3, 3, 11).unwrap();

    let mut changed = cohort.clone();
    let hr = changed.schema.index_of("heart_rate").unwrap();
    for r in &mut changed.records[140..] {
        r.values[hr] = Some(FeatureValue::Number(299.0));
        r.note_text = "completely novel vocabulary zebra quokka axolotl ".repeat(5);
        r.label_hospital = !r.label_hospital;
    }
    let prepared = Prepared::new(&changed, &ranges, &stop);
    assert_eq!(prepared.len(), 200);
    let other = featurize(&prepared, &fit, &eval, 3, 3, 11).unwrap();
    assert_eq!(base.imputation, other.imputation);
    assert_eq!(base.encoder, other.encoder);
    assert_eq!(base.tfidf, other.tfidf);
    assert_eq!(base.fit, other.fit);
    assert_ne!(base.eval, other.eval);
}
