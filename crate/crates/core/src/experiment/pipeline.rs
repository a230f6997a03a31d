use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{CohortSource, ExperimentConfig, FeatureSet, GridCell, Sampling};
use super::features::{featurize, FoldFeatures, Prepared};
use crate::cohort::{load_cohort, load_schema, synth_cohort, Cohort, FeatureSchema, Outcome, PlausibleRangeTable};
use crate::error::{Error, Result};
use crate::eval::{
    classification_report, kfold_grid_search, stratified_kfold, stratified_split, undersample, EvalReport,
    GridResult, Scored,
};
use crate::linmod::compute_class_weights;
use crate::model::{fit_model, Algorithm, ClassifierModel, ModelInput};
use crate::neural::{load_embeddings, CnnParams};
use crate::rng::derive_seed_str;
use crate::textfeat::StopWords;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub id: String,
    pub feature_set: FeatureSet,
    pub outcome: Outcome,
    pub sampling: Sampling,
    pub algorithm: Algorithm,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Label and hyperparameters of the selected grid cell.
    #[serde(default)]
    pub best_params: Option<String>,
    #[serde(default)]
    pub hyper: Option<Value>,
    #[serde(default)]
    pub cv: Option<GridResult>,
    #[serde(default)]
    pub test: Option<EvalReport>,
    /// Highest test F1 within its (feature set, outcome, sampling) block.
    pub best_f: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub cells: Vec<CellResult>,
}

impl ResultsTable {
    pub fn get(&self, id: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.id == id)
    }

    fn mark_best_f(&mut self) {
        let mut best: BTreeMap<(FeatureSet, &str, String), (usize, f64)> = BTreeMap::new();
        for (i, c) in self.cells.iter().enumerate() {
            let Some(t) = &c.test else { continue };
            let key = (c.feature_set, c.outcome.as_str(), c.sampling.to_string());
            match best.get(&key) {
                Some(&(_, f)) if f >= t.f1 => {}
                _ => {
                    best.insert(key, (i, t.f1));
                }
            }
        }
        let winners: Vec<usize> = best.values().map(|&(i, _)| i).collect();
        for (i, c) in self.cells.iter_mut().enumerate() {
            c.best_f = winners.contains(&i);
        }
    }

    /// Rows for one feature set, in run order.
    pub fn to_tsv(&self, fs: FeatureSet) -> String {
        let mut out = String::from("outcome\tsampling\talgorithm\tauc\tprecision\trecall\tf1\tbest_f\n");
        for c in self.cells.iter().filter(|c| c.feature_set == fs) {
            let metrics = match &c.test {
                Some(t) => format!(
                    "{}\t{:.4}\t{:.4}\t{:.4}",
                    t.auc.map_or("NA".into(), |a| format!("{a:.4}")),
                    t.precision,
                    t.recall,
                    t.f1
                ),
                None => ["failed"; 4].join("\t"),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{metrics}\t{}\n",
                c.outcome.as_str(),
                c.sampling,
                c.algorithm,
                c.best_f
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub id: String,
    pub outcome: Outcome,
    /// Test-score file relative to the results directory, absent on failure.
    pub scores: Option<String>,
    pub model: Option<String>,
}

/// Everything needed to replay a run: `mortality run --config manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, u64>,
    pub n_records: usize,
    /// Test-split record ids per outcome.
    pub test_ids: BTreeMap<String, Vec<String>>,
    pub cells: Vec<ManifestCell>,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn cell(&self, id: &str) -> Result<&ManifestCell> {
        self.cells
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::invalid(format!("cell `{id}` is not part of this run")))
    }
}

/// Column layout saved next to each model so coefficients can be named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub structured: Vec<String>,
    pub text_dim: usize,
}

pub(crate) fn file_stem(id: &str) -> String {
    id.replace(':', "_")
}

/// Load the schema, cohort, stop words and range table a config names.
pub fn load_inputs(config: &ExperimentConfig) -> Result<(Cohort, StopWords, PlausibleRangeTable)> {
    let schema = match &config.schema {
        Some(p) => load_schema(p)?,
        None => FeatureSchema::default_sepsis(),
    };
    let cohort = match &config.cohort {
        CohortSource::Path(p) => load_cohort(p, &schema)?,
        CohortSource::Synth(s) => {
            if config.schema.is_some() {
                return Err(Error::Config("a custom schema cannot be combined with a synthetic cohort".into()));
            }
            synth_cohort(s, derive_seed_str(config.seed, "synth"))?
        }
    };
    let stopwords = match &config.stopwords {
        Some(p) => StopWords::load(p)?,
        None => StopWords::default_list(),
    };
    let ranges = match &config.ranges {
        Some(p) => PlausibleRangeTable::load(p)?,
        None => PlausibleRangeTable::default_table(),
    };
    ranges.validate_for(&cohort.schema)?;
    Ok((cohort, stopwords, ranges))
}

/// Split and featurizations shared by every cell of one outcome.
struct OutcomeData {
    train: Vec<usize>,
    test: Vec<usize>,
    train_labels: Vec<bool>,
    test_labels: Vec<bool>,
    cv_seed: u64,
    folds: Vec<FoldFeatures>,
    full: FoldFeatures,
}

fn prepare_outcome(config: &ExperimentConfig, data: &Prepared, outcome: Outcome) -> Result<OutcomeData> {
    let o = outcome.as_str();
    let labels = data.cohort.labels(outcome);
    let split = stratified_split(
        &labels,
        config.split_ratio,
        config.stratify,
        derive_seed_str(config.seed, &format!("split:{o}")),
    )?;
    let train_labels: Vec<bool> = split.train.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<bool> = split.test.iter().map(|&i| labels[i]).collect();
    let cv_seed = derive_seed_str(config.seed, &format!("cv:{o}"));
    let folds = stratified_kfold(&train_labels, config.folds, cv_seed)?;
    let folds = (0..folds.len())
        .into_par_iter()
        .map(|f| {
            let (fit, val) = fold_positions(&folds, f);
            let fit_rows: Vec<usize> = fit.iter().map(|&p| split.train[p]).collect();
            let val_rows: Vec<usize> = val.iter().map(|&p| split.train[p]).collect();
            let seed = derive_seed_str(config.seed, &format!("features:{o}:{f}"));
            featurize(data, &fit_rows, &val_rows, config.min_df, config.impute_cycles, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let seed = derive_seed_str(config.seed, &format!("features:{o}:final"));
    let full = featurize(data, &split.train, &split.test, config.min_df, config.impute_cycles, seed)?;
    Ok(OutcomeData {
        train: split.train,
        test: split.test,
        train_labels,
        test_labels,
        cv_seed,
        folds,
        full,
    })
}

/// Training and validation positions of fold `f`, in the order the grid
/// search uses.
fn fold_positions(folds: &[Vec<usize>], f: usize) -> (Vec<usize>, Vec<usize>) {
    let mut fit: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(g, _)| *g != f)
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    fit.sort_unstable();
    (fit, folds[f].clone())
}

struct CellSpec {
    fs: FeatureSet,
    outcome: Outcome,
    sampling: Sampling,
    algo: Algorithm,
    id: String,
}

struct CellOutput {
    grid: GridResult,
    best: GridCell,
    report: EvalReport,
    scores: Vec<f64>,
    model: ClassifierModel,
    layout: ColumnLayout,
}

/// Fit every grid cell on the fit block of `ff` and score its eval block.
#[allow(clippy::too_many_arguments)]
fn fit_and_score(
    config: &ExperimentConfig,
    ff: &FoldFeatures,
    spec: &CellSpec,
    grid: &[&GridCell],
    y_fit: &[bool],
    under_seed: u64,
    model_seed: u64,
) -> Result<Vec<(ClassifierModel, Vec<f64>)>> {
    let keep: Vec<usize> = match spec.sampling {
        Sampling::None => (0..y_fit.len()).collect(),
        Sampling::Under(k) => undersample(y_fit, f64::from(k), under_seed)?,
    };
    let y: Vec<bool> = keep.iter().map(|&i| y_fit[i]).collect();
    let weights = if config.class_weights {
        Some(compute_class_weights(&y)?.instance_weights(&y))
    } else {
        None
    };
    let x_fit = ff.fit.matrix(spec.fs)?.select_rows(&keep);
    let x_eval = ff.eval.matrix(spec.fs)?;
    let (seq_fit, seq_eval) = if spec.algo == Algorithm::Cnn {
        (
            Some(ff.fit.sequences(spec.fs)?.select(&keep)),
            Some(ff.eval.sequences(spec.fs)?),
        )
    } else {
        (None, None)
    };
    let vocab_size = ff.tfidf.vocab().len();
    grid.iter()
        .enumerate()
        .map(|(g, cell)| {
            let seed = derive_seed_str(model_seed, &g.to_string());
            let embeddings = match (&config.embeddings, spec.algo) {
                (Some(path), Algorithm::Cnn) => {
                    let p: CnnParams = serde_json::from_value(cell.hyper.clone())?;
                    Some(load_embeddings(path, ff.tfidf.vocab(), p.embedding_dim, seed)?)
                }
                _ => None,
            };
            let input = ModelInput {
                matrix: &x_fit,
                sequences: seq_fit.as_ref(),
                vocab_size,
                embeddings: embeddings.as_ref(),
            };
            let model = fit_model(spec.algo, &cell.hyper, &input, &y, weights.as_deref(), seed)?;
            let eval_input = ModelInput {
                matrix: &x_eval,
                sequences: seq_eval.as_ref(),
                vocab_size,
                embeddings: None,
            };
            let scores = model.scores(&eval_input)?;
            Ok((model, scores))
        })
        .collect()
}

fn run_cell(config: &ExperimentConfig, od: &OutcomeData, spec: &CellSpec) -> Result<CellOutput> {
    let o = spec.outcome.as_str();
    let cells = config.grid_cells(spec.algo)?;
    let labels: Vec<String> = cells.iter().map(|c| c.label.clone()).collect();
    let all: Vec<&GridCell> = cells.iter().collect();
    let grid = kfold_grid_search(
        &od.train_labels,
        &labels,
        config.folds,
        config.selection_metric,
        od.cv_seed,
        |f, train, _val| {
            let y_fit: Vec<bool> = train.iter().map(|&p| od.train_labels[p]).collect();
            let ff = &od.folds[f];
            if ff.fit.len() != train.len() {
                return Err(Error::DimensionMismatch {
                    expected: ff.fit.len(),
                    found: train.len(),
                });
            }
            let under = derive_seed_str(config.seed, &format!("under:{o}:{f}"));
            let model = derive_seed_str(config.seed, &format!("model:{}:{f}", spec.id));
            Ok(fit_and_score(config, ff, spec, &all, &y_fit, under, model)?
                .into_iter()
                .map(|(_, scores)| Scored {
                    scores,
                    threshold: spec.algo.threshold(),
                })
                .collect())
        },
    )?;
    let best = cells[grid.best].clone();
    let under = derive_seed_str(config.seed, &format!("under:{o}:final"));
    let model_seed = derive_seed_str(config.seed, &format!("model:{}:final", spec.id));
    let (model, scores) = fit_and_score(config, &od.full, spec, &[&best], &od.train_labels, under, model_seed)?
        .pop()
        .expect("one grid cell");
    let report = classification_report(&scores, &od.test_labels, spec.algo.threshold())?;
    let layout = ColumnLayout {
        structured: if spec.fs.uses_structured() {
            od.full.encoder.column_names()
        } else {
            Vec::new()
        },
        text_dim: if spec.fs.uses_notes() { od.full.tfidf.dim() } else { 0 },
    };
    Ok(CellOutput {
        grid,
        best,
        report,
        scores,
        model,
        layout,
    })
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Run every configured cell and write results, models, scores, CV tables
/// and the manifest under `config.out_dir`. `jobs` bounds the worker threads
/// (0 uses all cores); the output does not depend on it.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ResultsTable> {
    config.validate()?;
    let (cohort, stopwords, ranges) = load_inputs(config)?;
    let data = Prepared::new(&cohort, &ranges, &stopwords);
    if data.len() < 2 * config.folds {
        return Err(Error::invalid(format!("only {} records have notes", data.len())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let (outcomes, outputs) = pool.install(|| {
        let outcomes: Vec<(Outcome, std::result::Result<OutcomeData, String>)> = config
            .outcomes
            .par_iter()
            .map(|&o| (o, prepare_outcome(config, &data, o).map_err(|e| e.to_string())))
            .collect();
        let mut specs = Vec::new();
        for &fs in &config.feature_sets {
            for &outcome in &config.outcomes {
                for &sampling in &config.samplings {
                    for &algo in &config.algorithms {
                        specs.push(CellSpec {
                            fs,
                            outcome,
                            sampling,
                            algo,
                            id: ExperimentConfig::cell_id(fs, outcome, sampling, algo),
                        });
                    }
                }
            }
        }
        let outputs: Vec<(CellSpec, std::result::Result<CellOutput, String>)> = specs
            .into_par_iter()
            .map(|spec| {
                let od = &outcomes.iter().find(|(o, _)| *o == spec.outcome).expect("outcome prepared").1;
                let out = match od {
                    Ok(od) => run_cell(config, od, &spec).map_err(|e| e.to_string()),
                    Err(e) => Err(format!("featurization failed: {e}")),
                };
                if let Err(e) = &out {
                    log::warn!("cell {} failed: {e}", spec.id);
                } else {
                    log::info!("cell {} done", spec.id);
                }
                (spec, out)
            })
            .collect();
        (outcomes, outputs)
    });

    let out = &config.out_dir;
    for sub in ["", "cv", "scores", "models"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut seeds = BTreeMap::new();
    seeds.insert("master".to_string(), config.seed);
    let mut test_ids = BTreeMap::new();
    for (o, od) in &outcomes {
        let o = o.as_str();
        for tag in ["split", "cv"] {
            let key = format!("{tag}:{o}");
            seeds.insert(key.clone(), derive_seed_str(config.seed, &key));
        }
        if let Ok(od) = od {
            let ids = od.test.iter().map(|&i| data.cohort.records[i].id.clone()).collect();
            test_ids.insert(o.to_string(), ids);
            debug_assert_eq!(od.train.len() + od.test.len(), data.len());
        }
    }

    let mut table = ResultsTable { cells: Vec::new() };
    let mut manifest_cells = Vec::new();
    for (spec, res) in outputs {
        let stem = file_stem(&spec.id);
        let mut row = CellResult {
            id: spec.id.clone(),
            feature_set: spec.fs,
            outcome: spec.outcome,
            sampling: spec.sampling,
            algorithm: spec.algo,
            status: CellStatus::Failed,
            error: None,
            best_params: None,
            hyper: None,
            cv: None,
            test: None,
            best_f: false,
        };
        let mut mcell = ManifestCell {
            id: spec.id.clone(),
            outcome: spec.outcome,
            scores: None,
            model: None,
        };
        match res {
            Ok(c) => {
                let od = outcomes
                    .iter()
                    .find_map(|(o, od)| (*o == spec.outcome).then_some(od))
                    .and_then(|od| od.as_ref().ok())
                    .expect("successful cell has outcome data");
                write(out.join("cv").join(format!("{stem}.tsv")), c.grid.to_tsv())?;
                let mut tsv = String::from("id\tlabel\tscore\n");
                for ((&i, &y), s) in od.test.iter().zip(&od.test_labels).zip(&c.scores) {
                    tsv.push_str(&format!("{}\t{}\t{s}\n", data.cohort.records[i].id, u8::from(y)));
                }
                let scores_rel = format!("scores/{stem}.tsv");
                write(out.join(&scores_rel), tsv)?;
                let model_rel = format!("models/{stem}.model");
                c.model.save(out.join(&model_rel))?;
                write(
                    out.join(format!("models/{stem}.columns.json")),
                    serde_json::to_vec_pretty(&c.layout)?,
                )?;
                mcell.scores = Some(scores_rel);
                mcell.model = Some(model_rel);
                row.status = CellStatus::Ok;
                row.best_params = Some(c.best.label);
                row.hyper = Some(c.best.hyper);
                row.cv = Some(c.grid);
                row.test = Some(c.report);
            }
            Err(e) => row.error = Some(e),
        }
        table.cells.push(row);
        manifest_cells.push(mcell);
    }
    table.mark_best_f();

    for &fs in &config.feature_sets {
        write(out.join(format!("results_{fs}.tsv")), table.to_tsv(fs))?;
    }
    write(out.join("results.json"), serde_json::to_vec_pretty(&table)?)?;
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds,
        n_records: data.len(),
        test_ids,
        cells: manifest_cells,
    };
    write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(table)
}
