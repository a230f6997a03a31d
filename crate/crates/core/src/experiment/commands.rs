use std::fs;
use std::path::Path;

use super::pipeline::{ColumnLayout, Manifest};
use crate::cohort::{save_cohort, synth_cohort, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{perm_test_auc, PermTestResult};
use crate::linmod::rank_coefficients;
use crate::model::ClassifierModel;
use crate::rng::derive_seed_str;

struct StoredScores {
    ids: Vec<String>,
    labels: Vec<bool>,
    scores: Vec<f64>,
}

fn load_scores(dir: &Path, manifest: &Manifest, id: &str) -> Result<StoredScores> {
    let cell = manifest.cell(id)?;
    let missing = || Error::invalid(format!("no stored test scores for cell `{id}`"));
    let rel = cell.scores.as_ref().ok_or_else(missing)?;
    let text = fs::read_to_string(dir.join(rel)).map_err(|_| missing())?;
    let mut out = StoredScores {
        ids: Vec::new(),
        labels: Vec::new(),
        scores: Vec::new(),
    };
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Parse {
            line: i + 1,
            message: format!("malformed score line for cell `{id}`"),
        };
        let mut parts = line.split('\t');
        let (Some(rid), Some(y), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        out.ids.push(rid.to_string());
        out.labels.push(match y {
            "1" => true,
            "0" => false,
            _ => return Err(bad()),
        });
        out.scores.push(s.parse().map_err(|_| bad())?);
    }
    Ok(out)
}

/// Paired permutation test between two cells of a finished run. Both cells
/// must have been scored on the same test split. `permutations` and `seed`
/// default to the run's configured count and a seed derived from its master
/// seed.
pub fn run_permtest(
    results_dir: impl AsRef<Path>,
    cell_a: &str,
    cell_b: &str,
    permutations: Option<usize>,
    seed: Option<u64>,
) -> Result<PermTestResult> {
    let dir = results_dir.as_ref();
    let manifest = Manifest::load(dir)?;
    let (ma, mb) = (manifest.cell(cell_a)?, manifest.cell(cell_b)?);
    if ma.outcome != mb.outcome {
        return Err(Error::invalid(format!(
            "mismatched test splits: `{cell_a}` and `{cell_b}` predict different outcomes"
        )));
    }
    let a = load_scores(dir, &manifest, cell_a)?;
    let b = load_scores(dir, &manifest, cell_b)?;
    let expected = manifest.test_ids.get(ma.outcome.as_str());
    if a.ids != b.ids || a.labels != b.labels || expected != Some(&a.ids) {
        return Err(Error::invalid(format!(
            "mismatched test splits between `{cell_a}` and `{cell_b}`"
        )));
    }
    let n_perm = permutations.unwrap_or(manifest.config.permutations);
    let seed = seed.unwrap_or_else(|| derive_seed_str(manifest.config.seed, "permtest"));
    perm_test_auc(&a.scores, &b.scores, &a.labels, n_perm, seed)
}

/// Column layout stored next to a model written by a run.
pub fn load_layout(model_path: impl AsRef<Path>) -> Result<ColumnLayout> {
    let p = model_path.as_ref().with_extension("columns.json");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Top `k` structured coefficients of a saved linear model. Text columns
/// occupy the indices after the structured block and are excluded.
pub fn cmd_rank(model_path: impl AsRef<Path>, k: usize) -> Result<Vec<(String, f64)>> {
    let path = model_path.as_ref();
    let ClassifierModel::Linear(model) = ClassifierModel::load(path)? else {
        return Err(Error::invalid("rank supports linear models only"));
    };
    let layout = load_layout(path)?;
    let ds = layout.structured.len();
    if ds == 0 {
        return Err(Error::invalid("model has no structured columns"));
    }
    if model.dim() != ds + layout.text_dim {
        return Err(Error::DimensionMismatch {
            expected: ds + layout.text_dim,
            found: model.dim(),
        });
    }
    let mut structured = model.clone();
    structured.weights.truncate(ds);
    rank_coefficients(&structured, &layout.structured, k)
}

/// Write a synthetic cohort as JSONL; returns the record count.
pub fn cmd_synth(config_path: Option<&Path>, out: &Path, seed: u64, n: Option<usize>) -> Result<usize> {
    let mut config = match config_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = n {
        config.n = n;
    }
    let cohort = synth_cohort(&config, seed)?;
    save_cohort(&cohort, out)?;
    Ok(cohort.len())
}
