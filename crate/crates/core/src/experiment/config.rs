use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cohort::{Outcome, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{SelectionMetric, DEFAULT_PERMUTATIONS};
use crate::model::{check_hyper, Algorithm};
use crate::textfeat::DEFAULT_MIN_DF;

/// Where the cohort comes from: a JSONL file or the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum CohortSource {
    Path(PathBuf),
    Synth(SynthConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Structured,
    Notes,
    Combined,
}

impl FeatureSet {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Structured => "structured",
            FeatureSet::Notes => "notes",
            FeatureSet::Combined => "combined",
        }
    }

    pub fn uses_structured(self) -> bool {
        self != FeatureSet::Notes
    }

    pub fn uses_notes(self) -> bool {
        self != FeatureSet::Structured
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Training-set resampling: `none`, or `1:K` random under-sampling of the
/// majority class to K times the minority count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Sampling {
    None,
    Under(u32),
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::None => f.write_str("none"),
            Sampling::Under(k) => write!(f, "1:{k}"),
        }
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Sampling::None);
        }
        s.strip_prefix("1:")
            .and_then(|k| k.parse::<u32>().ok())
            .filter(|&k| k >= 1)
            .map(Sampling::Under)
            .ok_or_else(|| Error::Config(format!("sampling must be `none` or `1:K`, got `{s}`")))
    }
}

impl TryFrom<String> for Sampling {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Sampling> for String {
    fn from(s: Sampling) -> Self {
        s.to_string()
    }
}

/// Values to try per hyperparameter. Dotted keys reach nested fields, e.g.
/// `train.learning_rate`.
pub type Grid = BTreeMap<String, Vec<Value>>;

fn default_outcomes() -> Vec<Outcome> {
    vec![Outcome::Hospital]
}
fn default_feature_sets() -> Vec<FeatureSet> {
    vec![FeatureSet::Combined]
}
fn default_samplings() -> Vec<Sampling> {
    vec![Sampling::None]
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_ratio() -> f64 {
    0.7
}
fn default_true() -> bool {
    true
}
fn default_folds() -> usize {
    5
}
fn default_min_df() -> usize {
    DEFAULT_MIN_DF
}
fn default_perms() -> usize {
    DEFAULT_PERMUTATIONS
}
fn default_cycles() -> usize {
    crate::impute::DEFAULT_CYCLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cohort: CohortSource,
    /// Feature schema file; the built-in sepsis schema when absent.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_outcomes")]
    pub outcomes: Vec<Outcome>,
    #[serde(default = "default_feature_sets")]
    pub feature_sets: Vec<FeatureSet>,
    #[serde(default = "default_samplings")]
    pub samplings: Vec<Sampling>,
    pub algorithms: Vec<Algorithm>,
    /// Per-algorithm grids. Linear models default to `C ∈ {0.01, 0.1, 1, 10}`,
    /// the rest to their single default cell.
    #[serde(default)]
    pub grids: BTreeMap<Algorithm, Grid>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_ratio")]
    pub split_ratio: f64,
    #[serde(default = "default_true")]
    pub stratify: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    #[serde(default = "default_min_df")]
    pub min_df: usize,
    #[serde(default = "default_perms")]
    pub permutations: usize,
    /// Balanced class weights, recomputed on the (resampled) training rows.
    #[serde(default = "default_true")]
    pub class_weights: bool,
    #[serde(default = "default_cycles")]
    pub impute_cycles: usize,
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    #[serde(default)]
    pub ranges: Option<PathBuf>,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
}

/// One expanded grid cell: a printable label and the full hyperparameter
/// object.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub label: String,
    pub hyper: Value,
}

impl ExperimentConfig {
    /// Minimal config over `cohort` with every default filled in.
    pub fn new(cohort: CohortSource, algorithms: Vec<Algorithm>) -> Self {
        Self {
            cohort,
            schema: None,
            outcomes: default_outcomes(),
            feature_sets: default_feature_sets(),
            samplings: default_samplings(),
            algorithms,
            grids: BTreeMap::new(),
            seed: 0,
            out_dir: default_out(),
            split_ratio: default_ratio(),
            stratify: true,
            folds: default_folds(),
            selection_metric: SelectionMetric::default(),
            min_df: default_min_df(),
            permutations: default_perms(),
            class_weights: true,
            impute_cycles: default_cycles(),
            stopwords: None,
            ranges: None,
            embeddings: None,
        }
    }

    /// Parse a config file. A run manifest is accepted too; its embedded
    /// config is replayed.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Config(e.to_string());
        let mut v: Value = serde_json::from_str(text).map_err(bad)?;
        if v.get("manifest_version").is_some() {
            v = v
                .get_mut("config")
                .map(Value::take)
                .ok_or_else(|| Error::Config("manifest has no `config`".into()))?;
        }
        serde_json::from_value(v).map_err(bad)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        fn unique<T: Ord + fmt::Debug>(what: &str, items: &[T]) -> Result<()> {
            if items.is_empty() {
                return Err(Error::Config(format!("`{what}` must not be empty")));
            }
            let set: BTreeSet<&T> = items.iter().collect();
            if set.len() != items.len() {
                return Err(Error::Config(format!("`{what}` lists a duplicate entry")));
            }
            Ok(())
        }
        unique("algorithms", &self.algorithms)?;
        unique("feature_sets", &self.feature_sets)?;
        let outcomes: Vec<&str> = self.outcomes.iter().map(|o| o.as_str()).collect();
        unique("outcomes", &outcomes)?;
        let samplings: Vec<String> = self.samplings.iter().map(|s| s.to_string()).collect();
        unique("samplings", &samplings)?;

        let has = |a| self.algorithms.contains(&a);
        if has(Algorithm::Cnn) && has(Algorithm::Mlp) {
            return cfg("mlp and cnn are mutually exclusive".into());
        }
        if has(Algorithm::Cnn) && self.feature_sets.contains(&FeatureSet::Structured) {
            return cfg("cnn needs notes; drop it or the `structured` feature set".into());
        }
        for algo in self.grids.keys() {
            if !has(*algo) {
                return cfg(format!("grid given for `{algo}`, which is not in `algorithms`"));
            }
        }
        for &algo in &self.algorithms {
            self.grid_cells(algo)?;
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return cfg(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        if self.folds < 2 {
            return cfg("folds must be at least 2".into());
        }
        if self.min_df == 0 || self.permutations == 0 || self.impute_cycles == 0 {
            return cfg("min_df, permutations and impute_cycles must be positive".into());
        }
        match &self.cohort {
            CohortSource::Synth(s) => s.validate()?,
            CohortSource::Path(p) => require_file("cohort", p)?,
        }
        for (what, p) in [
            ("schema", &self.schema),
            ("stopwords", &self.stopwords),
            ("ranges", &self.ranges),
            ("embeddings", &self.embeddings),
        ] {
            if let Some(p) = p {
                require_file(what, p)?;
            }
        }
        Ok(())
    }

    /// Expanded grid for `algo` as a cartesian product over the keys in
    /// lexicographic order, the last key varying fastest.
    pub fn grid_cells(&self, algo: Algorithm) -> Result<Vec<GridCell>> {
        let default_linear: Grid = [(
            "C".to_string(),
            [0.01, 0.1, 1.0, 10.0].iter().map(|&c| Value::from(c)).collect(),
        )]
        .into();
        let grid = match self.grids.get(&algo) {
            Some(g) => g.clone(),
            None if algo.is_linear() => default_linear,
            None => Grid::new(),
        };
        expand_grid(algo, &grid)
    }

    pub fn cell_id(fs: FeatureSet, outcome: Outcome, sampling: Sampling, algo: Algorithm) -> String {
        format!("{fs}:{}:{sampling}:{algo}", outcome.as_str())
    }
}

fn require_file(what: &str, p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} file `{}` not found", p.display())))
    }
}

pub fn expand_grid(algo: Algorithm, grid: &Grid) -> Result<Vec<GridCell>> {
    let mut cells = vec![GridCell {
        label: String::new(),
        hyper: algo.default_hyper(),
    }];
    for (key, values) in grid {
        if values.is_empty() {
            return Err(Error::Config(format!("{algo} grid key `{key}` has no values")));
        }
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for cell in &cells {
            for v in values {
                let mut hyper = cell.hyper.clone();
                set_dotted(&mut hyper, key, v.clone())
                    .map_err(|m| Error::Config(format!("{algo} grid: {m}")))?;
                let sep = if cell.label.is_empty() { "" } else { "," };
                next.push(GridCell {
                    label: format!("{}{sep}{key}={v}", cell.label),
                    hyper,
                });
            }
        }
        cells = next;
    }
    for c in &mut cells {
        check_hyper(algo, &c.hyper)?;
        if c.label.is_empty() {
            c.label = "default".into();
        }
    }
    Ok(cells)
}

fn set_dotted(target: &mut Value, key: &str, v: Value) -> std::result::Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut node = target;
    for p in parts {
        node = node
            .get_mut(p)
            .filter(|n| n.is_object())
            .ok_or_else(|| format!("`{key}`: `{p}` is not a parameter group"))?;
    }
    let obj = node.as_object_mut().ok_or_else(|| format!("`{key}` has no parent object"))?;
    obj.insert(last.to_string(), v);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::new(CohortSource::Synth(SynthConfig::default()), vec![Algorithm::L2Lr])
    }

    #[test]
    fn defaults_from_minimal_json() {
        let c = ExperimentConfig::from_json(r#"{"cohort": {"synth": {"n": 100}}, "algorithms": ["l2-lr"]}"#).unwrap();
        assert_eq!(c.split_ratio, 0.7);
        assert_eq!(c.folds, 5);
        assert_eq!(c.min_df, 10);
        assert_eq!(c.permutations, 1000);
        assert_eq!(c.samplings, vec![Sampling::None]);
        c.validate().unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sampling_names() {
        assert_eq!("1:4".parse::<Sampling>().unwrap(), Sampling::Under(4));
        assert_eq!(Sampling::Under(4).to_string(), "1:4");
        assert!("2:4".parse::<Sampling>().is_err());
        assert!("1:0".parse::<Sampling>().is_err());
    }

    #[test]
    fn algorithm_constraints() {
        let mut c = base();
        c.algorithms = vec![Algorithm::Mlp, Algorithm::Cnn];
        assert!(c.validate().is_err());
        c.algorithms = vec![Algorithm::Cnn];
        c.feature_sets = vec![FeatureSet::Structured, FeatureSet::Notes];
        assert!(c.validate().is_err());
        c.feature_sets = vec![FeatureSet::Notes, FeatureSet::Combined];
        c.validate().unwrap();
        assert!(ExperimentConfig::from_json(r#"{"cohort": {"synth": {}}, "algorithms": ["svm"]}"#).is_err());
    }

    #[test]
    fn grid_expansion() {
        let mut c = base();
        assert_eq!(c.grid_cells(Algorithm::L2Lr).unwrap().len(), 4);
        c.algorithms.push(Algorithm::Mlp);
        c.grids.insert(
            Algorithm::Mlp,
            serde_json::from_str(r#"{"hidden": [10, 20], "train.max_epochs": [1, 2, 3]}"#).unwrap(),
        );
        let cells = c.grid_cells(Algorithm::Mlp).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1].label, "hidden=10,train.max_epochs=2");
        assert_eq!(cells[5].hyper["train"]["max_epochs"], 3);
        assert_eq!(cells[5].hyper["hidden"], 20);
        assert_eq!(c.grid_cells(Algorithm::Rf).unwrap()[0].label, "default");
        c.validate().unwrap();

        c.grids.insert(Algorithm::Mlp, serde_json::from_str(r#"{"hiden": [1]}"#).unwrap());
        assert!(c.validate().is_err());
        c.grids.insert(Algorithm::Mlp, serde_json::from_str(r#"{"train.nope.x": [1]}"#).unwrap());
        assert!(c.validate().is_err());
        c.grids.clear();
        c.grids.insert(Algorithm::Gbt, Grid::new());
        assert!(c.validate().is_err());
    }

    #[test]
    fn manifest_is_accepted_as_config() {
        let c = base();
        let m = serde_json::json!({"manifest_version": 1, "config": c});
        assert_eq!(ExperimentConfig::from_json(&m.to_string()).unwrap(), c);
    }

    #[test]
    fn cell_ids() {
        assert_eq!(
            ExperimentConfig::cell_id(FeatureSet::Combined, Outcome::ThirtyDay, Sampling::Under(4), Algorithm::L2Lr),
            "combined:30day:1:4:l2-lr"
        );
    }
}
