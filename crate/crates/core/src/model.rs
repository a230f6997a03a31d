//! Uniform fitting, scoring and persistence across the classifier families.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmod::{train_linear_svm, train_logreg, LinearModel, Regularizer};
use crate::matrix::CsrMatrix;
use crate::neural::{
    decode_checkpoint, train_cnn_fusion, train_mlp, CnnData, CnnFusionModel, CnnParams, MlpModel, MlpParams, Tensor,
};
use crate::trees::{train_gbt, train_random_forest, BoostParams, ForestParams, GradientBoostedTrees, RandomForest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    L1Lr,
    L2Lr,
    Rf,
    L1Svm,
    L2Svm,
    Gbt,
    Mlp,
    Cnn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::L1Lr,
        Algorithm::L2Lr,
        Algorithm::Rf,
        Algorithm::L1Svm,
        Algorithm::L2Svm,
        Algorithm::Gbt,
        Algorithm::Mlp,
        Algorithm::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::L1Lr => "l1-lr",
            Algorithm::L2Lr => "l2-lr",
            Algorithm::Rf => "rf",
            Algorithm::L1Svm => "l1-svm",
            Algorithm::L2Svm => "l2-svm",
            Algorithm::Gbt => "gbt",
            Algorithm::Mlp => "mlp",
            Algorithm::Cnn => "cnn",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Algorithm::L1Lr | Algorithm::L2Lr | Algorithm::L1Svm | Algorithm::L2Svm)
    }

    /// Cutoff on [`ClassifierModel::scores`] for hard predictions: 0 for
    /// SVM decision values, 0.5 for probabilities.
    pub fn threshold(self) -> f64 {
        match self {
            Algorithm::L1Svm | Algorithm::L2Svm => 0.0,
            _ => 0.5,
        }
    }

    /// Defaults every grid cell starts from, as a JSON object.
    pub fn default_hyper(self) -> serde_json::Value {
        let v = match self {
            Algorithm::L1Lr | Algorithm::L2Lr | Algorithm::L1Svm | Algorithm::L2Svm => Ok(serde_json::json!({ "C": 1.0 })),
            Algorithm::Rf => serde_json::to_value(ForestParams::default()),
            Algorithm::Gbt => serde_json::to_value(BoostParams::default()),
            Algorithm::Mlp => serde_json::to_value(MlpParams::default()),
            Algorithm::Cnn => serde_json::to_value(CnnParams::default()),
        };
        v.expect("defaults serialize")
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> Self {
        a.name().to_string()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearHyper {
    #[serde(rename = "C")]
    c: f64,
}

/// Parse a hyperparameter object for `algo`, rejecting unknown keys.
pub fn check_hyper(algo: Algorithm, hyper: &serde_json::Value) -> Result<()> {
    let bad = |e: serde_json::Error| Error::Config(format!("{algo} hyperparameters: {e}"));
    match algo {
        a if a.is_linear() => {
            let h: LinearHyper = serde_json::from_value(hyper.clone()).map_err(bad)?;
            if !(h.c > 0.0) {
                return Err(Error::Config(format!("{algo}: C must be positive")));
            }
        }
        Algorithm::Rf => {
            let _: ForestParams = serde_json::from_value(hyper.clone()).map_err(bad)?;
        }
        Algorithm::Gbt => serde_json::from_value::<BoostParams>(hyper.clone()).map_err(bad)?.validate()?,
        Algorithm::Mlp => {
            let _: MlpParams = serde_json::from_value(hyper.clone()).map_err(bad)?;
        }
        Algorithm::Cnn => serde_json::from_value::<CnnParams>(hyper.clone()).map_err(bad)?.validate()?,
        _ => unreachable!(),
    }
    Ok(())
}

/// Inputs a model may consume: the fused sparse matrix for every family and
/// token sequences with structured rows for the CNN.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub matrix: &'a CsrMatrix,
    pub sequences: Option<&'a CnnData>,
    pub vocab_size: usize,
    pub embeddings: Option<&'a Tensor>,
}

impl<'a> ModelInput<'a> {
    pub fn matrix(matrix: &'a CsrMatrix) -> Self {
        Self {
            matrix,
            sequences: None,
            vocab_size: 0,
            embeddings: None,
        }
    }

    fn sequences(&self) -> Result<&'a CnnData> {
        self.sequences
            .ok_or_else(|| Error::invalid("the CNN needs token sequences"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    Linear(LinearModel),
    Forest(RandomForest),
    Boosted(GradientBoostedTrees),
    Mlp(MlpModel),
    Cnn(CnnFusionModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", content = "model", rename_all = "lowercase")]
enum JsonModel {
    Linear(LinearModel),
    Forest(RandomForest),
    Boosted(GradientBoostedTrees),
}

pub fn fit_model(
    algo: Algorithm,
    hyper: &serde_json::Value,
    input: &ModelInput,
    y: &[bool],
    instance_weights: Option<&[f64]>,
    seed: u64,
) -> Result<ClassifierModel> {
    let bad = |e: serde_json::Error| Error::Config(format!("{algo} hyperparameters: {e}"));
    let x = input.matrix;
    Ok(match algo {
        Algorithm::L1Lr | Algorithm::L2Lr | Algorithm::L1Svm | Algorithm::L2Svm => {
            let h: LinearHyper = serde_json::from_value(hyper.clone()).map_err(bad)?;
            let reg = if matches!(algo, Algorithm::L1Lr | Algorithm::L1Svm) {
                Regularizer::L1
            } else {
                Regularizer::L2
            };
            ClassifierModel::Linear(if matches!(algo, Algorithm::L1Lr | Algorithm::L2Lr) {
                train_logreg(x, y, reg, h.c, instance_weights, seed)?
            } else {
                train_linear_svm(x, y, reg, h.c, instance_weights, seed)?
            })
        }
        Algorithm::Rf => {
            let p: ForestParams = serde_json::from_value(hyper.clone()).map_err(bad)?;
            ClassifierModel::Forest(train_random_forest(x, y, &p, instance_weights, seed)?)
        }
        Algorithm::Gbt => {
            let p: BoostParams = serde_json::from_value(hyper.clone()).map_err(bad)?;
            ClassifierModel::Boosted(train_gbt(x, y, &p, instance_weights, seed)?)
        }
        Algorithm::Mlp => {
            let p: MlpParams = serde_json::from_value(hyper.clone()).map_err(bad)?;
            ClassifierModel::Mlp(train_mlp(x, y, &p, instance_weights, seed)?)
        }
        Algorithm::Cnn => {
            let p: CnnParams = serde_json::from_value(hyper.clone()).map_err(bad)?;
            let data = input.sequences()?;
            ClassifierModel::Cnn(train_cnn_fusion(
                data,
                y,
                input.vocab_size,
                &p,
                instance_weights,
                input.embeddings,
                seed,
            )?)
        }
    })
}

impl ClassifierModel {
    pub fn family(&self) -> &'static str {
        match self {
            ClassifierModel::Linear(_) => "linear",
            ClassifierModel::Forest(_) => "forest",
            ClassifierModel::Boosted(_) => "boosted",
            ClassifierModel::Mlp(_) => "mlp",
            ClassifierModel::Cnn(_) => "cnn",
        }
    }

    /// Ranking scores: decision values for SVMs, positive-class
    /// probabilities otherwise.
    pub fn scores(&self, input: &ModelInput) -> Result<Vec<f64>> {
        match self {
            ClassifierModel::Linear(m) => match m.loss {
                crate::linmod::Loss::Logistic => m.predict_proba(input.matrix),
                _ => m.predict_scores(input.matrix),
            },
            ClassifierModel::Forest(m) => m.predict_proba(input.matrix),
            ClassifierModel::Boosted(m) => m.predict_proba(input.matrix),
            ClassifierModel::Mlp(m) => m.predict_proba(input.matrix),
            ClassifierModel::Cnn(m) => m.predict_proba(input.sequences()?),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = |m: JsonModel| -> Result<Vec<u8>> {
            let mut v = serde_json::to_vec(&m)?;
            v.push(b'\n');
            Ok(v)
        };
        match self {
            ClassifierModel::Linear(m) => json(JsonModel::Linear(m.clone())),
            ClassifierModel::Forest(m) => json(JsonModel::Forest(m.clone())),
            ClassifierModel::Boosted(m) => json(JsonModel::Boosted(m.clone())),
            ClassifierModel::Mlp(m) => m.to_bytes(),
            ClassifierModel::Cnn(m) => m.to_bytes(),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if let Ok((h, _)) = decode_checkpoint(bytes) {
            return match h.kind.as_str() {
                "mlp" => Ok(ClassifierModel::Mlp(MlpModel::from_bytes(bytes)?)),
                "cnn" => Ok(ClassifierModel::Cnn(CnnFusionModel::from_bytes(bytes)?)),
                k => Err(Error::invalid(format!("unknown network kind `{k}`"))),
            };
        }
        Ok(match serde_json::from_slice::<JsonModel>(bytes)? {
            JsonModel::Linear(m) => ClassifierModel::Linear(m),
            JsonModel::Forest(m) => ClassifierModel::Forest(m),
            JsonModel::Boosted(m) => ClassifierModel::Boosted(m),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
