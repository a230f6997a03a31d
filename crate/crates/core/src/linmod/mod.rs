//! Regularized linear classifiers: logistic regression fitted by accelerated
//! proximal gradient, the L2 hinge-loss SVM by dual coordinate descent and
//! the L1 squared-hinge SVM by primal coordinate descent.
//!
//! Every solver minimizes `Σᵢ cᵢ·loss(yᵢ, w·xᵢ + b) + (1/C)·penalty(w)` where
//! `penalty` is `½‖w‖²` (L2) or `‖w‖₁` (L1) and `cᵢ` are instance weights.

mod logistic;
mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;

pub use logistic::{logistic_loss_gradient, logistic_objective, train_logreg, train_logreg_with, SolverOptions};
pub use svm::train_linear_svm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Logistic,
    Hinge,
    SquaredHinge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regularizer {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub loss: Loss,
    pub reg: Regularizer,
    pub c: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize, Deserialize)]
struct LinearModelRepr {
    loss: Loss,
    reg: Regularizer,
    #[serde(rename = "C")]
    c: f64,
    intercept: f64,
    dim: usize,
    weights: Vec<(usize, f64)>,
    diagnostics: Diagnostics,
}

impl Serialize for LinearModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LinearModelRepr {
            loss: self.loss,
            reg: self.reg,
            c: self.c,
            intercept: self.intercept,
            dim: self.weights.len(),
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i, *w))
                .collect(),
            diagnostics: self.diagnostics.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = LinearModelRepr::deserialize(d)?;
        let mut weights = vec![0.0; r.dim];
        for (i, w) in r.weights {
            *weights
                .get_mut(i)
                .ok_or_else(|| D::Error::custom(format!("weight index {i} out of range")))? = w;
        }
        Ok(LinearModel {
            weights,
            intercept: r.intercept,
            loss: r.loss,
            reg: r.reg,
            c: r.c,
            diagnostics: r.diagnostics,
        })
    }
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_dim(&self, x: &CsrMatrix) -> Result<()> {
        if x.n_cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.n_cols(),
            });
        }
        Ok(())
    }

    /// Decision values `w·x + b`.
    pub fn predict_scores(&self, x: &CsrMatrix) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..x.n_rows())
            .map(|r| x.row_dot(r, &self.weights) + self.intercept)
            .collect())
    }

    /// Positive-class probabilities; only defined for the logistic loss.
    pub fn predict_proba(&self, x: &CsrMatrix) -> Result<Vec<f64>> {
        if self.loss != Loss::Logistic {
            return Err(Error::invalid("probabilities need a logistic model"));
        }
        Ok(self.predict_scores(x)?.into_iter().map(sigmoid).collect())
    }

    /// Hard labels: probability ≥ 0.5 for logistic, score ≥ 0 otherwise.
    /// Both reduce to `score ≥ 0`.
    pub fn predict(&self, x: &CsrMatrix) -> Result<Vec<bool>> {
        Ok(self.predict_scores(x)?.into_iter().map(|s| s >= 0.0).collect())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        Self {
            negative: 1.0,
            positive: 1.0,
        }
    }

    pub fn of(&self, label: bool) -> f64 {
        if label {
            self.positive
        } else {
            self.negative
        }
    }

    /// Per-instance weights for `labels`.
    pub fn instance_weights(&self, labels: &[bool]) -> Vec<f64> {
        labels.iter().map(|&y| self.of(y)).collect()
    }
}

/// Balanced weights `N / (2·N_c)`.
pub fn compute_class_weights(labels: &[bool]) -> Result<ClassWeights> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass("labels contain one class only".into()));
    }
    Ok(ClassWeights {
        negative: n / (2.0 * neg),
        positive: n / (2.0 * pos),
    })
}

/// Top `k` coefficients by value, descending; ties keep column order.
pub fn rank_coefficients(model: &LinearModel, names: &[String], k: usize) -> Result<Vec<(String, f64)>> {
    if names.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: names.len(),
        });
    }
    let mut order: Vec<usize> = (0..model.dim()).collect();
    order.sort_by(|&a, &b| model.weights[b].total_cmp(&model.weights[a]));
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| (names[i].clone(), model.weights[i]))
        .collect())
}

/// Shared argument checks: shapes, finiteness, both classes, C and weights.
pub(crate) fn validate_inputs(
    x: &CsrMatrix,
    y: &[bool],
    c: f64,
    instance_weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Config(format!("C must be positive and finite, got {c}")));
    }
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    x.check_finite()?;
    if !y.iter().any(|&v| v) || y.iter().all(|&v| v) {
        return Err(Error::SingleClass("labels contain one class only".into()));
    }
    let w = match instance_weights {
        Some(w) if w.len() != y.len() => {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                found: w.len(),
            })
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; y.len()],
    };
    if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("instance weights must be positive and finite"));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_weights() {
        let w = compute_class_weights(&[true, false]).unwrap();
        assert_eq!((w.negative, w.positive), (1.0, 1.0));
        let mut labels = vec![true; 483];
        labels.extend(vec![false; 3294]);
        let w = compute_class_weights(&labels).unwrap();
        assert!((w.positive - 3.9099).abs() < 1e-4);
        assert!((w.negative - 0.5733).abs() < 1e-4);
        assert!(matches!(compute_class_weights(&[false, false]), Err(Error::SingleClass(_))));
    }

    fn model(weights: Vec<f64>, intercept: f64) -> LinearModel {
        LinearModel {
            weights,
            intercept,
            loss: Loss::Logistic,
            reg: Regularizer::L2,
            c: 1.0,
            diagnostics: Diagnostics {
                objective: 0.0,
                iterations: 0,
                converged: true,
            },
        }
    }

    #[test]
    fn probabilities() {
        let x = CsrMatrix::from_dense_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let zero = model(vec![0.0], 0.0);
        assert_eq!(zero.predict_proba(&x).unwrap(), vec![0.5, 0.5]);
        let m = model(vec![0.4055], 0.0);
        assert!((m.predict_proba(&x).unwrap()[0] - 0.6).abs() < 1e-4);
        let bad = CsrMatrix::from_dense_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(m.predict_scores(&bad).is_err());
        assert!((sigmoid(-800.0)).is_finite() && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn ranking() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = model(vec![0.2, -0.5, 0.9], 0.0);
        assert_eq!(rank_coefficients(&m, &names, 1).unwrap(), vec![("c".to_string(), 0.9)]);
        let z = model(vec![0.0; 3], 0.0);
        let r = rank_coefficients(&z, &names, 3).unwrap();
        assert_eq!(r.iter().map(|p| p.0.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert!(rank_coefficients(&m, &names[..2], 1).is_err());
    }

    #[test]
    fn json_round_trip_is_sparse() {
        let m = model(vec![0.0, 1.5, 0.0, -2.0], 0.25);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"C\":1.0") && s.contains("[1,1.5]"));
        let back: LinearModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
