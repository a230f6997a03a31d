use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Builder, Newton, Node};
use super::{check_dim, check_training};
use crate::error::{Error, Result};
use crate::linmod::sigmoid;
use crate::matrix::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Initial probability; the base margin is its log-odds.
    pub base_score: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            lambda: 1.0,
            min_child_weight: 1.0,
            base_score: 0.5,
        }
    }
}

impl BoostParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning rate must lie in (0, 1]".into()));
        }
        if !(self.lambda >= 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(Error::Config("lambda and min_child_weight must be non-negative".into()));
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return Err(Error::Config("base score must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTree {
    pub tree: Node,
    /// Multiplier on the leaf weights: the learning rate, halved whenever
    /// the full step would raise the training loss.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostedTrees {
    pub params: BoostParams,
    pub base_margin: f64,
    pub n_features: usize,
    pub trees: Vec<BoostedTree>,
    /// Weighted mean training log-loss before the first round and after each.
    pub train_loss: Vec<f64>,
}

impl GradientBoostedTrees {
    pub fn predict_margin(&self, x: &CsrMatrix) -> Result<Vec<f64>> {
        check_dim(self.n_features, x)?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|r| self.base_margin + self.trees.iter().map(|t| t.scale * t.tree.predict_row(x, r)).sum::<f64>())
            .collect())
    }

    pub fn predict_proba(&self, x: &CsrMatrix) -> Result<Vec<f64>> {
        Ok(self.predict_margin(x)?.into_iter().map(sigmoid).collect())
    }
}

fn mean_log_loss(margin: &[f64], y: &[bool], w: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut weight = 0.0;
    for ((m, &y), c) in margin.iter().zip(y).zip(w) {
        let z = if y { -m } else { *m };
        total += c * (z.max(0.0) + (-z.abs()).exp().ln_1p());
        weight += c;
    }
    total / weight
}

const MAX_HALVINGS: usize = 30;

/// Fit second-order gradient-boosted trees on the logistic loss. Instance
/// weights multiply each row's gradient and hessian. The fit is
/// deterministic; `_seed` keeps the signature uniform.
pub fn train_gbt(
    x: &CsrMatrix,
    y: &[bool],
    params: &BoostParams,
    instance_weights: Option<&[f64]>,
    _seed: u64,
) -> Result<GradientBoostedTrees> {
    check_training(x, y, instance_weights, false)?;
    params.validate()?;
    let n = x.n_rows();
    let w = instance_weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    let base_margin = (params.base_score / (1.0 - params.base_score)).ln();
    let mut margin = vec![base_margin; n];
    let mut loss = mean_log_loss(&margin, y, &w);
    let mut train_loss = vec![loss];
    let csc = x.to_csc();
    let all: Vec<usize> = (0..x.n_cols()).collect();
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        let stats = (0..n)
            .map(|r| {
                let p = sigmoid(margin[r]);
                let yv = if y[r] { 1.0 } else { 0.0 };
                [w[r] * (p - yv), w[r] * p * (1.0 - p)]
            })
            .collect();
        let criterion = Newton {
            lambda: params.lambda,
            min_child_weight: params.min_child_weight,
        };
        let mut builder = Builder::new(x, &csc, stats, criterion, params.max_depth);
        let tree = builder.build((0..n).collect(), &mut || all.clone());
        let leaf: Vec<f64> = (0..n).map(|r| tree.predict_row(x, r)).collect();

        let mut scale = params.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = margin.iter().zip(&leaf).map(|(m, l)| m + scale * l).collect();
            let trial_loss = mean_log_loss(&trial, y, &w);
            if trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            scale *= 0.5;
        }
        let (new_margin, new_loss) = accepted.unwrap_or_else(|| {
            scale = 0.0;
            (margin.clone(), loss)
        });
        assert!(new_loss <= loss, "boosting loss increased");
        margin = new_margin;
        loss = new_loss;
        train_loss.push(loss);
        trees.push(BoostedTree { tree, scale });
    }
    Ok(GradientBoostedTrees {
        params: params.clone(),
        base_margin,
        n_features: x.n_cols(),
        trees,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_leaf_weights() {
        let x = CsrMatrix::from_dense_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let params = BoostParams {
            rounds: 1,
            max_depth: 0,
            ..Default::default()
        };
        let m = train_gbt(&x, &[true, false], &params, None, 0).unwrap();
        assert_eq!(m.trees[0].tree, Node::Leaf { value: 0.0 });
        // Labels {1, 1} at p = 0.5: G = -1, H = 0.5.
        let w = crate::trees::leaf_weight(-1.0, 0.5, params.lambda);
        assert!((w - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_rounds_predicts_base() {
        let x = CsrMatrix::from_dense_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let params = BoostParams {
            rounds: 0,
            ..Default::default()
        };
        let m = train_gbt(&x, &[true, false], &params, None, 0).unwrap();
        assert_eq!(m.predict_proba(&x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn loss_never_increases() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i % 5) as f64]).collect();
        let y: Vec<bool> = (0..60).map(|i| (i % 7 + i % 3) % 2 == 0).collect();
        let x = CsrMatrix::from_dense_rows(&rows).unwrap();
        let m = train_gbt(&x, &y, &BoostParams::default(), None, 0).unwrap();
        assert_eq!(m.trees.len(), 100);
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(m.train_loss.last().unwrap() < &m.train_loss[0]);
    }
}
