use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Builder, Gini, Node};
use super::{check_dim, check_training};
use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features per node; `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            max_features: None,
            min_samples_split: 2,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub seed: u64,
    pub n_features: usize,
    pub trees: Vec<Node>,
}

impl RandomForest {
    /// Mean of the per-tree leaf class-1 fractions.
    pub fn predict_proba(&self, x: &CsrMatrix) -> Result<Vec<f64>> {
        check_dim(self.n_features, x)?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|r| self.trees.iter().map(|t| t.predict_row(x, r)).sum::<f64>() / self.trees.len() as f64)
            .collect())
    }
}

fn grow_tree(
    x: &CsrMatrix,
    csc: &crate::matrix::CscMatrix,
    y: &[bool],
    sampler: Option<&WeightedIndex<f64>>,
    params: &ForestParams,
    seed: u64,
) -> Node {
    let n = x.n_rows();
    let d = x.n_cols();
    let mut rng = rng::rng_from(seed);
    let mut counts = vec![0.0; n];
    match sampler {
        Some(s) => (0..n).for_each(|_| counts[s.sample(&mut rng)] += 1.0),
        None => counts.iter_mut().for_each(|c| *c = 1.0),
    }
    let stats = (0..n).map(|r| [counts[r], if y[r] { counts[r] } else { 0.0 }]).collect();
    let rows: Vec<usize> = (0..n).filter(|&r| counts[r] > 0.0).collect();
    let k = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let mut builder = Builder::new(x, csc, stats, Gini, params.max_depth);
    builder.min_samples_split = params.min_samples_split;
    builder.build(rows, &mut || {
        if d == 0 {
            Vec::new()
        } else {
            let mut f = sample(&mut rng, d, k).into_vec();
            f.sort_unstable();
            f
        }
    })
}

/// Fit a random forest. Instance weights shape the bootstrap distribution;
/// without bootstrapping they are ignored. Trees are grown in parallel with
/// seeds derived from the tree index, so the result does not depend on
/// scheduling.
pub fn train_random_forest(
    x: &CsrMatrix,
    y: &[bool],
    params: &ForestParams,
    instance_weights: Option<&[f64]>,
    seed: u64,
) -> Result<RandomForest> {
    check_training(x, y, instance_weights, true)?;
    if params.n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    let sampler = if params.bootstrap {
        let w = instance_weights.map_or_else(|| vec![1.0; y.len()], <[f64]>::to_vec);
        Some(WeightedIndex::new(&w).map_err(|e| Error::invalid(format!("instance weights: {e}")))?)
    } else {
        None
    };
    let csc = x.to_csc();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(x, &csc, y, sampler.as_ref(), params, rng::derive_seed(seed, t as u64)))
        .collect();
    Ok(RandomForest {
        params: params.clone(),
        seed,
        n_features: x.n_cols(),
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn separable_line_is_learned_by_every_tree() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0]).collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] > 0.5).collect();
        let x = CsrMatrix::from_dense_rows(&rows).unwrap();
        let params = ForestParams {
            n_trees: 10,
            bootstrap: false,
            ..Default::default()
        };
        let f = train_random_forest(&x, &y, &params, None, 1).unwrap();
        for t in &f.trees {
            for (r, &label) in y.iter().enumerate() {
                assert_eq!(t.predict_row(&x, r) >= 0.5, label);
            }
        }
    }

    #[test]
    fn xor_and_determinism() {
        let mut r = rng::rng_from(4);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
        let y: Vec<bool> = rows.iter().map(|p| (p[0] > 0.5) != (p[1] > 0.5)).collect();
        let x = CsrMatrix::from_dense_rows(&rows).unwrap();
        let params = ForestParams {
            n_trees: 50,
            max_depth: 4,
            ..Default::default()
        };
        let f = train_random_forest(&x, &y, &params, None, 8).unwrap();
        let p = f.predict_proba(&x).unwrap();
        let acc = p.iter().zip(&y).filter(|(p, y)| (**p >= 0.5) == **y).count() as f64 / 200.0;
        assert!(acc >= 0.95, "{acc}");
        assert_eq!(f, train_random_forest(&x, &y, &params, None, 8).unwrap());
    }

    #[test]
    fn single_leaf_fraction() {
        let x = CsrMatrix::from_dense_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let f = train_random_forest(&x, &[true, true, false, true], &params, None, 0).unwrap();
        assert_eq!(f.predict_proba(&x).unwrap(), vec![0.75; 4]);
    }
}
