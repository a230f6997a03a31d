use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::auc;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_PERMUTATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub observed: f64,
    pub n_perm: usize,
    pub count_ge: usize,
    pub p_value: f64,
    pub seed: u64,
}

impl PermTestResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Paired permutation test for `|AUC(a) − AUC(b)|`. Each permutation swaps
/// the two scores of every instance independently with probability ½.
pub fn perm_test_auc(a: &[f64], b: &[f64], labels: &[bool], n_perm: usize, seed: u64) -> Result<PermTestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if n_perm == 0 {
        return Err(Error::Config("need at least one permutation".into()));
    }
    let observed = (auc(a, labels)? - auc(b, labels)?).abs();
    // Statistics equal up to rounding count as ties.
    let tol = 1e-12;
    let count_ge = (0..n_perm)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(rng::derive_seed(seed, p as u64), 0x41);
            let mut pa = a.to_vec();
            let mut pb = b.to_vec();
            for i in 0..a.len() {
                if r.random::<bool>() {
                    std::mem::swap(&mut pa[i], &mut pb[i]);
                }
            }
            let stat = (auc(&pa, labels)? - auc(&pb, labels)?).abs();
            Ok(usize::from(stat >= observed - tol))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(PermTestResult {
        observed,
        n_perm,
        count_ge,
        p_value: (1 + count_ge) as f64 / (n_perm + 1) as f64,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_scores_give_one() {
        let s = [0.1, 0.5, 0.3, 0.9];
        let l = [false, true, false, true];
        let r = perm_test_auc(&s, &s, &l, 200, 1).unwrap();
        assert_eq!(r.observed, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r, perm_test_auc(&s, &s, &l, 200, 1).unwrap());
        assert!(perm_test_auc(&s, &s[..3], &l, 10, 1).is_err());
    }
}
