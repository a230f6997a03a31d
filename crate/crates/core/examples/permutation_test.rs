//! Paired AUC permutation test: a model that sees the true risk against
//! one that sees noise, and a model against itself.

use mortality::eval::{auc, perm_test_auc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> mortality::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1000;
    let risk: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let labels: Vec<bool> = risk.iter().map(|&r| rng.random::<f64>() < 1.0 / (1.0 + (-(r - 2.0)).exp())).collect();
    let informed: Vec<f64> = risk.iter().map(|&r| { let e: f64 = StandardNormal.sample(&mut rng); r + 0.5 * e }).collect();
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

    println!("auc informed {:.3}  noise {:.3}", auc(&informed, &labels)?, auc(&noise, &labels)?);
    let r = perm_test_auc(&informed, &noise, &labels, 1000, 1)?;
    println!("informed vs noise: |dAUC| {:.3}, p = {:.4}, significant {}", r.observed, r.p_value, r.significant(0.05));
    let r = perm_test_auc(&informed, &informed, &labels, 1000, 1)?;
    println!("model vs itself:   |dAUC| {:.3}, p = {:.4}", r.observed, r.p_value);
    Ok(())
}
