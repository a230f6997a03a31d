//! Random forest and gradient-boosted trees on an interaction the linear
//! models cannot express.

use mortality::eval::auc;
use mortality::matrix::CsrMatrix;
use mortality::trees::{leaf_weight, train_gbt, train_random_forest, BoostParams, ForestParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mortality::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gen = |rng: &mut ChaCha8Rng, n: usize| {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<bool> = rows.iter().map(|r| (r[0] * r[1] > 0.0) ^ (rng.random::<f64>() < 0.1)).collect();
        (CsrMatrix::from_dense_rows(&rows).unwrap(), y)
    };
    let (x, y) = gen(&mut rng, 800);
    let (xt, yt) = gen(&mut rng, 400);

    let forest = train_random_forest(&x, &y, &ForestParams { n_trees: 50, ..ForestParams::default() }, None, 1)?;
    println!("random forest   test auc {:.3}", auc(&forest.predict_proba(&xt)?, &yt)?);

    let params = BoostParams { rounds: 60, max_depth: 3, ..BoostParams::default() };
    let gbt = train_gbt(&x, &y, &params, None, 1)?;
    println!("boosted trees   test auc {:.3}", auc(&gbt.predict_proba(&xt)?, &yt)?);
    let l = &gbt.train_loss;
    println!("train log-loss  {:.4} -> {:.4} over {} rounds", l[0], l[l.len() - 1], l.len() - 1);
    assert!(l.windows(2).all(|w| w[1] <= w[0]));

    // Second-order leaf value for G = 4, H = 10, lambda = 1.
    println!("leaf weight     {:.4}", leaf_weight(4.0, 10.0, 1.0));
    Ok(())
}
