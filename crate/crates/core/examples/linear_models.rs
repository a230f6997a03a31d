//! The four linear classifiers on a synthetic structured design, with the
//! L1 path showing coefficients shrinking to exact zeros.

use mortality::eval::{auc, classification_report};
use mortality::linmod::{compute_class_weights, train_linear_svm, train_logreg, Regularizer};
use mortality::matrix::CsrMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> mortality::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let true_w = [1.5, -1.0, 0.5, 0.0, 0.0, 0.0];
    let (n, d) = (600, true_w.len());
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z: f64 = x.iter().zip(&true_w).map(|(a, b)| a * b).sum::<f64>() - 1.5;
        let e: f64 = StandardNormal.sample(&mut rng);
        y.push(z + e > 0.0);
        rows.push(x);
    }
    let x = CsrMatrix::from_dense_rows(&rows)?;
    let cw = compute_class_weights(&y)?;
    let w = cw.instance_weights(&y);
    println!("balanced class weights: negative {:.3}, positive {:.3}", cw.negative, cw.positive);

    for (name, reg, svm) in [
        ("l1-lr", Regularizer::L1, false),
        ("l2-lr", Regularizer::L2, false),
        ("l1-svm", Regularizer::L1, true),
        ("l2-svm", Regularizer::L2, true),
    ] {
        let (m, scores, cut) = if svm {
            let m = train_linear_svm(&x, &y, reg, 1.0, Some(&w), 0)?;
            let s = m.predict_scores(&x)?;
            (m, s, 0.0)
        } else {
            let m = train_logreg(&x, &y, reg, 1.0, Some(&w), 0)?;
            let s = m.predict_proba(&x)?;
            (m, s, 0.5)
        };
        let r = classification_report(&scores, &y, cut)?;
        println!(
            "{name:7} auc {:.3} f1 {:.3} iters {:5}  w = {:?}",
            auc(&scores, &y)?,
            r.f1,
            m.diagnostics.iterations,
            m.weights.iter().map(|v| format!("{v:+.2}")).collect::<Vec<_>>()
        );
    }

    println!("\nL1 logistic path:");
    for c in [0.001, 0.003, 0.01, 0.1, 1.0] {
        let m = train_logreg(&x, &y, Regularizer::L1, c, None, 0)?;
        let nz = m.weights.iter().filter(|v| **v != 0.0).count();
        println!("  C = {c:<6} non-zero {nz}/{d}");
    }
    Ok(())
}
