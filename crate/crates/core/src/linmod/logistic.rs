use super::{sigmoid, validate_inputs, Diagnostics, LinearModel, Loss, Regularizer};
use crate::error::Result;
use crate::matrix::CsrMatrix;

/// Stopping rules for the proximal-gradient solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative objective change.
    pub tol: f64,
    /// Infinity norm of the gradient mapping, per unit instance weight.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            grad_tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic objective divided by the total instance weight, which leaves the
/// minimizer unchanged and makes the step sizes scale free.
struct Problem<'a> {
    x: &'a CsrMatrix,
    sign: Vec<f64>,
    weight: Vec<f64>,
    lambda: f64,
    reg: Regularizer,
}

impl Problem<'_> {
    fn scores(&self, w: &[f64], b: f64) -> Vec<f64> {
        (0..self.x.n_rows()).map(|r| self.x.row_dot(r, w) + b).collect()
    }

    fn smooth(&self, s: &[f64]) -> f64 {
        s.iter()
            .zip(&self.sign)
            .zip(&self.weight)
            .map(|((s, y), c)| c * softplus(-y * s))
            .sum()
    }

    fn gradient(&self, s: &[f64]) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; self.x.n_cols()];
        let mut gb = 0.0;
        for (r, &sr) in s.iter().enumerate() {
            let y = self.sign[r];
            let g = -self.weight[r] * y * sigmoid(-y * sr);
            gb += g;
            for (j, v) in self.x.row_iter(r) {
                gw[j] += g * v;
            }
        }
        (gw, gb)
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        self.lambda
            * match self.reg {
                Regularizer::L1 => w.iter().map(|v| v.abs()).sum::<f64>(),
                Regularizer::L2 => 0.5 * w.iter().map(|v| v * v).sum::<f64>(),
            }
    }

    fn prox(&self, v: f64, step: f64) -> f64 {
        let t = step * self.lambda;
        match self.reg {
            Regularizer::L1 => v.signum() * (v.abs() - t).max(0.0),
            Regularizer::L2 => v / (1.0 + t),
        }
    }
}

/// Fit logistic regression. The intercept is never penalized; the fit is
/// deterministic, so `_seed` only keeps the signature uniform.
pub fn train_logreg(
    x: &CsrMatrix,
    y: &[bool],
    reg: Regularizer,
    c: f64,
    instance_weights: Option<&[f64]>,
    _seed: u64,
) -> Result<LinearModel> {
    train_logreg_with(x, y, reg, c, instance_weights, &SolverOptions::default())
}

pub fn train_logreg_with(
    x: &CsrMatrix,
    y: &[bool],
    reg: Regularizer,
    c: f64,
    instance_weights: Option<&[f64]>,
    options: &SolverOptions,
) -> Result<LinearModel> {
    let weights = validate_inputs(x, y, c, instance_weights)?;
    let total: f64 = weights.iter().sum();
    let p = Problem {
        x,
        sign: y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect(),
        weight: weights.iter().map(|w| w / total).collect(),
        lambda: 1.0 / (c * total),
        reg,
    };
    let d = x.n_cols();

    let (mut xw, mut xb) = (vec![0.0; d], 0.0);
    let mut fx = p.smooth(&p.scores(&xw, xb)) + p.penalty(&xw);
    let (mut yw, mut yb) = (xw.clone(), xb);
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut restarted = true;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let sy = p.scores(&yw, yb);
        let fy = p.smooth(&sy);
        let (gw, gb) = p.gradient(&sy);
        let (zw, zb, fz_smooth) = loop {
            let step = 1.0 / lip;
            let zw: Vec<f64> = yw.iter().zip(&gw).map(|(v, g)| p.prox(v - step * g, step)).collect();
            let zb = yb - step * gb;
            let fz = p.smooth(&p.scores(&zw, zb));
            let mut lin = gb * (zb - yb);
            let mut sq = (zb - yb).powi(2);
            for j in 0..d {
                let dj = zw[j] - yw[j];
                lin += gw[j] * dj;
                sq += dj * dj;
            }
            if fz <= fy + lin + 0.5 * lip * sq + 1e-15 * fy.abs() || lip > 1e15 {
                break (zw, zb, fz);
            }
            lip *= 2.0;
        };
        let fz = fz_smooth + p.penalty(&zw);
        if fz > fx {
            if restarted {
                // A plain prox step from the iterate cannot increase the
                // objective beyond rounding; nothing left to gain.
                converged = true;
                break;
            }
            yw.clone_from(&xw);
            yb = xb;
            t = 1.0;
            restarted = true;
            continue;
        }
        let gmap = zw
            .iter()
            .zip(&yw)
            .map(|(z, y)| (z - y).abs())
            .fold((zb - yb).abs(), f64::max)
            * lip;
        let rel = (fx - fz) / fz.abs().max(f64::MIN_POSITIVE);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        yw = zw.iter().zip(&xw).map(|(z, x)| z + momentum * (z - x)).collect();
        yb = zb + momentum * (zb - xb);
        assert!(fz <= fx, "objective increased");
        xw = zw;
        xb = zb;
        fx = fz;
        t = t_next;
        restarted = false;
        if rel < options.tol && gmap < options.grad_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("logistic regression stopped after {iterations} iterations without converging");
    }
    Ok(LinearModel {
        weights: xw,
        intercept: xb,
        loss: Loss::Logistic,
        reg,
        c,
        diagnostics: Diagnostics {
            objective: fx * total,
            iterations,
            converged,
        },
    })
}

/// Unnormalized objective `Σ cᵢ·logloss + (1/C)·penalty` of a model.
pub fn logistic_objective(model: &LinearModel, x: &CsrMatrix, y: &[bool], instance_weights: Option<&[f64]>) -> f64 {
    let n = y.len();
    let ones = vec![1.0; n];
    let c = instance_weights.unwrap_or(&ones);
    let mut total = 0.0;
    for r in 0..n {
        let s = x.row_dot(r, &model.weights) + model.intercept;
        let sign = if y[r] { 1.0 } else { -1.0 };
        total += c[r] * softplus(-sign * s);
    }
    let pen = match model.reg {
        Regularizer::L1 => model.weights.iter().map(|v| v.abs()).sum::<f64>(),
        Regularizer::L2 => 0.5 * model.weights.iter().map(|v| v * v).sum::<f64>(),
    };
    total + pen / model.c
}

/// Gradient of the unpenalized weighted log-loss with respect to the weights.
pub fn logistic_loss_gradient(model: &LinearModel, x: &CsrMatrix, y: &[bool], instance_weights: Option<&[f64]>) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut gw = vec![0.0; x.n_cols()];
    let mut gb = 0.0;
    for r in 0..n {
        let s = x.row_dot(r, &model.weights) + model.intercept;
        let c = instance_weights.map_or(1.0, |w| w[r]);
        let g = c * (sigmoid(s) - if y[r] { 1.0 } else { 0.0 });
        gb += g;
        for (j, v) in x.row_iter(r) {
            gw[j] += g * v;
        }
    }
    (gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmod::compute_class_weights;
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(seed: u64, n: usize, d: usize) -> (CsrMatrix, Vec<bool>) {
        let mut r = rng::rng_from(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect();
        let y = rows.iter().map(|row| row[0] + 0.5 * r.random::<f64>() > 0.2).collect();
        (CsrMatrix::from_dense_rows(&rows).unwrap(), y)
    }

    #[test]
    fn intercept_only_limit() {
        let x = CsrMatrix::from_dense_rows(&[vec![1.0], vec![2.0], vec![-1.0], vec![0.5]]).unwrap();
        let y = [true, false, false, false];
        let m = train_logreg(&x, &y, Regularizer::L2, 1e-8, None, 0).unwrap();
        assert!(m.weights[0].abs() < 1e-6);
        assert!((m.intercept - (1.0f64 / 3.0).ln()).abs() < 1e-3, "{}", m.intercept);

        let cw = compute_class_weights(&y).unwrap().instance_weights(&y);
        let m = train_logreg(&x, &y, Regularizer::L2, 1e-8, Some(&cw), 0).unwrap();
        assert!(m.intercept.abs() < 1e-3);
    }

    #[test]
    fn weight_scaling_matches_halved_c() {
        let (x, y) = random_data(3, 40, 4);
        let w1: Vec<f64> = (0..40).map(|i| 1.0 + (i % 3) as f64).collect();
        let w2: Vec<f64> = w1.iter().map(|v| v * 2.0).collect();
        for reg in [Regularizer::L1, Regularizer::L2] {
            let a = train_logreg(&x, &y, reg, 0.5, Some(&w1), 0).unwrap();
            let b = train_logreg(&x, &y, reg, 0.25, Some(&w2), 0).unwrap();
            for (u, v) in a.weights.iter().zip(&b.weights) {
                assert!((u - v).abs() < 1e-6);
            }
            assert!((a.intercept - b.intercept).abs() < 1e-6);
        }
    }

    #[test]
    fn l1_optimality_and_determinism() {
        let (x, y) = random_data(7, 60, 8);
        let m = train_logreg(&x, &y, Regularizer::L1, 0.05, None, 0).unwrap();
        assert!(m.diagnostics.converged);
        let (g, gb) = logistic_loss_gradient(&m, &x, &y, None);
        assert!(gb.abs() < 1e-4);
        for (w, g) in m.weights.iter().zip(&g) {
            if *w == 0.0 {
                assert!(g.abs() <= 1.0 / m.c + 1e-4);
            } else {
                assert!((g + w.signum() / m.c).abs() < 1e-4);
            }
        }
        let again = train_logreg(&x, &y, Regularizer::L1, 0.05, None, 0).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn rejects_bad_input() {
        let x = CsrMatrix::from_dense_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(train_logreg(&x, &[true, true], Regularizer::L2, 1.0, None, 0).is_err());
        assert!(train_logreg(&x, &[true, false], Regularizer::L2, 0.0, None, 0).is_err());
        assert!(train_logreg(&x, &[true], Regularizer::L2, 1.0, None, 0).is_err());
    }
}
