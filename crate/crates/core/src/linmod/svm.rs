use rand::seq::SliceRandom;

use super::{validate_inputs, Diagnostics, LinearModel, Loss, Regularizer};
use crate::error::Result;
use crate::matrix::{CscMatrix, CsrMatrix};
use crate::rng;

const DUAL_TOL: f64 = 1e-6;
const MAX_EPOCHS: usize = 1000;
const PRIMAL_TOL: f64 = 1e-6;
const MAX_LINE_SEARCH: usize = 30;
const SIGMA: f64 = 0.01;

/// Fit a linear SVM. L2 uses the hinge loss and dual coordinate descent,
/// where the bias is an extra constant feature and therefore shares the L2
/// penalty. L1 uses the squared hinge loss and primal coordinate descent
/// with an unpenalized intercept.
pub fn train_linear_svm(
    x: &CsrMatrix,
    y: &[bool],
    reg: Regularizer,
    c: f64,
    instance_weights: Option<&[f64]>,
    seed: u64,
) -> Result<LinearModel> {
    let weights = validate_inputs(x, y, c, instance_weights)?;
    let sign: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
    Ok(match reg {
        Regularizer::L2 => dual_cd(x, &sign, &weights, c, seed),
        Regularizer::L1 => primal_cd(&x.to_csc(), &sign, &weights, c),
    })
}

fn dual_cd(x: &CsrMatrix, sign: &[f64], cw: &[f64], c: f64, seed: u64) -> LinearModel {
    let n = x.n_rows();
    let mut w = vec![0.0; x.n_cols()];
    let mut wb = 0.0;
    let mut alpha = vec![0.0; n];
    let upper: Vec<f64> = cw.iter().map(|v| c * v).collect();
    let qii: Vec<f64> = (0..n)
        .map(|r| x.row_values(r).iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, 0x5F);
    let mut converged = false;
    let mut epochs = 0;
    while epochs < MAX_EPOCHS {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut max_change: f64 = 0.0;
        for &i in &order {
            let g = sign[i] * (x.row_dot(i, &w) + wb) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            if pg == 0.0 {
                continue;
            }
            let new = (alpha[i] - g / qii[i]).clamp(0.0, upper[i]);
            let delta = new - alpha[i];
            alpha[i] = new;
            let step = delta * sign[i];
            for (j, v) in x.row_iter(i) {
                w[j] += step * v;
            }
            wb += step;
            max_change = max_change.max(delta.abs());
        }
        if max_change < DUAL_TOL {
            converged = true;
            break;
        }
    }
    let hinge: f64 = (0..n)
        .map(|r| cw[r] * (1.0 - sign[r] * (x.row_dot(r, &w) + wb)).max(0.0))
        .sum();
    let reg_term = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + wb * wb) / c;
    if !converged {
        log::warn!("dual coordinate descent hit {MAX_EPOCHS} epochs");
    }
    LinearModel {
        weights: w,
        intercept: wb,
        loss: Loss::Hinge,
        reg: Regularizer::L2,
        c,
        diagnostics: Diagnostics {
            objective: hinge + reg_term,
            iterations: epochs,
            converged,
        },
    }
}

/// One Newton step with backtracking on a single coordinate. `rows` yields
/// `(row, x_ij)`; `margin[i] = 1 − yᵢ·sᵢ` is updated in place. Returns the
/// applied change.
fn coordinate_step<I>(rows: I, w_j: f64, lambda: f64, sign: &[f64], cw: &[f64], margin: &mut [f64]) -> f64
where
    I: Iterator<Item = (usize, f64)> + Clone,
{
    let (mut g, mut h) = (0.0, 0.0);
    for (i, v) in rows.clone() {
        if margin[i] > 0.0 {
            g -= 2.0 * cw[i] * sign[i] * v * margin[i];
            h += 2.0 * cw[i] * v * v;
        }
    }
    let h = h.max(1e-12);
    let d = if g + lambda <= h * w_j {
        -(g + lambda) / h
    } else if g - lambda >= h * w_j {
        -(g - lambda) / h
    } else {
        -w_j
    };
    if d == 0.0 {
        return 0.0;
    }
    let delta = g * d + lambda * ((w_j + d).abs() - w_j.abs());
    let mut beta = 1.0;
    for _ in 0..MAX_LINE_SEARCH {
        let step = beta * d;
        let mut change = lambda * ((w_j + step).abs() - w_j.abs());
        for (i, v) in rows.clone() {
            let old = margin[i].max(0.0);
            let new = (margin[i] - sign[i] * v * step).max(0.0);
            change += cw[i] * (new * new - old * old);
        }
        if change <= SIGMA * beta * delta {
            for (i, v) in rows {
                margin[i] -= sign[i] * v * step;
            }
            return step;
        }
        beta *= 0.5;
    }
    0.0
}

fn violation(g: f64, w_j: f64, lambda: f64) -> f64 {
    if w_j > 0.0 {
        (g + lambda).abs()
    } else if w_j < 0.0 {
        (g - lambda).abs()
    } else {
        (g.abs() - lambda).max(0.0)
    }
}

fn primal_cd(x: &CscMatrix, sign: &[f64], cw: &[f64], c: f64) -> LinearModel {
    let n = x.n_rows();
    let d = x.n_cols();
    let lambda = 1.0 / c;
    let total: f64 = cw.iter().sum();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut margin = vec![1.0; n];
    let mut converged = false;
    let mut epochs = 0;
    while epochs < MAX_EPOCHS {
        epochs += 1;
        for j in 0..d {
            w[j] += coordinate_step(x.col_iter(j), w[j], lambda, sign, cw, &mut margin);
        }
        b += coordinate_step((0..n).map(|i| (i, 1.0)), b, 0.0, sign, cw, &mut margin);

        let mut worst: f64 = 0.0;
        for j in 0..=d {
            let mut g = 0.0;
            let mut visit = |i: usize, v: f64| {
                if margin[i] > 0.0 {
                    g -= 2.0 * cw[i] * sign[i] * v * margin[i];
                }
            };
            if j < d {
                x.col_iter(j).for_each(|(i, v)| visit(i, v));
                worst = worst.max(violation(g, w[j], lambda));
            } else {
                (0..n).for_each(|i| visit(i, 1.0));
                worst = worst.max(g.abs());
            }
        }
        if worst * c.max(1.0) < PRIMAL_TOL * total.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("L1 coordinate descent hit {MAX_EPOCHS} epochs");
    }
    let loss: f64 = margin.iter().zip(cw).map(|(m, c)| c * m.max(0.0).powi(2)).sum();
    let objective = loss + lambda * w.iter().map(|v| v.abs()).sum::<f64>();
    LinearModel {
        weights: w,
        intercept: b,
        loss: Loss::SquaredHinge,
        reg: Regularizer::L1,
        c,
        diagnostics: Diagnostics {
            objective,
            iterations: epochs,
            converged,
        },
    }
}
