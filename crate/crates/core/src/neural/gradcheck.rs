//! Central finite-difference verification of the analytic gradients.
//!
//! Each check builds a scalar objective from a layer or a full network,
//! compares the analytic gradient of every input and parameter block with
//! `(f(θ+ε) − f(θ−ε)) / 2ε` and reports the block-wise relative error
//! `‖a − n‖ / (‖a‖ + ‖n‖)` (zero when both vanish).

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::cnn::{cnn_loss, init_cnn, CnnData, CnnParams};
use super::layers::*;
use super::mlp::{init_mlp, mlp_loss};
use super::tensor::{ParamSet, Tensor};
use crate::error::Result;
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::rng::{self, Rng};

pub const EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Relu,
    Dropout,
    Embedding,
    Conv1d,
    MaxPool,
    SoftmaxCrossEntropy,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::Dense,
        LayerKind::Relu,
        LayerKind::Dropout,
        LayerKind::Embedding,
        LayerKind::Conv1d,
        LayerKind::MaxPool,
        LayerKind::SoftmaxCrossEntropy,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.1).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn numeric_grad(values: &mut [f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let orig = values[i];
            values[i] = orig + EPSILON;
            let up = f(values);
            values[i] = orig - EPSILON;
            let down = f(values);
            values[i] = orig;
            (up - down) / (2.0 * EPSILON)
        })
        .collect()
}

fn normal(r: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| StandardNormal.sample(r)).collect()).expect("shape")
}

fn gauss(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with(t: &Tensor, values: &[f64]) -> Tensor {
    Tensor::from_vec(t.shape(), values.to_vec()).expect("shape")
}

/// Check one layer kind on seed-drawn shapes against the objective
/// `Σ output ⊙ R` for a random `R`.
pub fn check_layer(kind: LayerKind, seed: u64) -> Result<GradCheckReport> {
    let mut r = rng::stream(seed, 0x91);
    let mut blocks = Vec::new();
    match kind {
        LayerKind::Dense => {
            let (b, i, o) = (r.random_range(1..5), r.random_range(1..6), r.random_range(1..6));
            let x = normal(&mut r, &[b, i]);
            let w = normal(&mut r, &[i, o]);
            let bias = normal(&mut r, &[o]);
            let proj = normal(&mut r, &[b, o]);
            let (mut dw, mut db) = (Tensor::zeros(&[i, o]), Tensor::zeros(&[o]));
            let dx = dense_backward(&x, &w, &proj, &mut dw, &mut db);
            let f = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&dense_forward(x, w, b).expect("shapes"), &proj);
            let nx = numeric_grad(&mut x.data().to_vec(), &mut |v| f(&with(&x, v), &w, &bias));
            let nw = numeric_grad(&mut w.data().to_vec(), &mut |v| f(&x, &with(&w, v), &bias));
            let nb = numeric_grad(&mut bias.data().to_vec(), &mut |v| f(&x, &w, &with(&bias, v)));
            blocks.push(("input".into(), relative_error(dx.data(), &nx)));
            blocks.push(("weight".into(), relative_error(dw.data(), &nw)));
            blocks.push(("bias".into(), relative_error(db.data(), &nb)));
        }
        LayerKind::Relu => {
            let shape = [r.random_range(1..5), r.random_range(1..8)];
            let mut x = normal(&mut r, &shape);
            // keep inputs away from the kink
            x.data_mut().iter_mut().for_each(|v| *v += 0.1 * v.signum());
            let proj = normal(&mut r, &shape);
            let dx = relu_backward(&x, &proj);
            let nx = numeric_grad(&mut x.data().to_vec(), &mut |v| dot(&relu_forward(&with(&x, v)), &proj));
            blocks.push(("input".into(), relative_error(dx.data(), &nx)));
        }
        LayerKind::Dropout => {
            let shape = [r.random_range(1..5), r.random_range(1..8)];
            let x = normal(&mut r, &shape);
            let proj = normal(&mut r, &shape);
            let rate = r.random_range(0.1..0.7);
            let mask_seed = r.random::<u64>();
            let (_, mask) = dropout_forward(&x, rate, &mut rng::rng_from(mask_seed))?;
            let dx = dropout_backward(&mask, &proj);
            let nx = numeric_grad(&mut x.data().to_vec(), &mut |v| {
                let (y, _) = dropout_forward(&with(&x, v), rate, &mut rng::rng_from(mask_seed)).expect("rate");
                dot(&y, &proj)
            });
            blocks.push(("input".into(), relative_error(dx.data(), &nx)));
        }
        LayerKind::Embedding => {
            let (v, e, l) = (r.random_range(2..7), r.random_range(1..5), r.random_range(1..8));
            let table = normal(&mut r, &[v, e]);
            let ids: Vec<u32> = (0..l).map(|_| r.random_range(0..v as u32)).collect();
            let proj = normal(&mut r, &[l, e]);
            let mut dt = Tensor::zeros(&[v, e]);
            embedding_backward(&ids, &proj, &mut dt);
            let nt = numeric_grad(&mut table.data().to_vec(), &mut |vals| {
                dot(&embedding_forward(&with(&table, vals), &ids).expect("ids"), &proj)
            });
            blocks.push(("table".into(), relative_error(dt.data(), &nt)));
        }
        LayerKind::Conv1d => {
            let (e, f, k) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
            let l = k + r.random_range(0..6);
            let x = normal(&mut r, &[l, e]);
            let w = normal(&mut r, &[f, k, e]);
            let bias = normal(&mut r, &[f]);
            let proj = normal(&mut r, &[l - k + 1, f]);
            let (mut dw, mut db) = (Tensor::zeros(&[f, k, e]), Tensor::zeros(&[f]));
            let dx = conv1d_backward(&x, &w, &proj, &mut dw, &mut db);
            let f = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&conv1d_forward(x, w, b).expect("shapes"), &proj);
            let nx = numeric_grad(&mut x.data().to_vec(), &mut |v| f(&with(&x, v), &w, &bias));
            let nw = numeric_grad(&mut w.data().to_vec(), &mut |v| f(&x, &with(&w, v), &bias));
            let nb = numeric_grad(&mut bias.data().to_vec(), &mut |v| f(&x, &w, &with(&bias, v)));
            blocks.push(("input".into(), relative_error(dx.data(), &nx)));
            blocks.push(("weight".into(), relative_error(dw.data(), &nw)));
            blocks.push(("bias".into(), relative_error(db.data(), &nb)));
        }
        LayerKind::MaxPool => {
            let (t, f) = (r.random_range(1..8), r.random_range(1..5));
            let x = normal(&mut r, &[t, f]);
            let proj: Vec<f64> = (0..f).map(|_| StandardNormal.sample(&mut r)).collect();
            let (_, arg) = maxpool_forward(&x)?;
            let dx = maxpool_backward(&arg, &proj, t);
            let pt = Tensor::from_vec(&[f], proj.clone())?;
            let nx = numeric_grad(&mut x.data().to_vec(), &mut |v| dot(&maxpool_forward(&with(&x, v)).expect("shape").0, &pt));
            blocks.push(("input".into(), relative_error(dx.data(), &nx)));
        }
        LayerKind::SoftmaxCrossEntropy => {
            let (b, c) = (r.random_range(1..6), r.random_range(2..5));
            let logits = normal(&mut r, &[b, c]);
            let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..c)).collect();
            let weights: Vec<f64> = (0..b).map(|_| r.random_range(0.5..2.0)).collect();
            let (_, probs) = softmax_xent_forward(&logits, &labels, &weights)?;
            let dl = softmax_xent_backward(&probs, &labels, &weights);
            let nl = numeric_grad(&mut logits.data().to_vec(), &mut |v| {
                softmax_xent_forward(&with(&logits, v), &labels, &weights).expect("shapes").0
            });
            blocks.push(("logits".into(), relative_error(dl.data(), &nl)));
        }
    }
    Ok(GradCheckReport { blocks })
}

fn check_params(
    params: &ParamSet,
    analytic: &ParamSet,
    loss: &mut dyn FnMut(&ParamSet) -> f64,
) -> GradCheckReport {
    let mut blocks = Vec::new();
    let mut probe = params.clone();
    for k in 0..params.tensors.len() {
        let mut values = params.tensors[k].data().to_vec();
        let numeric = numeric_grad(&mut values, &mut |v| {
            probe.tensors[k].data_mut().copy_from_slice(v);
            loss(&probe)
        });
        probe.tensors[k] = params.tensors[k].clone();
        blocks.push((params.names[k].clone(), relative_error(analytic.tensors[k].data(), &numeric)));
    }
    GradCheckReport { blocks }
}

/// Whole-MLP check on a seed-drawn sparse batch, dropout included with a
/// fixed mask.
pub fn check_mlp(seed: u64) -> Result<GradCheckReport> {
    let mut r = rng::stream(seed, 0x92);
    let (n, d, h) = (r.random_range(2..6), r.random_range(2..7), r.random_range(2..6));
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| if r.random::<f64>() < 0.3 { 0.0 } else { StandardNormal.sample(&mut r) })
                .collect()
        })
        .collect();
    let x = CsrMatrix::from_dense_rows(&rows)?;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let weights: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let idx: Vec<usize> = (0..n).collect();
    let mut params = init_mlp(d, h, seed);
    for t in &mut params.tensors {
        t.data_mut().iter_mut().for_each(|v| *v += 0.1 * gauss(&mut r).clamp(-1.0, 1.0));
    }
    let mask_seed = r.random::<u64>();
    let mut grads = params.zeros_like();
    mlp_loss(&params, &x, &idx, &labels, &weights, Some((0.3, &mut rng::rng_from(mask_seed))), Some(&mut grads))?;
    Ok(check_params(&params, &grads, &mut |p| {
        mlp_loss(p, &x, &idx, &labels, &weights, Some((0.3, &mut rng::rng_from(mask_seed))), None)
            .expect("shapes")
            .0
    }))
}

/// Whole-CNN check: small vocabulary, mixed sequence lengths (including
/// ones shorter than the widest filter) and a structured block.
pub fn check_cnn(seed: u64) -> Result<GradCheckReport> {
    let mut r = rng::stream(seed, 0x93);
    let params = CnnParams {
        embedding_dim: r.random_range(2..4),
        widths: vec![2, 3],
        filters: r.random_range(2..4),
        hidden: r.random_range(2..5),
        dropout: 0.3,
        max_len: 6,
        ..Default::default()
    };
    let (n, v, ds) = (r.random_range(2..4), r.random_range(3..6), r.random_range(0..3));
    let tokens: Vec<Vec<u32>> = (0..n)
        .map(|_| (0..r.random_range(1..8)).map(|_| r.random_range(0..v as u32)).collect())
        .collect();
    let structured = DenseMatrix::from_vec(n, ds, (0..n * ds).map(|_| StandardNormal.sample(&mut r)).collect())?;
    let data = CnnData::new(tokens, structured)?;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let weights = vec![1.0; n];
    let idx: Vec<usize> = (0..n).collect();
    let mut p = init_cnn(&params, v, ds, seed);
    for t in &mut p.tensors {
        t.data_mut().iter_mut().for_each(|x| *x += 0.2 * gauss(&mut r).clamp(-1.0, 1.0));
    }
    let mask_seed = r.random::<u64>();
    let mut grads = p.zeros_like();
    cnn_loss(&p, &params, &data, &idx, &labels, &weights, Some(&mut rng::rng_from(mask_seed)), Some(&mut grads))?;
    Ok(check_params(&p, &grads, &mut |q| {
        cnn_loss(q, &params, &data, &idx, &labels, &weights, Some(&mut rng::rng_from(mask_seed)), None)
            .expect("shapes")
            .0
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        for kind in LayerKind::ALL {
            for seed in 0..10 {
                let rep = check_layer(kind, seed).unwrap();
                assert!(rep.max_error() < 1e-4, "{kind:?} seed {seed}: {rep:?}");
            }
        }
    }

    #[test]
    fn whole_networks_pass() {
        for seed in 0..5 {
            let rep = check_mlp(seed).unwrap();
            assert!(rep.max_error() < 1e-4, "mlp {seed}: {rep:?}");
            let rep = check_cnn(seed).unwrap();
            assert!(rep.max_error() < 1e-4, "cnn {seed}: {rep:?}");
        }
    }
}
