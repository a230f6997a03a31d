use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::*;
use super::tensor::{ParamSet, Tensor};
use super::train::{check_labels, fit, TrainParams, TrainingLog};
use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: usize,
    pub dropout: f64,
    pub train: TrainParams,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 100,
            dropout: 0.5,
            train: TrainParams::default(),
        }
    }
}

/// `d → H → 2` network with ReLU and dropout on the hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub params: MlpParams,
    pub input_dim: usize,
    pub weights: ParamSet,
    pub log: TrainingLog,
}

pub(crate) fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-a..a)).collect()).expect("shape")
}

pub fn init_mlp(input_dim: usize, hidden: usize, seed: u64) -> ParamSet {
    let mut r = rng::stream(seed, 0x61);
    let mut p = ParamSet::new();
    p.push("w1", glorot(&mut r, &[input_dim, hidden], input_dim, hidden));
    p.push("b1", Tensor::zeros(&[hidden]));
    p.push("w2", glorot(&mut r, &[hidden, 2], hidden, 2));
    p.push("b2", Tensor::zeros(&[2]));
    p
}

/// Batch loss over `rows` of `x`. Dropout is active only when `dropout` is
/// given; gradients are accumulated when `grads` is given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mlp_loss(
    p: &ParamSet,
    x: &CsrMatrix,
    rows: &[usize],
    labels: &[usize],
    weights: &[f64],
    dropout: Option<(f64, &mut Rng)>,
    grads: Option<&mut ParamSet>,
) -> Result<(f64, Tensor)> {
    let (w1, b1, w2, b2) = (&p.tensors[0], &p.tensors[1], &p.tensors[2], &p.tensors[3]);
    let hidden = b1.len();
    let b = rows.len();
    let mut pre = Tensor::zeros(&[b, hidden]);
    for (k, &r) in rows.iter().enumerate() {
        let h = pre.row_mut(k);
        h.copy_from_slice(b1.data());
        for (j, v) in x.row_iter(r) {
            for (hv, wv) in h.iter_mut().zip(w1.row(j)) {
                *hv += v * wv;
            }
        }
    }
    let act = relu_forward(&pre);
    let (dropped, mask) = match dropout {
        Some((rate, rng)) => {
            let (y, m) = dropout_forward(&act, rate, rng)?;
            (y, Some(m))
        }
        None => (act, None),
    };
    let logits = dense_forward(&dropped, w2, b2)?;
    let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
    let c: Vec<f64> = rows.iter().map(|&r| weights[r]).collect();
    let (loss, probs) = softmax_xent_forward(&logits, &y, &c)?;
    if let Some(g) = grads {
        let dlogits = softmax_xent_backward(&probs, &y, &c);
        let (head, tail) = g.tensors.split_at_mut(2);
        let (gw2, gb2) = tail.split_at_mut(1);
        let ddropped = dense_backward(&dropped, w2, &dlogits, &mut gw2[0], &mut gb2[0]);
        let dact = match &mask {
            Some(m) => dropout_backward(m, &ddropped),
            None => ddropped,
        };
        let dpre = relu_backward(&pre, &dact);
        let (gw1, gb1) = head.split_at_mut(1);
        for (k, &r) in rows.iter().enumerate() {
            let d = dpre.row(k);
            for (gb, dv) in gb1[0].data_mut().iter_mut().zip(d) {
                *gb += dv;
            }
            for (j, v) in x.row_iter(r) {
                for (gw, dv) in gw1[0].row_mut(j).iter_mut().zip(d) {
                    *gw += v * dv;
                }
            }
        }
    }
    Ok((loss, probs))
}

fn class_index(y: &[bool]) -> Vec<usize> {
    y.iter().map(|&v| v as usize).collect()
}

pub fn train_mlp(
    x: &CsrMatrix,
    y: &[bool],
    params: &MlpParams,
    instance_weights: Option<&[f64]>,
    seed: u64,
) -> Result<MlpModel> {
    check_labels(y)?;
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    x.check_finite()?;
    if params.hidden == 0 {
        return Err(Error::Config("hidden layer needs at least one unit".into()));
    }
    let labels = class_index(y);
    let weights = instance_weights.map_or_else(|| vec![1.0; y.len()], <[f64]>::to_vec);
    let mut p = init_mlp(x.n_cols(), params.hidden, seed);
    let rate = params.dropout;
    let log = fit(
        &mut p,
        y.len(),
        &params.train,
        seed,
        |p, batch, rng, g| Ok(mlp_loss(p, x, batch, &labels, &weights, Some((rate, rng)), Some(g))?.0),
        |p, rows| Ok(mlp_loss(p, x, rows, &labels, &weights, None, None)?.0),
    )?;
    Ok(MlpModel {
        params: params.clone(),
        input_dim: x.n_cols(),
        weights: p,
        log,
    })
}

impl MlpModel {
    /// Class-1 probabilities with dropout disabled.
    pub fn predict_proba(&self, x: &CsrMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.n_cols(),
            });
        }
        let n = x.n_rows();
        let labels = vec![0; n];
        let weights = vec![1.0; n];
        let rows: Vec<usize> = (0..n).collect();
        let parts: Vec<Vec<f64>> = rows
            .par_chunks(256)
            .map(|chunk| {
                let (_, probs) = mlp_loss(&self.weights, x, chunk, &labels, &weights, None, None)?;
                Ok((0..chunk.len()).map(|k| probs.row(k)[1]).collect())
            })
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    }
}
