//! Forward and backward passes of the network building blocks. Each backward
//! takes the forward inputs (or the small cache the forward returned) and the
//! upstream gradient and returns exact analytic gradients.

use rand::Rng as _;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

fn mismatch(expected: usize, found: usize) -> Error {
    Error::DimensionMismatch { expected, found }
}

/// `y = x·W + b` with `x: [B, I]`, `W: [I, O]`, `b: [O]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, inp) = x.expect_rank2("dense input")?;
    let (wi, out) = w.expect_rank2("dense weight")?;
    if wi != inp {
        return Err(mismatch(wi, inp));
    }
    if b.len() != out {
        return Err(mismatch(out, b.len()));
    }
    let mut y = Tensor::zeros(&[batch, out]);
    for r in 0..batch {
        let yr = y.row_mut(r);
        yr.copy_from_slice(b.data());
        for (i, &xv) in x.row(r).iter().enumerate() {
            if xv != 0.0 {
                for (o, wv) in w.row(i).iter().enumerate() {
                    yr[o] += xv * wv;
                }
            }
        }
    }
    Ok(y)
}

/// Returns `dx` and accumulates into `dw`, `db`.
pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor, dw: &mut Tensor, db: &mut Tensor) -> Tensor {
    let (batch, inp) = (x.rows(), x.cols());
    let out = w.cols();
    let mut dx = Tensor::zeros(&[batch, inp]);
    for r in 0..batch {
        let g = dy.row(r);
        for (o, gv) in g.iter().enumerate() {
            db.data_mut()[o] += gv;
        }
        let xr = x.row(r);
        for i in 0..inp {
            let wrow = w.row(i);
            let mut acc = 0.0;
            for o in 0..out {
                acc += wrow[o] * g[o];
            }
            dx.row_mut(r)[i] = acc;
            if xr[i] != 0.0 {
                let dwrow = dw.row_mut(i);
                for o in 0..out {
                    dwrow[o] += xr[i] * g[o];
                }
            }
        }
    }
    dx
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Inverted dropout. Returns the output and the per-element multiplier
/// (0 or `1/(1−rate)`), which is also the backward mask.
pub fn dropout_forward(x: &Tensor, rate: f64, rng: &mut Rng) -> Result<(Tensor, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    Ok((y, mask))
}

pub fn dropout_backward(mask: &[f64], dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    dx.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    dx
}

/// Rows of `table: [V, E]` selected by `ids`, as `[len(ids), E]`.
pub fn embedding_forward(table: &Tensor, ids: &[u32]) -> Result<Tensor> {
    let (v, e) = table.expect_rank2("embedding table")?;
    let mut out = Tensor::zeros(&[ids.len(), e]);
    for (p, &id) in ids.iter().enumerate() {
        let id = id as usize;
        if id >= v {
            return Err(Error::invalid(format!("token id {id} outside vocabulary of {v}")));
        }
        out.row_mut(p).copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Scatter-add the first `ids.len()` rows of `dy` into `dtable`.
pub fn embedding_backward(ids: &[u32], dy: &Tensor, dtable: &mut Tensor) {
    for (p, &id) in ids.iter().enumerate() {
        let g = dy.row(p);
        for (d, gv) in dtable.row_mut(id as usize).iter_mut().zip(g) {
            *d += gv;
        }
    }
}

/// Valid 1-D convolution over the token axis: `x: [L, E]`,
/// `w: [F, k, E]`, `b: [F]`, output `[L − k + 1, F]`.
pub fn conv1d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (len, e) = x.expect_rank2("conv input")?;
    let ws = w.shape();
    if ws.len() != 3 || ws[2] != e {
        return Err(Error::invalid(format!("conv weight shape {ws:?} incompatible with width {e}")));
    }
    let (f, k) = (ws[0], ws[1]);
    if b.len() != f {
        return Err(mismatch(f, b.len()));
    }
    if len < k {
        return Err(Error::invalid(format!("sequence length {len} shorter than filter width {k}")));
    }
    let t_out = len - k + 1;
    let mut y = Tensor::zeros(&[t_out, f]);
    let xd = x.data();
    let wd = w.data();
    let ke = k * e;
    for t in 0..t_out {
        let window = &xd[t * e..t * e + ke];
        let yr = y.row_mut(t);
        for (fi, out) in yr.iter_mut().enumerate() {
            let filt = &wd[fi * ke..(fi + 1) * ke];
            *out = b.data()[fi] + window.iter().zip(filt).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    debug_assert_eq!(y.rows(), len - k + 1);
    Ok(y)
}

/// Returns `dx` and accumulates into `dw`, `db`.
pub fn conv1d_backward(x: &Tensor, w: &Tensor, dy: &Tensor, dw: &mut Tensor, db: &mut Tensor) -> Tensor {
    let (len, e) = (x.rows(), x.cols());
    let (f, k) = (w.shape()[0], w.shape()[1]);
    let ke = k * e;
    let t_out = len - k + 1;
    let mut dx = Tensor::zeros(&[len, e]);
    let xd = x.data();
    let wd = w.data();
    for t in 0..t_out {
        let g = dy.row(t);
        let window = &xd[t * e..t * e + ke];
        for fi in 0..f {
            let gv = g[fi];
            if gv == 0.0 {
                continue;
            }
            db.data_mut()[fi] += gv;
            let dwf = &mut dw.data_mut()[fi * ke..(fi + 1) * ke];
            for (d, xv) in dwf.iter_mut().zip(window) {
                *d += gv * xv;
            }
            let filt = &wd[fi * ke..(fi + 1) * ke];
            let dxw = &mut dx.data_mut()[t * e..t * e + ke];
            for (d, wv) in dxw.iter_mut().zip(filt) {
                *d += gv * wv;
            }
        }
    }
    dx
}

/// Column-wise maximum of `x: [T, F]`; ties resolve to the first row.
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (t, f) = x.expect_rank2("max-pool input")?;
    if t == 0 {
        return Err(Error::invalid("max-pool over an empty feature map"));
    }
    let mut out = Tensor::zeros(&[f]);
    let mut arg = vec![0usize; f];
    for c in 0..f {
        let mut best = x.row(0)[c];
        for r in 1..t {
            let v = x.row(r)[c];
            if v > best {
                best = v;
                arg[c] = r;
            }
        }
        out.data_mut()[c] = best;
    }
    Ok((out, arg))
}

pub fn maxpool_backward(argmax: &[usize], dy: &[f64], rows: usize) -> Tensor {
    let f = argmax.len();
    let mut dx = Tensor::zeros(&[rows, f]);
    for (c, &r) in argmax.iter().enumerate() {
        dx.row_mut(r)[c] += dy[c];
    }
    dx
}

/// Row-wise softmax probabilities of `logits: [B, C]`.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// Weighted mean cross-entropy `Σ cᵢ·(−log p[i, yᵢ]) / Σ cᵢ` and the
/// probabilities.
pub fn softmax_xent_forward(logits: &Tensor, labels: &[usize], weights: &[f64]) -> Result<(f64, Tensor)> {
    let (b, c) = logits.expect_rank2("logits")?;
    if labels.len() != b || weights.len() != b {
        return Err(mismatch(b, labels.len().min(weights.len())));
    }
    let p = softmax(logits);
    let total: f64 = weights.iter().sum();
    let mut loss = 0.0;
    for r in 0..b {
        if labels[r] >= c {
            return Err(Error::invalid(format!("label {} outside {c} classes", labels[r])));
        }
        // log-softmax computed directly for stability
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += weights[r] * (lse - row[labels[r]]);
    }
    Ok((loss / total, p))
}

pub fn softmax_xent_backward(probs: &Tensor, labels: &[usize], weights: &[f64]) -> Tensor {
    let total: f64 = weights.iter().sum();
    let mut d = probs.clone();
    for r in 0..d.rows() {
        let row = d.row_mut(r);
        row[labels[r]] -= 1.0;
        row.iter_mut().for_each(|v| *v *= weights[r] / total);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_derivative() {
        let x = Tensor::from_vec(&[1, 2], vec![-2.0, 2.0]).unwrap();
        let dy = Tensor::from_vec(&[1, 2], vec![5.0, 7.0]).unwrap();
        assert_eq!(relu_backward(&x, &dy).data(), &[0.0, 7.0]);
    }

    #[test]
    fn maxpool_routes_to_argmax() {
        let x = Tensor::from_vec(&[3, 1], vec![0.1, 0.9, 0.4]).unwrap();
        let (y, arg) = maxpool_forward(&x).unwrap();
        assert_eq!(y.data(), &[0.9]);
        assert_eq!(arg, vec![1]);
        assert_eq!(maxpool_backward(&arg, &[1.0], 3).data(), &[0.0, 1.0, 0.0]);
        let tie = Tensor::from_vec(&[2, 1], vec![0.5, 0.5]).unwrap();
        assert_eq!(maxpool_forward(&tie).unwrap().1, vec![0]);
    }

    #[test]
    fn conv_shape_law_and_errors() {
        let x = Tensor::zeros(&[10, 4]);
        let w = Tensor::zeros(&[3, 5, 4]);
        let b = Tensor::zeros(&[3]);
        assert_eq!(conv1d_forward(&x, &w, &b).unwrap().shape(), &[6, 3]);
        let short = Tensor::zeros(&[4, 4]);
        assert!(conv1d_forward(&short, &w, &b).is_err());
        let wrong = Tensor::zeros(&[3, 5, 2]);
        assert!(conv1d_forward(&x, &wrong, &b).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let l = Tensor::from_vec(&[2, 2], vec![1000.0, -1000.0, 0.3, 0.1]).unwrap();
        let p = softmax(&l);
        for r in 0..2 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (loss, _) = softmax_xent_forward(&l, &[0, 1], &[1.0, 1.0]).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn dropout_scales_kept_units() {
        let mut r = crate::rng::rng_from(1);
        let x = Tensor::from_vec(&[1, 1000], vec![1.0; 1000]).unwrap();
        let (y, mask) = dropout_forward(&x, 0.5, &mut r).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!((400..600).contains(&kept));
        assert!(dropout_forward(&x, 1.0, &mut r).is_err());
    }
}
