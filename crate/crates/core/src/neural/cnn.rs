use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::*;
use super::mlp::glorot;
use super::tensor::{ParamSet, Tensor};
use super::train::{check_labels, fit, TrainParams, TrainingLog};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{self, Rng};
use crate::textfeat::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnParams {
    pub embedding_dim: usize,
    pub widths: Vec<usize>,
    pub filters: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub train: TrainParams,
}

impl Default for CnnParams {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            widths: vec![3, 4, 5],
            filters: 64,
            hidden: 128,
            dropout: 0.5,
            max_len: 512,
            train: TrainParams::default(),
        }
    }
}

impl CnnParams {
    pub fn validate(&self) -> Result<()> {
        let mut w = self.widths.clone();
        w.sort_unstable();
        w.dedup();
        if w.len() != self.widths.len() || w.is_empty() || w[0] == 0 {
            return Err(Error::Config("filter widths must be distinct and positive".into()));
        }
        if self.embedding_dim == 0 || self.filters == 0 || self.hidden == 0 || self.max_len == 0 {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        self.train.validate()
    }

    fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }
}

/// Token-id sequences paired with encoded structured rows (the structured
/// block may have zero columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CnnData {
    pub tokens: Vec<Vec<u32>>,
    pub structured: DenseMatrix,
}

impl CnnData {
    pub fn new(tokens: Vec<Vec<u32>>, structured: DenseMatrix) -> Result<Self> {
        if tokens.len() != structured.rows() {
            return Err(Error::DimensionMismatch {
                expected: tokens.len(),
                found: structured.rows(),
            });
        }
        Ok(Self { tokens, structured })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> CnnData {
        CnnData {
            tokens: idx.iter().map(|&i| self.tokens[i].clone()).collect(),
            structured: self.structured.select_rows(idx),
        }
    }
}

/// Vocabulary ids of `tokens`; out-of-vocabulary tokens are dropped.
pub fn token_ids<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<u32> {
    tokens
        .iter()
        .filter_map(|t| vocab.index_of(t.as_ref()).map(|i| i as u32))
        .collect()
}

/// Embedding table for `vocab`: uniform random rows, replaced by the
/// vectors found in an embedding file (`token v₁ … v_E` per line).
pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Tensor> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = random_embeddings(vocab.len(), dim, seed);
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(|v| {
                v.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad embedding value `{v}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if let Some(i) = vocab.index_of(token) {
            table.row_mut(i).copy_from_slice(&values);
        }
    }
    Ok(table)
}

fn random_embeddings(vocab_size: usize, dim: usize, seed: u64) -> Tensor {
    let mut r = rng::stream(seed, 0x62);
    let n = vocab_size * dim;
    Tensor::from_vec(&[vocab_size, dim], (0..n).map(|_| r.random_range(-0.1..0.1)).collect()).expect("shape")
}

pub fn init_cnn(params: &CnnParams, vocab_size: usize, structured_dim: usize, seed: u64) -> ParamSet {
    let mut r = rng::stream(seed, 0x63);
    let (e, f, h) = (params.embedding_dim, params.filters, params.hidden);
    let mut p = ParamSet::new();
    p.push("embedding", random_embeddings(vocab_size.max(1), e, seed));
    for &k in &params.widths {
        p.push(&format!("conv{k}.w"), glorot(&mut r, &[f, k, e], k * e, f));
        p.push(&format!("conv{k}.b"), Tensor::zeros(&[f]));
    }
    let fused = params.widths.len() * f + structured_dim;
    p.push("fc1.w", glorot(&mut r, &[fused, h], fused, h));
    p.push("fc1.b", Tensor::zeros(&[h]));
    p.push("fc2.w", glorot(&mut r, &[h, 2], h, 2));
    p.push("fc2.b", Tensor::zeros(&[2]));
    p
}

struct TextCache {
    embedded: Tensor,
    n_ids: usize,
    pools: Vec<(Vec<usize>, usize)>,
}

fn clip<'a>(ids: &'a [u32], params: &CnnParams) -> &'a [u32] {
    &ids[..ids.len().min(params.max_len)]
}

/// Embedding → conv banks → max-pool; sequences shorter than the widest
/// filter are padded with zero vectors.
fn text_forward(p: &ParamSet, params: &CnnParams, ids: &[u32]) -> Result<(Vec<f64>, TextCache)> {
    let ids = clip(ids, params);
    let e = params.embedding_dim;
    let emb = embedding_forward(&p.tensors[0], ids)?;
    let len = ids.len().max(params.max_width());
    let mut data = emb.into_data();
    data.resize(len * e, 0.0);
    let embedded = Tensor::from_vec(&[len, e], data)?;
    let mut feats = Vec::with_capacity(params.widths.len() * params.filters);
    let mut pools = Vec::with_capacity(params.widths.len());
    for (b, _) in params.widths.iter().enumerate() {
        let conv = conv1d_forward(&embedded, &p.tensors[1 + 2 * b], &p.tensors[2 + 2 * b])?;
        let (pooled, arg) = maxpool_forward(&conv)?;
        feats.extend_from_slice(pooled.data());
        pools.push((arg, conv.rows()));
    }
    Ok((
        feats,
        TextCache {
            embedded,
            n_ids: ids.len(),
            pools,
        },
    ))
}

fn text_backward(p: &ParamSet, params: &CnnParams, ids: &[u32], cache: &TextCache, dfeat: &[f64], grads: &mut ParamSet) {
    let ids = &clip(ids, params)[..cache.n_ids];
    let f = params.filters;
    let mut dx = Tensor::zeros(cache.embedded.shape());
    for (b, (arg, rows)) in cache.pools.iter().enumerate() {
        let dconv = maxpool_backward(arg, &dfeat[b * f..(b + 1) * f], *rows);
        let (lo, hi) = grads.tensors.split_at_mut(2 + 2 * b);
        let dxb = conv1d_backward(&cache.embedded, &p.tensors[1 + 2 * b], &dconv, &mut lo[1 + 2 * b], &mut hi[0]);
        dx.add_assign(&dxb);
    }
    embedding_backward(ids, &dx, &mut grads.tensors[0]);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn cnn_loss(
    p: &ParamSet,
    params: &CnnParams,
    data: &CnnData,
    rows: &[usize],
    labels: &[usize],
    weights: &[f64],
    dropout: Option<&mut Rng>,
    grads: Option<&mut ParamSet>,
) -> Result<(f64, Tensor)> {
    let nb = params.widths.len();
    let (fc1w, fc1b) = (&p.tensors[1 + 2 * nb], &p.tensors[2 + 2 * nb]);
    let (fc2w, fc2b) = (&p.tensors[3 + 2 * nb], &p.tensors[4 + 2 * nb]);
    let text_dim = nb * params.filters;
    let ds = data.structured.cols();
    let fused_dim = text_dim + ds;
    if fc1w.rows() != fused_dim {
        return Err(Error::DimensionMismatch {
            expected: fc1w.rows(),
            found: fused_dim,
        });
    }
    let train = grads.is_some();
    let texts: Vec<(Vec<f64>, TextCache)> = if train {
        rows.iter()
            .map(|&r| text_forward(p, params, &data.tokens[r]))
            .collect::<Result<_>>()?
    } else {
        rows.par_iter()
            .map(|&r| text_forward(p, params, &data.tokens[r]))
            .collect::<Result<_>>()?
    };
    let mut fused = Tensor::zeros(&[rows.len(), fused_dim]);
    for (k, &r) in rows.iter().enumerate() {
        let row = fused.row_mut(k);
        row[..text_dim].copy_from_slice(&texts[k].0);
        row[text_dim..].copy_from_slice(data.structured.row(r));
    }
    let pre = dense_forward(&fused, fc1w, fc1b)?;
    let act = relu_forward(&pre);
    let (dropped, mask) = match dropout {
        Some(rng) => {
            let (y, m) = dropout_forward(&act, params.dropout, rng)?;
            (y, Some(m))
        }
        None => (act, None),
    };
    let logits = dense_forward(&dropped, fc2w, fc2b)?;
    let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
    let c: Vec<f64> = rows.iter().map(|&r| weights[r]).collect();
    let (loss, probs) = softmax_xent_forward(&logits, &y, &c)?;
    if let Some(g) = grads {
        let dlogits = softmax_xent_backward(&probs, &y, &c);
        let (lo, hi) = g.tensors.split_at_mut(4 + 2 * nb);
        let ddropped = dense_backward(&dropped, fc2w, &dlogits, &mut lo[3 + 2 * nb], &mut hi[0]);
        let dact = match &mask {
            Some(m) => dropout_backward(m, &ddropped),
            None => ddropped,
        };
        let dpre = relu_backward(&pre, &dact);
        let (lo, hi) = g.tensors.split_at_mut(2 + 2 * nb);
        let dfused = dense_backward(&fused, fc1w, &dpre, &mut lo[1 + 2 * nb], &mut hi[0]);
        for (k, &r) in rows.iter().enumerate() {
            text_backward(p, params, &data.tokens[r], &texts[k].1, &dfused.row(k)[..text_dim], g);
        }
    }
    Ok((loss, probs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnFusionModel {
    pub params: CnnParams,
    pub vocab_size: usize,
    pub structured_dim: usize,
    pub weights: ParamSet,
    pub log: TrainingLog,
}

/// Train the text CNN fused with structured features. `embeddings`, when
/// given, initializes the `[vocab_size, embedding_dim]` table.
pub fn train_cnn_fusion(
    data: &CnnData,
    y: &[bool],
    vocab_size: usize,
    params: &CnnParams,
    instance_weights: Option<&[f64]>,
    embeddings: Option<&Tensor>,
    seed: u64,
) -> Result<CnnFusionModel> {
    params.validate()?;
    check_labels(y)?;
    if data.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: y.len(),
        });
    }
    if data.structured.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("structured rows".into()));
    }
    let mut p = init_cnn(params, vocab_size, data.structured.cols(), seed);
    if let Some(table) = embeddings {
        if table.shape() != p.tensors[0].shape() {
            return Err(Error::invalid(format!(
                "embedding table shape {:?}, expected {:?}",
                table.shape(),
                p.tensors[0].shape()
            )));
        }
        p.tensors[0] = table.clone();
    }
    let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
    let weights = instance_weights.map_or_else(|| vec![1.0; y.len()], <[f64]>::to_vec);
    let log = fit(
        &mut p,
        y.len(),
        &params.train,
        seed,
        |p, batch, rng, g| Ok(cnn_loss(p, params, data, batch, &labels, &weights, Some(rng), Some(g))?.0),
        |p, rows| Ok(cnn_loss(p, params, data, rows, &labels, &weights, None, None)?.0),
    )?;
    Ok(CnnFusionModel {
        params: params.clone(),
        vocab_size,
        structured_dim: data.structured.cols(),
        weights: p,
        log,
    })
}

impl CnnFusionModel {
    /// Full softmax rows `[n, 2]` with dropout disabled.
    pub fn predict_softmax(&self, data: &CnnData) -> Result<Tensor> {
        if data.structured.cols() != self.structured_dim {
            return Err(Error::DimensionMismatch {
                expected: self.structured_dim,
                found: data.structured.cols(),
            });
        }
        let n = data.len();
        let rows: Vec<usize> = (0..n).collect();
        let (_, probs) = cnn_loss(&self.weights, &self.params, data, &rows, &vec![0; n], &vec![1.0; n], None, None)?;
        Ok(probs)
    }

    pub fn predict_proba(&self, data: &CnnData) -> Result<Vec<f64>> {
        let p = self.predict_softmax(data)?;
        Ok((0..p.rows()).map(|r| p.row(r)[1]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn dying_set() -> (CnnData, Vec<bool>) {
        // ids: 0 dying, 1 stable, 2 pain, 3 family, 4 rest
        let tokens = vec![
            vec![0, 2, 3],
            vec![1, 2, 4],
            vec![3, 0, 4, 2],
            vec![1, 3],
            vec![4, 4, 0],
            vec![2, 1, 3, 4],
            vec![0],
            vec![2, 2, 1],
        ];
        let y = tokens.iter().map(|t| t.contains(&0)).collect();
        (CnnData::new(tokens, DenseMatrix::zeros(8, 0)).unwrap(), y)
    }

    fn small_params(epochs: usize) -> CnnParams {
        CnnParams {
            embedding_dim: 8,
            filters: 4,
            hidden: 8,
            train: TrainParams {
                learning_rate: 0.01,
                batch_size: 4,
                max_epochs: epochs,
                patience: 0,
                validation_fraction: 0.0,
            },
            ..Default::default()
        }
    }

    #[test]
    fn dying_toy_overfits() {
        let (data, y) = dying_set();
        let m = train_cnn_fusion(&data, &y, 5, &small_params(200), None, None, 1).unwrap();
        let p = m.predict_proba(&data).unwrap();
        for (p, y) in p.iter().zip(&y) {
            assert_eq!(*p >= 0.5, *y);
            if *y {
                assert!(*p > 0.9, "{p}");
            }
        }
        let probs = m.predict_softmax(&data).unwrap();
        for r in 0..probs.rows() {
            assert!((probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let losses: Vec<f64> = m.log.epochs.iter().map(|e| e.train_loss).collect();
        assert!(losses[3] < losses[0]);
    }

    #[test]
    fn deterministic_and_truncates() {
        let (data, y) = dying_set();
        let params = CnnParams {
            max_len: 2,
            ..small_params(3)
        };
        let a = train_cnn_fusion(&data, &y, 5, &params, None, None, 4).unwrap();
        let b = train_cnn_fusion(&data, &y, 5, &params, None, None, 4).unwrap();
        assert_eq!(a.weights, b.weights);
        assert!(CnnParams {
            widths: vec![3, 3],
            ..params
        }
        .validate()
        .is_err());
    }
}
