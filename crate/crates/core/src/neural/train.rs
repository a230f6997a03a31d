use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tensor::ParamSet;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Minibatch optimization and early-stopping settings shared by the
/// networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of training rows held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            validation_fraction: 0.1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "learning rate, batch size and epoch count must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept, when validating.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.tensors.len() {
            let p = params.tensors[k].data_mut();
            let g = grads.tensors[k].data();
            let m = self.m.tensors[k].data_mut();
            let v = self.v.tensors[k].data_mut();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

pub(crate) fn check_labels(labels: &[bool]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if labels.iter().all(|&y| y) || !labels.iter().any(|&y| y) {
        return Err(Error::SingleClass("network training labels".into()));
    }
    Ok(())
}

/// Generic minibatch loop. `batch_grad` returns the batch loss and fills the
/// gradient buffer; `eval_loss` scores rows without dropout. With a
/// validation split the parameters of the best validation epoch are
/// restored at the end.
pub(crate) fn fit<B, E>(
    params: &mut ParamSet,
    n: usize,
    tp: &TrainParams,
    seed: u64,
    mut batch_grad: B,
    eval_loss: E,
) -> Result<TrainingLog>
where
    B: FnMut(&ParamSet, &[usize], &mut Rng, &mut ParamSet) -> Result<f64>,
    E: Fn(&ParamSet, &[usize]) -> Result<f64>,
{
    tp.validate()?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = rng::stream(seed, 0x71);
    order.shuffle(&mut split_rng);
    let n_val = if tp.validation_fraction > 0.0 {
        ((n as f64 * tp.validation_fraction).round() as usize).clamp(1, n.saturating_sub(1))
    } else {
        0
    };
    let val: Vec<usize> = order[..n_val].to_vec();
    let mut train: Vec<usize> = order[n_val..].to_vec();
    train.sort_unstable();
    if train.is_empty() {
        return Err(Error::invalid("no rows left for training"));
    }

    let mut opt = Adam::new(params, tp.learning_rate);
    let mut grads = params.zeros_like();
    let mut shuffle_rng = rng::stream(seed, 0x72);
    let mut dropout_rng = rng::stream(seed, 0x73);
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut waited = 0;
    for epoch in 1..=tp.max_epochs {
        train.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in train.chunks(tp.batch_size) {
            grads.zero();
            let loss = batch_grad(params, batch, &mut dropout_rng, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
            opt.step(params, &grads);
        }
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(eval_loss(params, &val)?)
        };
        log.epochs.push(EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss,
        });
        if let Some(v) = val_loss {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, params.clone()));
                log.best_epoch = Some(epoch);
                waited = 0;
            } else {
                waited += 1;
                if tp.patience > 0 && waited >= tp.patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((_, p)) = best {
        *params = p;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::Tensor;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = ParamSet::new();
        p.push("x", Tensor::from_vec(&[2], vec![3.0, -2.0]).unwrap());
        let mut opt = Adam::new(&p, 0.1);
        let mut g = p.zeros_like();
        for _ in 0..500 {
            let x = p.tensors[0].data().to_vec();
            g.tensors[0].data_mut().copy_from_slice(&[2.0 * (x[0] - 1.0), 2.0 * x[1]]);
            opt.step(&mut p, &g);
        }
        let x = p.tensors[0].data();
        assert!((x[0] - 1.0).abs() < 1e-2 && x[1].abs() < 1e-2);
    }

    #[test]
    fn early_stopping_keeps_best_epoch() {
        // Validation loss is the distance of the single parameter from 0;
        // every step pushes it up, so epoch 1 stays best.
        let mut p = ParamSet::new();
        p.push("x", Tensor::from_vec(&[1], vec![0.0]).unwrap());
        let tp = TrainParams {
            learning_rate: 0.1,
            max_epochs: 10,
            patience: 2,
            validation_fraction: 0.2,
            ..Default::default()
        };
        let log = fit(
            &mut p,
            10,
            &tp,
            0,
            |_, _, _, g| {
                g.tensors[0].data_mut()[0] = -1.0;
                Ok(1.0)
            },
            |p, _| Ok(p.tensors[0].data()[0].abs()),
        )
        .unwrap();
        assert!(log.stopped_early);
        assert_eq!(log.best_epoch, Some(1));
        assert_eq!(log.epochs.len(), 3);
        let best = log.epochs[0].val_loss.unwrap();
        assert_eq!(p.tensors[0].data()[0].abs(), best);
    }
}
