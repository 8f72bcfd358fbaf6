//! SGD-with-momentum training and accuracy evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::{hwc_to_nchw, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{ImageModel, Network};
use crate::pruning::PruningMask;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

/// Learning rate over the course of one `train` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// `lr · ½(1 + cos(π t / T))` over the `T` steps of the run.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = step as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 32,
            schedule: LrSchedule::Cosine,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
}

fn batch_of<T: Scalar>(data: &LabeledDataset, idx: &[usize]) -> (Tensor<T>, Vec<usize>) {
    let dims = data.dims();
    let mut pixels = Vec::with_capacity(idx.len() * dims.len());
    for &i in idx {
        pixels.extend_from_slice(data.image(i));
    }
    (
        hwc_to_nchw(&pixels, idx.len(), dims),
        idx.iter().map(|&i| data.label(i)).collect(),
    )
}

/// Minimizes mean cross-entropy with SGD + momentum (`v ← μv + g`,
/// `w ← w − lr·v`, lr following `cfg.schedule`). With a mask, masked weights and their gradients are
/// zeroed every step, so they stay exactly zero.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    mask: Option<&PruningMask>,
) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if data.dims() != net.config().dims() {
        return Err(Error::invalid(format!(
            "dataset images {:?} do not match model input {:?}",
            data.dims(),
            net.config().dims()
        )));
    }
    if let Some(m) = mask {
        crate::pruning::apply_mask(&mut net.params, m)?;
    }
    let total_steps = cfg.epochs * data.len().div_ceil(cfg.batch_size);
    let mu = T::from_f64(cfg.momentum);
    let mut velocity: BTreeMap<String, Vec<T>> = net
        .params
        .iter()
        .map(|(n, p)| (n.to_string(), vec![T::zero(); p.value().len()]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = batch_of::<T>(data, idx);
            let mut g = Graph::new();
            let bound = net.params.bind(&mut g, true);
            let xv = g.constant(x);
            let fwd = net.forward(&mut g, &bound, xv)?;
            let loss = g.softmax_cross_entropy(fwd.logits, &labels)?;
            let loss_value = g.value(loss).item()?.as_f64();
            if !loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: loss_value,
                });
            }
            loss_sum += loss_value * idx.len() as f64;
            correct += argmax_rows(g.value(fwd.logits))
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p == l)
                .count();

            let lr = T::from_f64(cfg.schedule.rate(cfg.lr, log.steps, total_steps));
            let mut grads = g.backward(loss)?;
            for (name, var) in bound.iter() {
                let mut grad = grads.take(var).expect("parameter gradient").into_data();
                let keep = mask.and_then(|m| m.get(name));
                if let Some(m) = keep {
                    m.apply(&mut grad);
                }
                let v = velocity.get_mut(name).expect("velocity buffer");
                let param = net.params.get_mut(name).expect("bound parameter");
                let w = param.value_mut().data_mut();
                for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(&grad) {
                    *vi = mu * *vi + *gi;
                    *wi -= lr * *vi;
                }
                if let Some(m) = keep {
                    m.apply(w);
                }
            }
            log.steps += 1;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        };
        log::debug!(
            "epoch {epoch}: loss {:.4}, train acc {:.4}",
            stats.mean_loss,
            stats.train_accuracy
        );
        log.epochs.push(stats);
    }
    Ok(log)
}

/// Row-wise argmax of `[N, K]` logits; ties go to the lower class index.
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Logits for `n` HWC images packed in `pixels`.
pub fn logits_for<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    pixels: &[f32],
    n: usize,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let x = g.constant(hwc_to_nchw(pixels, n, model.dims()));
    let l = model.logits(&mut g, x)?;
    Ok(g.value(l).clone())
}

const EVAL_BATCH: usize = 64;

/// Predicted class for every image, in dataset order.
pub fn predict<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    data: &LabeledDataset,
) -> Result<Vec<usize>> {
    let dims = data.dims();
    let mut preds = Vec::with_capacity(data.len());
    for start in (0..data.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(data.len());
        let pixels = &data.images()[start * dims.len()..end * dims.len()];
        let logits = logits_for(model, pixels, end - start)?;
        preds.extend(argmax_rows(&logits));
    }
    Ok(preds)
}

/// Top-1 accuracy from `[N, K]` logits. Empty logits are an error.
pub fn accuracy_from_logits<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    if logits.ndim() != 2 || logits.is_empty() {
        return Err(Error::invalid(format!(
            "cannot score empty logits of shape {:?}",
            logits.shape()
        )));
    }
    if logits.shape()[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            left: logits.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    let preds = argmax_rows(logits);
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Top-1 accuracy in `[0, 1]`.
pub fn evaluate_accuracy<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    data: &LabeledDataset,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let preds = predict(model, data)?;
    let hits = preds
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}
