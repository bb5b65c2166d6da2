use rand::seq::SliceRandom;

use super::dataset::{split_indices, DatasetSample, Split};
use super::label::Label;
use super::model::{batch_tensor, Grads, Mode, ModelConfig, ModelParams, DEGENERATE};
use super::nn::Tensor;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Stop after the first epoch whose validation accuracy and F1 both
    /// reach these values.
    pub early_stop: Option<(f64, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            early_stop: None,
        }
    }
}

/// Adam moment estimates per trainable tensor.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            t: 0,
            m: Grads::new(),
            v: Grads::new(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (name, g) in grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&g.shape));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&g.shape));
            let p = params.get_mut(name);
            for i in 0..g.len() {
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g.data[i];
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g.data[i] * g.data[i];
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation accuracy (initial ones if no epoch ran).
    pub params: ModelParams,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
    pub test_acc: f64,
    pub test_f1: f64,
}

/// Accuracy and F1 of the degenerate class. F1 is 1 when there are neither
/// positives nor positive predictions.
pub fn accuracy_f1(pred: &[usize], truth: &[usize]) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_, mut ok) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        ok += (p == t) as usize;
        match (p == DEGENERATE, t == DEGENERATE) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let acc = if pred.is_empty() {
        0.0
    } else {
        ok as f64 / pred.len() as f64
    };
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    (acc, f1)
}

/// Predicted classes in inference mode, evaluated in batches.
pub fn predict_classes(
    params: &ModelParams,
    samples: &[DatasetSample],
    idx: &[usize],
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(64) {
        let imgs: Vec<&[f64]> = chunk
            .iter()
            .map(|&i| samples[i].image.pixels.as_slice())
            .collect();
        let f = params.forward(&batch_tensor(&imgs, params.config.size_px)?, Mode::Infer)?;
        out.extend(f.probs.chunks(2).map(|p| {
            if p[DEGENERATE] > p[1 - DEGENERATE] {
                DEGENERATE
            } else {
                1 - DEGENERATE
            }
        }));
    }
    Ok(out)
}

pub fn evaluate(
    params: &ModelParams,
    samples: &[DatasetSample],
    idx: &[usize],
) -> Result<(f64, f64)> {
    let pred = predict_classes(params, samples, idx)?;
    let truth: Vec<usize> = idx.iter().map(|&i| samples[i].label.index()).collect();
    Ok(accuracy_f1(&pred, &truth))
}

/// One minibatch: forward, backward, Adam update, running-stat update.
pub fn train_step(
    params: &mut ModelParams,
    opt: &mut Adam,
    samples: &[DatasetSample],
    batch: &[usize],
) -> Result<f64> {
    let imgs: Vec<&[f64]> = batch
        .iter()
        .map(|&i| samples[i].image.pixels.as_slice())
        .collect();
    let labels: Vec<usize> = batch.iter().map(|&i| samples[i].label.index()).collect();
    let x = batch_tensor(&imgs, params.config.size_px)?;
    let fwd = params.forward(&x, Mode::Train)?;
    let (loss, grads) = params.backward(&fwd, &labels)?;
    opt.step(params, &grads);
    params.apply_bn_stats(&fwd.bn_stats);
    Ok(loss)
}

/// Trains from `init` on `split.train`, selecting by validation accuracy.
/// `on_epoch` sees every epoch's metrics as they are produced.
pub fn train_with(
    init: ModelParams,
    samples: &[DatasetSample],
    split: &Split,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    if samples.is_empty() || split.train.is_empty() {
        return Err(Error::Usage(
            "training needs a non-empty training split".into(),
        ));
    }
    let has = |l: Label| split.train.iter().any(|&i| samples[i].label == l);
    if !has(Label::Degenerate) || !has(Label::NonDegenerate) {
        return Err(Error::Usage(
            "training data must contain both classes".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Usage("batch_size must be >= 1".into()));
    }
    let eval_idx = if split.val.is_empty() {
        &split.train
    } else {
        &split.val
    };
    let mut params = init;
    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut opt = Adam::new(cfg);
    let mut metrics = Vec::new();
    let mut order = split.train.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng::seeded(rng::derive(
            cfg.seed,
            &[0xE70C, epoch as u64],
        )));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            total += train_step(&mut params, &mut opt, samples, batch)? * batch.len() as f64;
        }
        if !params.is_finite() {
            return Err(Error::Contract(format!(
                "training diverged in epoch {epoch}"
            )));
        }
        let (val_acc, val_f1) = evaluate(&params, samples, eval_idx)?;
        let m = EpochMetrics {
            epoch,
            train_loss: total / order.len() as f64,
            val_acc,
            val_f1,
        };
        on_epoch(&m);
        metrics.push(m);
        if val_acc > best_acc {
            best_acc = val_acc;
            best = params.clone();
            best_epoch = Some(epoch);
        }
        if cfg
            .early_stop
            .is_some_and(|(acc, f1)| val_acc >= acc && val_f1 >= f1)
        {
            break;
        }
    }
    let (test_acc, test_f1) = if split.test.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        evaluate(&best, samples, &split.test)?
    };
    Ok(TrainOutcome {
        params: best,
        metrics,
        best_epoch,
        test_acc,
        test_f1,
    })
}

/// Seeded 6:2:2 split, seeded initialization, then [`train_with`].
pub fn model_train(
    samples: &[DatasetSample],
    model: ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Usage("dataset is empty".into()));
    }
    let split = split_indices(samples.len(), cfg.seed);
    let init = ModelParams::init(model, rng::derive(cfg.seed, &[0x1417]))?;
    train_with(init, samples, &split, cfg, |_| {})
}
