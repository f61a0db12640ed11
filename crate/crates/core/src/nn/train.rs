use std::collections::HashMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{backward_stack, forward_stack, softmax, Cache, Mode};
use super::model::{head1_class_index, ModelGraph, HEAD1_CLASSES, HEAD2_CLASSES, INPUT_SHAPE};
use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::qrs::BeatSegment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub lr: f64,
    pub lr_drop_factor: f64,
    pub plateau_epochs: usize,
    pub early_stop_epochs: usize,
    pub max_epochs: usize,
    pub dropout_p: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight each class's loss by `total / (classes * count)`.
    pub class_weighted: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            lr: 1e-3,
            lr_drop_factor: 10.0,
            plateau_epochs: 15,
            early_stop_epochs: 100,
            max_epochs: 500,
            dropout_p: 0.2,
            batch_size: 64,
            seed: 0,
            class_weighted: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::param("Adam betas must lie in (0, 1)"));
        }
        if !(self.lr > 0.0) || !(self.lr_drop_factor >= 1.0) {
            return Err(Error::param(
                "lr must be positive and the drop factor at least 1",
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::param("batch size and epoch limit must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::param("dropout probability must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// False when the epoch limit was reached.
    pub stopped_early: bool,
}

/// Adam with bias correction. Moments are keyed by `(layer, param)`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    moments: HashMap<(usize, usize), (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            moments: HashMap::new(),
        }
    }

    /// Advances the step counter; call once per optimizer step before the
    /// parameter updates.
    pub fn tick(&mut self) {
        self.t += 1;
    }

    pub fn update<T: Real>(
        &mut self,
        key: (usize, usize),
        param: &mut Tensor<T>,
        grad: &Tensor<T>,
    ) {
        let n = param.len();
        let (m, v) = self
            .moments
            .entry(key)
            .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
        let t = self.t.max(1);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
            let g = g.widen();
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let step = self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            *p = T::cast(p.widen() - step);
        }
    }
}

/// Softmax cross-entropy for one sample; returns the loss and its gradient
/// with respect to the logits.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let loss = -p[target].max(f64::MIN_POSITIVE).ln();
    p[target] -= 1.0;
    (loss, p)
}

/// Result of one train-mode pass over a batch.
pub struct BatchPass<T> {
    pub loss: f64,
    pub correct: usize,
    /// Parameter gradients per layer (empty for parameterless layers and for
    /// head 1 when it carries no loss).
    pub grads: Vec<Vec<Tensor<T>>>,
    pub caches: Vec<Option<Cache<T>>>,
}

/// Mean weighted cross-entropy of head 2 (plus head 1 when `head1_targets`
/// is given) and its gradients, with batch norm in batch-statistics mode.
pub fn loss_and_gradients<T: Real>(
    model: &ModelGraph<T>,
    x: &Tensor<T>,
    head2_targets: &[usize],
    head1_targets: Option<&[usize]>,
    class_weights: &[f64],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<BatchPass<T>> {
    let batch = x.shape()[0];
    if head2_targets.len() != batch || head1_targets.is_some_and(|t| t.len() != batch) {
        return Err(Error::param("targets must match the batch size"));
    }
    let scale = 1.0 / batch as f64;
    let (cut, trunk_caches) = forward_stack(model.trunk(), x, Mode::Train, rng.as_deref_mut())?;
    let (logits2, fog_caches) = forward_stack(model.fog_layers(), &cut, Mode::Train, rng)?;

    let mut loss = 0.0;
    let mut correct = 0;
    let logits2 = logits2.to_f64_vec();
    let mut g2 = Vec::with_capacity(logits2.len());
    for (b, &target) in head2_targets.iter().enumerate() {
        let row = &logits2[b * HEAD2_CLASSES..(b + 1) * HEAD2_CLASSES];
        let w = class_weights.get(target).copied().unwrap_or(1.0);
        let (l, g) = cross_entropy(row, target);
        loss += w * l * scale;
        correct += usize::from(argmax(row) == target);
        g2.extend(g.into_iter().map(|v| T::cast(v * w * scale)));
    }
    let g2 = Tensor::raw(vec![batch, HEAD2_CLASSES, 1], g2);
    let (mut gcut, fog_grads) = backward_stack(model.fog_layers(), &fog_caches, g2);

    let mut head1_grads = Vec::new();
    let mut head1_cache = None;
    if let Some(targets) = head1_targets {
        let (logits1, cache) = model.head1().forward(&cut, Mode::Train, None)?;
        let logits1 = logits1.to_f64_vec();
        let mut g1 = Vec::with_capacity(logits1.len());
        for (b, &target) in targets.iter().enumerate() {
            let (l, g) =
                cross_entropy(&logits1[b * HEAD1_CLASSES..(b + 1) * HEAD1_CLASSES], target);
            loss += l * scale;
            g1.extend(g.into_iter().map(|v| T::cast(v * scale)));
        }
        let (gin, gp) = model
            .head1()
            .backward(&cache, &Tensor::raw(vec![batch, HEAD1_CLASSES, 1], g1));
        for (a, b) in gcut.data_mut().iter_mut().zip(gin.data()) {
            *a = T::cast(a.widen() + b.widen());
        }
        head1_grads = gp;
        head1_cache = Some(cache);
    }
    let (_, trunk_grads) = backward_stack(model.trunk(), &trunk_caches, gcut);

    let mut grads = trunk_grads;
    grads.push(head1_grads);
    grads.extend(fog_grads);
    let mut caches: Vec<Option<Cache<T>>> = trunk_caches.into_iter().map(Some).collect();
    caches.push(head1_cache);
    caches.extend(fog_caches.into_iter().map(Some));
    Ok(BatchPass {
        loss,
        correct,
        grads,
        caches,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn stack_windows(beats: &[&BeatSegment]) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(beats.len() * INPUT_SHAPE.0);
    for b in beats {
        if b.window.len() != INPUT_SHAPE.0 {
            return Err(Error::param(format!(
                "beat window has {} samples, expected {}",
                b.window.len(),
                INPUT_SHAPE.0
            )));
        }
        data.extend(b.window.iter().map(|v| *v as f32));
    }
    Tensor::new(vec![beats.len(), INPUT_SHAPE.0, INPUT_SHAPE.1], data)
}

fn head2_targets(beats: &[BeatSegment]) -> Result<Vec<usize>> {
    beats
        .iter()
        .map(|b| {
            b.label
                .and_then(|l| l.head2_index())
                .ok_or_else(|| Error::param(format!("beat at {} has no N/S/V/F label", b.r_index)))
        })
        .collect()
}

fn class_weights(targets: &[usize], classes: usize, enabled: bool) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &t in targets {
        counts[t] += 1;
    }
    for (c, n) in counts.iter().enumerate() {
        if *n == 0 {
            warn!("class {c} has no training examples");
        }
    }
    if !enabled {
        return vec![1.0; classes];
    }
    counts
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                targets.len() as f64 / (classes * n) as f64
            }
        })
        .collect()
}

const EVAL_CHUNK: usize = 256;

/// Infer-mode head-2 predictions for a list of beats.
pub fn predict_head2(model: &ModelGraph<f32>, beats: &[BeatSegment]) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(beats.len());
    let refs: Vec<&BeatSegment> = beats.iter().collect();
    for chunk in refs.chunks(EVAL_CHUNK) {
        let x = stack_windows(chunk)?;
        let (cut, _) = forward_stack(model.trunk(), &x, Mode::Infer, None)?;
        let (logits, _) = forward_stack(model.fog_layers(), &cut, Mode::Infer, None)?;
        preds.extend(
            logits
                .data()
                .chunks(HEAD2_CLASSES)
                .map(|r| argmax(&r.iter().map(|v| *v as f64).collect::<Vec<_>>())),
        );
    }
    Ok(preds)
}

fn accuracy(preds: &[usize], targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    preds.iter().zip(targets).filter(|(p, t)| p == t).count() as f64 / targets.len() as f64
}

/// Tracks the plateau / early-stopping schedule shared by both trainers.
struct Schedule {
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl Schedule {
    /// Returns `(improved, drop_lr, stop)`.
    fn observe(&mut self, epoch: usize, val_acc: f64, cfg: &TrainConfig) -> (bool, bool, bool) {
        if val_acc > self.best {
            self.best = val_acc;
            self.best_epoch = epoch;
            self.since_best = 0;
            return (true, false, false);
        }
        self.since_best += 1;
        let drop = cfg.plateau_epochs > 0 && self.since_best.is_multiple_of(cfg.plateau_epochs);
        (false, drop, self.since_best >= cfg.early_stop_epochs)
    }
}

/// Trains the full network on head 2 (N, S, V, F). The model is left at the
/// epoch with the best validation accuracy.
pub fn train(
    model: &mut ModelGraph<f32>,
    train_set: &[BeatSegment],
    val_set: &[BeatSegment],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::param(
            "training and validation sets must be non-empty",
        ));
    }
    let targets = head2_targets(train_set)?;
    let val_targets = head2_targets(val_set)?;
    let weights = class_weights(&targets, HEAD2_CLASSES, cfg.class_weighted);
    model.set_dropout(cfg.dropout_p);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut sched = Schedule {
        best: f64::NEG_INFINITY,
        best_epoch: 0,
        since_best: 0,
    };
    let mut best_model = model.clone();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_acc: 0.0,
        stopped_early: false,
    };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for idx in order.chunks(cfg.batch_size) {
            let beats: Vec<&BeatSegment> = idx.iter().map(|&i| &train_set[i]).collect();
            let y: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let x = stack_windows(&beats)?;
            let pass = loss_and_gradients(model, &x, &y, None, &weights, Some(&mut rng))?;
            loss_sum += pass.loss * idx.len() as f64;
            correct += pass.correct;
            adam.tick();
            for (li, (layer, grads)) in model.layers.iter_mut().zip(&pass.grads).enumerate() {
                for (pi, (p, g)) in layer.params.iter_mut().zip(grads).enumerate() {
                    adam.update((li, pi), p, g);
                }
            }
            for (layer, cache) in model.layers.iter_mut().zip(&pass.caches) {
                if let Some(c) = cache {
                    layer.update_running_stats(c);
                }
            }
        }
        let val_acc = accuracy(&predict_head2(model, val_set)?, &val_targets);
        let entry = EpochLog {
            epoch,
            lr: adam.lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc,
        };
        info!(
            "epoch {epoch}: loss {:.4} train acc {:.4} val acc {:.4} lr {:.1e}",
            entry.train_loss, entry.train_acc, val_acc, adam.lr
        );
        log.epochs.push(entry);
        let (improved, drop, stop) = sched.observe(epoch, val_acc, cfg);
        if improved {
            best_model = model.clone();
        }
        if drop {
            adam.lr /= cfg.lr_drop_factor;
        }
        if stop {
            log.stopped_early = true;
            break;
        }
    }
    *model = best_model;
    log.best_epoch = sched.best_epoch;
    log.best_val_acc = sched.best;
    Ok(log)
}

fn edge_features(model: &ModelGraph<f32>, beats: &[BeatSegment]) -> Result<Vec<Tensor<f32>>> {
    let refs: Vec<&BeatSegment> = beats.iter().collect();
    let mut out = Vec::with_capacity(beats.len());
    for chunk in refs.chunks(EVAL_CHUNK) {
        let (cut, _) = forward_stack(model.trunk(), &stack_windows(chunk)?, Mode::Infer, None)?;
        out.extend((0..chunk.len()).map(|i| cut.item(i)));
    }
    Ok(out)
}

/// Trains only head 1 (normal vs abnormal) on the frozen trunk. Every other
/// tensor, including batch-norm running statistics, is left untouched.
pub fn train_edge_head(
    model: &mut ModelGraph<f32>,
    train_set: &[BeatSegment],
    val_set: &[BeatSegment],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::param(
            "training and validation sets must be non-empty",
        ));
    }
    let target = |b: &BeatSegment| {
        b.label
            .map(head1_class_index)
            .ok_or_else(|| Error::param(format!("beat at {} is unlabeled", b.r_index)))
    };
    let targets: Vec<usize> = train_set.iter().map(target).collect::<Result<_>>()?;
    let val_targets: Vec<usize> = val_set.iter().map(target).collect::<Result<_>>()?;
    let weights = class_weights(&targets, HEAD1_CLASSES, cfg.class_weighted);
    let feats = edge_features(model, train_set)?;
    let val_feats = Tensor::stack(&edge_features(model, val_set)?)?;

    let hi = model.head1_index;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut sched = Schedule {
        best: f64::NEG_INFINITY,
        best_epoch: 0,
        since_best: 0,
    };
    let mut best_head = model.layers[hi].clone();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_acc: 0.0,
        stopped_early: false,
    };
    let val_accuracy = |head: &super::Layer<f32>| -> Result<f64> {
        let (logits, _) = head.forward(&val_feats, Mode::Infer, None)?;
        let preds: Vec<usize> = logits
            .data()
            .chunks(HEAD1_CLASSES)
            .map(|r| usize::from(r[1] > r[0]))
            .collect();
        Ok(accuracy(&preds, &val_targets))
    };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<Tensor<f32>> = idx.iter().map(|&i| feats[i].clone()).collect();
            let x = Tensor::stack(&batch)?;
            let head = &mut model.layers[hi];
            let (logits, cache) = head.forward(&x, Mode::Train, None)?;
            let logits = logits.to_f64_vec();
            let scale = 1.0 / idx.len() as f64;
            let mut g = Vec::with_capacity(logits.len());
            for (b, &i) in idx.iter().enumerate() {
                let row = &logits[b * HEAD1_CLASSES..(b + 1) * HEAD1_CLASSES];
                let t = targets[i];
                let (l, gr) = cross_entropy(row, t);
                loss_sum += weights[t] * l;
                correct += usize::from(argmax(row) == t);
                g.extend(gr.into_iter().map(|v| (v * weights[t] * scale) as f32));
            }
            let (_, grads) =
                head.backward(&cache, &Tensor::raw(vec![idx.len(), HEAD1_CLASSES, 1], g));
            adam.tick();
            for (pi, (p, gr)) in head.params.iter_mut().zip(&grads).enumerate() {
                adam.update((hi, pi), p, gr);
            }
        }
        let val_acc = val_accuracy(&model.layers[hi])?;
        log.epochs.push(EpochLog {
            epoch,
            lr: adam.lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc,
        });
        let (improved, drop, stop) = sched.observe(epoch, val_acc, cfg);
        if improved {
            best_head = model.layers[hi].clone();
        }
        if drop {
            adam.lr /= cfg.lr_drop_factor;
        }
        if stop {
            log.stopped_early = true;
            break;
        }
    }
    model.layers[hi] = best_head;
    log.best_epoch = sched.best_epoch;
    log.best_val_acc = sched.best;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_gradient_is_probabilities_minus_onehot() {
        let (loss, g) = cross_entropy(&[0.0, 0.0], 1);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn schedule_drops_then_stops() {
        let cfg = TrainConfig {
            plateau_epochs: 2,
            early_stop_epochs: 5,
            ..TrainConfig::default()
        };
        let mut s = Schedule {
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            since_best: 0,
        };
        assert_eq!(s.observe(1, 0.5, &cfg), (true, false, false));
        assert_eq!(s.observe(2, 0.5, &cfg), (false, false, false));
        assert_eq!(s.observe(3, 0.4, &cfg), (false, true, false));
        s.observe(4, 0.4, &cfg);
        s.observe(5, 0.4, &cfg);
        assert_eq!(s.observe(6, 0.4, &cfg), (false, false, true));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
