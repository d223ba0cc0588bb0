use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::features::{FeatureHasher, DEFAULT_FEATURE_DIM};
use super::layer::{DenseLayer, LoraAdapter, TrainMode};
use super::model::Classifier;
use crate::error::{Error, Result};
use crate::label::RelevanceLabel;
use crate::metrics::{f1_scores, ConfusionMatrix3};
use crate::rng::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    Constant,
    ReduceOnPlateau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    /// Indexed by label value.
    pub class_weights: [f64; 3],
    pub scheduler: Scheduler,
    pub plateau_min_delta: f64,
    pub plateau_factor: f64,
    /// Validate after every this fraction of the training split.
    pub validation_every: f64,
    pub seed: u64,
    pub rank: usize,
    pub alpha: f64,
    pub lora_dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub feature_dim: usize,
    pub weight_decay: f64,
    /// Half-width of the uniform base-layer initialisation.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Lora,
            learning_rate: 5.0,
            class_weights: [1.0, 1.0, 1.0],
            scheduler: Scheduler::ReduceOnPlateau,
            plateau_min_delta: 0.001,
            plateau_factor: 0.5,
            validation_every: 0.1,
            seed: 0,
            rank: 4,
            alpha: 4.0,
            lora_dropout: 0.0,
            batch_size: 16,
            epochs: 5,
            validation_fraction: 0.2,
            feature_dim: DEFAULT_FEATURE_DIM,
            weight_decay: 0.0,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be positive"))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("validation_every", self.validation_every)?;
        positive("alpha", self.alpha)?;
        for w in self.class_weights {
            positive("class_weights", w)?;
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::invalid("plateau_factor", "must lie in (0, 1)"));
        }
        if !self.plateau_min_delta.is_finite() {
            return Err(Error::invalid("plateau_min_delta", "must be finite"));
        }
        if self.validation_every > 1.0 {
            return Err(Error::invalid("validation_every", "must not exceed 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction", "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.lora_dropout) {
            return Err(Error::invalid("lora_dropout", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay", "must be non-negative"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::invalid("init_scale", "must be non-negative"));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.feature_dim == 0 || self.rank == 0 {
            return Err(Error::invalid(
                "config",
                "batch_size, epochs, feature_dim and rank must be positive",
            ));
        }
        Ok(())
    }
}

/// Reduce-on-plateau rule: after each validation, multiply the learning
/// rate by `factor` when the metric improved on the best seen so far by less
/// than `min_delta`. The first observation only sets the baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub min_delta: f64,
    pub factor: f64,
    best: Option<f64>,
}

impl PlateauScheduler {
    pub fn new(min_delta: f64, factor: f64) -> Self {
        PlateauScheduler {
            min_delta,
            factor,
            best: None,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records `metric`; returns true when the learning rate should drop.
    pub fn observe(&mut self, metric: f64) -> bool {
        match self.best {
            None => {
                self.best = Some(metric);
                false
            }
            Some(best) => {
                self.best = Some(best.max(metric));
                metric - best < self.min_delta
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Optimiser steps taken so far.
    pub step: usize,
    /// Learning rate after this validation's adjustment.
    pub lr: f64,
    pub val_micro_f1: f64,
    pub reduced: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: Classifier,
    pub history: Vec<HistoryEntry>,
    pub final_val_micro_f1: f64,
    pub train_size: usize,
    pub validation_size: usize,
}

/// Hashes `samples` into features and trains from a seeded random base.
pub fn train(samples: &[(String, RelevanceLabel)], config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let hasher = FeatureHasher::new(config.feature_dim);
    let texts: Vec<&str> = samples.iter().map(|(t, _)| t.as_str()).collect();
    let xs = hasher.transform_batch(&texts);
    let ys: Vec<RelevanceLabel> = samples.iter().map(|(_, y)| *y).collect();
    let base = DenseLayer::random(3, config.feature_dim, config.init_scale, config.seed);
    train_with_base(&xs, &ys, base, config)
}

fn micro_f1(model: &Classifier, xs: &Array2<f64>, ys: &[RelevanceLabel]) -> Result<f64> {
    let predicted = model.predict_batch(xs);
    let cm = ConfusionMatrix3::from_pairs(ys.iter().copied().zip(predicted));
    Ok(f1_scores(&cm)?.micro)
}

/// Trains on precomputed features. In LoRA mode `base` stays frozen.
pub fn train_with_base(
    xs: &Array2<f64>,
    ys: &[RelevanceLabel],
    base: DenseLayer,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    if xs.nrows() != ys.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} labels",
            xs.nrows(),
            ys.len()
        )));
    }
    if base.d_in() != xs.ncols() || base.d_out() != 3 {
        return Err(Error::Dimension(
            "base layer must map the feature dimension to 3 classes".into(),
        ));
    }

    let n = ys.len();
    let mut order: Vec<usize> = (0..n).collect();
    SeedStream::new(config.seed, "split", 0).shuffle(&mut order);
    let n_val = ((n as f64 * config.validation_fraction).round() as usize)
        .clamp(1, n.saturating_sub(1).max(1));
    if n < 2 {
        return Err(Error::invalid("dataset", "need at least two samples"));
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut present = [false; 3];
    for &i in train_idx {
        present[ys[i].index()] = true;
    }
    if present.iter().any(|p| !p) {
        return Err(Error::invalid(
            "dataset",
            "training split must contain all three classes",
        ));
    }
    let val_x = xs.select(Axis(0), val_idx);
    let val_y: Vec<RelevanceLabel> = val_idx.iter().map(|&i| ys[i]).collect();

    let mut model = match config.mode {
        TrainMode::Full => Classifier::full(base),
        TrainMode::Lora => {
            let adapter = LoraAdapter::new(
                xs.ncols(),
                3,
                config.rank,
                config.alpha,
                config.lora_dropout,
                config.seed,
            )?;
            Classifier::lora(base, adapter)?
        }
    };

    let interval = ((config.validation_every * train_idx.len() as f64).ceil() as usize).max(1);
    let mut next_validation = interval;
    let mut seen = 0usize;
    let mut step = 0usize;
    let mut lr = config.learning_rate;
    let mut scheduler = PlateauScheduler::new(config.plateau_min_delta, config.plateau_factor);
    let mut history = Vec::new();
    let mut dropout = SeedStream::new(config.seed, "lora_dropout", 0);
    let mut train_order = train_idx.to_vec();

    for epoch in 0..config.epochs {
        SeedStream::new(config.seed, "epoch", epoch as u64).shuffle(&mut train_order);
        for chunk in train_order.chunks(config.batch_size) {
            let bx = xs.select(Axis(0), chunk);
            let by: Vec<RelevanceLabel> = chunk.iter().map(|&i| ys[i]).collect();
            let masked = match (&model.adapter, config.mode) {
                (Some(adapter), TrainMode::Lora) if adapter.dropout_rate > 0.0 => {
                    let p = adapter.dropout_rate;
                    let keep = 1.0 / (1.0 - p);
                    Some(bx.mapv(|v| {
                        if dropout.next_f64() < p {
                            0.0
                        } else {
                            v * keep
                        }
                    }))
                }
                _ => None,
            };
            let (_, grads) =
                model.loss_and_gradients(&bx, &by, &config.class_weights, masked.as_ref());
            model.apply_gradients(&grads, lr, config.weight_decay);
            step += 1;
            seen += chunk.len();
            while seen >= next_validation {
                next_validation += interval;
                let f1 = micro_f1(&model, &val_x, &val_y)?;
                let reduced =
                    config.scheduler == Scheduler::ReduceOnPlateau && scheduler.observe(f1);
                if reduced {
                    lr *= config.plateau_factor;
                    log::debug!(
                        "step {step}: validation micro f1 {f1:.4}, learning rate reduced to {lr}"
                    );
                }
                history.push(HistoryEntry {
                    step,
                    lr,
                    val_micro_f1: f1,
                    reduced,
                });
            }
        }
    }

    let final_val_micro_f1 = micro_f1(&model, &val_x, &val_y)?;
    Ok(TrainOutput {
        model,
        history,
        final_val_micro_f1,
        train_size: train_idx.len(),
        validation_size: n_val,
    })
}
