//! Linear probability head over frozen embeddings.
//!
//! Two classes use a single sigmoid unit; more classes use a softmax layer.
//! Training is mini-batch gradient descent on mean cross-entropy with a
//! linearly decaying learning rate and early stopping on validation loss.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledExample;
use crate::error::{Error, Result};
use crate::seeded_rng;

pub const MODEL_VERSION: u32 = 1;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` inside the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub classes: Vec<String>,
    pub dim: usize,
    /// `units x dim`; one unit for binary models.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub decision_threshold: f64,
    pub normalized_inputs: bool,
    pub trained_epochs: usize,
}

impl TopicModel {
    pub fn is_binary(&self) -> bool {
        self.weights.len() == 1
    }

    pub fn units(&self) -> usize {
        self.weights.len()
    }

    fn check_input(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input vector".into()));
        }
        Ok(())
    }

    fn logits(&self, x: &[f32]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| {
                w.iter()
                    .zip(x)
                    .map(|(wi, &xi)| wi * f64::from(xi))
                    .sum::<f64>()
                    + b
            })
            .collect()
    }

    fn probabilities(&self, x: &[f32]) -> Vec<f64> {
        let z = self.logits(x);
        if self.is_binary() {
            let p = sigmoid(z[0]);
            vec![1.0 - p, p]
        } else {
            softmax(&z)
        }
    }

    fn parameters_finite(&self) -> bool {
        self.weights
            .iter()
            .flatten()
            .chain(&self.bias)
            .all(|v| v.is_finite())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_epochs: 200,
            patience: 2,
            batch_size: 256,
            seed: 1234,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "max_epochs, patience and batch_size must all be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate for 1-based `epoch`, decaying linearly to zero at
    /// `max_epochs`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let done = (epoch - 1) as f64 / self.max_epochs as f64;
        self.learning_rate * (1.0 - done)
    }
}

/// Uniform weights in `[-1/sqrt(dim), 1/sqrt(dim)]`, zero bias.
pub fn init_model(dim: usize, classes: &[String], seed: u64) -> Result<TopicModel> {
    if dim == 0 {
        return Err(Error::ZeroDim);
    }
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a classifier needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let units = if classes.len() == 2 { 1 } else { classes.len() };
    let bound = 1.0 / (dim as f64).sqrt();
    let mut rng = seeded_rng(seed);
    let weights = (0..units)
        .map(|_| (0..dim).map(|_| rng.random_range(-bound..=bound)).collect())
        .collect();
    Ok(TopicModel {
        classes: classes.to_vec(),
        dim,
        weights,
        bias: vec![0.0; units],
        decision_threshold: 0.5,
        normalized_inputs: false,
        trained_epochs: 0,
    })
}

/// Class probabilities for `x`, in class order.
pub fn forward(model: &TopicModel, x: &[f32]) -> Result<Vec<f64>> {
    model.check_input(x)?;
    Ok(model.probabilities(x))
}

fn check_batch(model: &TopicModel, batch: &[LabeledExample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for ex in batch {
        model.check_input(&ex.vector)?;
        if ex.label >= model.classes.len() {
            return Err(Error::InvalidArgument(format!(
                "label {} outside {} classes",
                ex.label,
                model.classes.len()
            )));
        }
    }
    Ok(())
}

/// Mean of `-ln q(y|x)` over the batch.
pub fn loss(model: &TopicModel, batch: &[LabeledExample]) -> Result<f64> {
    check_batch(model, batch)?;
    let total: f64 = batch
        .iter()
        .map(|ex| {
            let q = model.probabilities(&ex.vector)[ex.label];
            -q.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln()
        })
        .sum();
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .flatten()
            .chain(&self.bias)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Analytic gradient of [`loss`] with respect to weights and bias.
pub fn grad(model: &TopicModel, batch: &[LabeledExample]) -> Result<Gradient> {
    check_batch(model, batch)?;
    let units = model.units();
    let n = batch.len() as f64;
    let mut gw = vec![vec![0.0; model.dim]; units];
    let mut gb = vec![0.0; units];
    for ex in batch {
        let probs = model.probabilities(&ex.vector);
        // d loss / d logit for each unit
        let delta: Vec<f64> = if model.is_binary() {
            vec![probs[1] - if ex.label == 1 { 1.0 } else { 0.0 }]
        } else {
            probs
                .iter()
                .enumerate()
                .map(|(c, q)| q - if c == ex.label { 1.0 } else { 0.0 })
                .collect()
        };
        for (u, d) in delta.iter().enumerate() {
            let d = d / n;
            gb[u] += d;
            for (g, &x) in gw[u].iter_mut().zip(&ex.vector) {
                *g += d * f64::from(x);
            }
        }
    }
    Ok(Gradient {
        weights: gw,
        bias: gb,
    })
}

fn apply_step(model: &mut TopicModel, g: &Gradient, lr: f64) {
    for (w, gw) in model.weights.iter_mut().zip(&g.weights) {
        for (wi, gi) in w.iter_mut().zip(gw) {
            *wi -= lr * gi;
        }
    }
    for (b, gb) in model.bias.iter_mut().zip(&g.bias) {
        *b -= lr * gb;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Patience counter over a validation-loss sequence.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records the loss for `epoch`; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

pub fn train(
    model: TopicModel,
    train_set: &[LabeledExample],
    val_set: &[LabeledExample],
    config: &TrainConfig,
) -> Result<(TopicModel, TrainHistory)> {
    check_batch(&model, val_set)?;
    train_with_monitor(model, train_set, config, |m| loss(m, val_set))
}

/// Training loop with a caller-supplied validation loss.
pub fn train_with_monitor<F>(
    mut model: TopicModel,
    train_set: &[LabeledExample],
    config: &TrainConfig,
    mut val_loss: F,
) -> Result<(TopicModel, TrainHistory)>
where
    F: FnMut(&TopicModel) -> Result<f64>,
{
    config.validate()?;
    check_batch(&model, train_set)?;
    let mut rng = seeded_rng(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size.min(train_set.len()));
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();

    for epoch in 1..=config.max_epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let g = grad(&model, &batch)?;
            apply_step(&mut model, &g, lr);
        }
        let train_loss = loss(&model, train_set)?;
        let val = val_loss(&model)?;
        if !train_loss.is_finite() || !val.is_finite() || !model.parameters_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss,
            val_loss: val,
        });
        if stopper.observe(epoch, val) {
            best = model.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }

    let stopped_early = epochs.len() < config.max_epochs;
    best.trained_epochs = stopper.best_epoch();
    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch: stopper.best_epoch(),
            best_val_loss: stopper.best_loss(),
            stopped_early,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub class_index: usize,
    pub class: String,
    /// Probability of the predicted class.
    pub probability: f64,
}

/// Binary models predict the second class iff `p >= decision_threshold`;
/// multi-class models take the argmax, lowest index on ties.
pub fn predict(model: &TopicModel, x: &[f32]) -> Result<Prediction> {
    let probs = forward(model, x)?;
    let class_index = if model.is_binary() {
        usize::from(probs[1] >= model.decision_threshold)
    } else {
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        best
    };
    Ok(Prediction {
        class_index,
        class: model.classes[class_index].clone(),
        probability: probs[class_index],
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    classes: Vec<String>,
    dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    decision_threshold: f64,
    normalized_inputs: bool,
    trained_epochs: usize,
}

pub fn model_to_json(model: &TopicModel) -> String {
    let file = ModelFile {
        version: MODEL_VERSION,
        classes: model.classes.clone(),
        dim: model.dim,
        weights: model.weights.clone(),
        bias: model.bias.clone(),
        decision_threshold: model.decision_threshold,
        normalized_inputs: model.normalized_inputs,
        trained_epochs: model.trained_epochs,
    };
    serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
}

pub fn model_from_json(text: &str) -> Result<TopicModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
    if let Some(v) = value.get("version").and_then(serde_json::Value::as_u64) {
        if v != u64::from(MODEL_VERSION) {
            return Err(Error::ModelVersion(v as u32));
        }
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::MalformedModel(e.to_string()))?;
    let model = TopicModel {
        classes: file.classes,
        dim: file.dim,
        weights: file.weights,
        bias: file.bias,
        decision_threshold: file.decision_threshold,
        normalized_inputs: file.normalized_inputs,
        trained_epochs: file.trained_epochs,
    };
    let expected_units = if model.classes.len() == 2 {
        1
    } else {
        model.classes.len()
    };
    if model.classes.len() < 2
        || model.dim == 0
        || model.weights.len() != expected_units
        || model.bias.len() != expected_units
        || model.weights.iter().any(|w| w.len() != model.dim)
    {
        return Err(Error::MalformedModel(
            "parameter shapes do not match classes and dim".into(),
        ));
    }
    if !model.parameters_finite() || !(0.0..=1.0).contains(&model.decision_threshold) {
        return Err(Error::MalformedModel(
            "non-finite or out-of-range parameter".into(),
        ));
    }
    Ok(model)
}

pub fn save_model(model: &TopicModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TopicModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
