use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce_loss, head_forward, init_head_with, loss_and_gradients, HeadGradients, HeadParameters, HeadShape};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// SGD momentum coefficient.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub validation_fraction: f64,
    pub hidden_units: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::SgdMomentum,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            validation_fraction: 0.2,
            hidden_units: HeadShape::STANDARD.hidden,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

enum State {
    Sgd { velocity: HeadParameters },
    Adam { m: HeadParameters, v: HeadParameters, t: i32 },
}

impl State {
    fn new(config: &TrainConfig, shape: HeadShape) -> Self {
        match config.optimizer {
            Optimizer::SgdMomentum => State::Sgd {
                velocity: HeadParameters::zeros(shape),
            },
            Optimizer::Adam => State::Adam {
                m: HeadParameters::zeros(shape),
                v: HeadParameters::zeros(shape),
                t: 0,
            },
        }
    }

    fn step(&mut self, config: &TrainConfig, params: &mut HeadParameters, grads: &HeadGradients) {
        let lr = config.learning_rate;
        match self {
            State::Sgd { velocity } => {
                let mu = config.momentum;
                for ((p, v), g) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(velocity.tensors_mut())
                    .zip(grads.tensors())
                {
                    for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                        *v = mu * *v - lr * g;
                        *p += *v;
                    }
                }
            }
            State::Adam { m, v, t } => {
                *t += 1;
                let (b1, b2, eps) = (config.beta1, config.beta2, config.adam_epsilon);
                let c1 = 1.0 - b1.powi(*t);
                let c2 = 1.0 - b2.powi(*t);
                for (((p, m), v), g) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut())
                    .zip(grads.tensors())
                {
                    for (((p, m), v), g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

fn has_both_classes(labels: &[bool], idx: &[usize]) -> bool {
    idx.iter().any(|&i| labels[i]) && idx.iter().any(|&i| !labels[i])
}

pub fn train_head(
    features: &FeatureMatrix,
    labels: &[bool],
    config: &TrainConfig,
) -> Result<(HeadParameters, TrainHistory)> {
    train_head_with_progress(features, labels, config, |_| {})
}

/// Seeded minibatch training. `on_epoch` sees each record as it completes.
///
/// Initialization, the validation split, and per-epoch shuffles are all
/// derived from `config.seed`, so identical inputs give bit-identical output.
pub fn train_head_with_progress(
    features: &FeatureMatrix,
    labels: &[bool],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(HeadParameters, TrainHistory)> {
    config.validate()?;
    if features.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows, {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    if !has_both_classes(labels, &all) {
        return Err(Error::DegenerateData(
            "training data must contain both positive and negative examples".into(),
        ));
    }
    let shape = HeadShape {
        input: features.dim(),
        hidden: config.hidden_units,
    };
    let mut params = init_head_with(shape, config.seed);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order = all;
    order.shuffle(&mut rng);
    let n_val = (config.validation_fraction * order.len() as f64).round() as usize;
    let (val, train) = order.split_at(n_val.min(order.len() - 1));
    let (val, mut train) = (val.to_vec(), train.to_vec());
    if !has_both_classes(labels, &train) {
        return Err(Error::DegenerateData(
            "training split lacks one class; lower validation_fraction or add examples".into(),
        ));
    }
    if config.batch_size > train.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {} training examples",
            config.batch_size,
            train.len()
        )));
    }
    let val_x = features.select(&val);
    let val_y: Vec<bool> = val.iter().map(|&i| labels[i]).collect();

    let mut state = State::new(config, shape);
    let mut history = TrainHistory::default();
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train.chunks(config.batch_size) {
            let x = features.select(batch);
            let y: Vec<bool> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = loss_and_gradients(&params, &x, &y)?;
            total += loss * batch.len() as f64;
            state.step(config, &mut params, &grads);
        }
        if !params.is_finite() {
            return Err(Error::DegenerateData(format!(
                "parameters diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        let (validation_loss, validation_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let probs = head_forward(&params, &val_x)?;
            let correct = probs
                .iter()
                .zip(&val_y)
                .filter(|(&p, &y)| (p >= 0.5) == y)
                .count();
            (
                Some(bce_loss(&probs, &val_y)?),
                Some(correct as f64 / val.len() as f64),
            )
        };
        let record = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            validation_loss,
            validation_accuracy,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok((params, history))
}
