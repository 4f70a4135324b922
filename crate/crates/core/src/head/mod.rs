//! Fine-tune head: flatten → dense(8192→256, relu) → dense(256→1, sigmoid),
//! trained with binary cross-entropy.
//!
//! Parameters and all arithmetic are `f64`; persisted tensors are `f32`.

mod model_file;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::Decision;

pub use model_file::{load_head, save_head, TrainedHead, HEAD_SCHEMA_VERSION};
pub use train::{train_head, train_head_with_progress, EpochRecord, Optimizer, TrainConfig, TrainHistory};

/// Probability clamp used by the loss.
pub const LOSS_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadShape {
    pub input: usize,
    pub hidden: usize,
}

impl HeadShape {
    /// 8192 flattened conv features into 256 hidden units.
    pub const STANDARD: HeadShape = HeadShape {
        input: 8192,
        hidden: 256,
    };

    pub const fn layer1_params(self) -> usize {
        self.input * self.hidden + self.hidden
    }

    pub const fn layer2_params(self) -> usize {
        self.hidden + 1
    }
}

impl Default for HeadShape {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Weights of both dense layers. `w1` is row-major `input × hidden`, so
/// `w1[i * hidden + j]` connects input feature `i` to hidden unit `j`.
/// The same struct carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParameters {
    shape: HeadShape,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

pub type HeadGradients = HeadParameters;

impl HeadParameters {
    pub fn zeros(shape: HeadShape) -> Self {
        Self {
            shape,
            w1: vec![0.0; shape.input * shape.hidden],
            b1: vec![0.0; shape.hidden],
            w2: vec![0.0; shape.hidden],
            b2: 0.0,
        }
    }

    pub fn from_parts(shape: HeadShape, w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: f64) -> Result<Self> {
        if w1.len() != shape.input * shape.hidden || b1.len() != shape.hidden || w2.len() != shape.hidden {
            return Err(Error::Dimension(format!(
                "parameter tensors do not match a {}→{}→1 head",
                shape.input, shape.hidden
            )));
        }
        Ok(Self { shape, w1, b1, w2, b2 })
    }

    pub fn shape(&self) -> HeadShape {
        self.shape
    }

    pub fn layer1_param_count(&self) -> usize {
        self.w1.len() + self.b1.len()
    }

    pub fn layer2_param_count(&self) -> usize {
        self.w2.len() + 1
    }

    pub fn param_count(&self) -> usize {
        self.layer1_param_count() + self.layer2_param_count()
    }

    /// `[w1, b1, w2, b2]`
    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, std::slice::from_ref(&self.b2)]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, std::slice::from_mut(&mut self.b2)]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Standard-shape head with Glorot-uniform weights and zero biases.
pub fn init_head(seed: u64) -> HeadParameters {
    init_head_with(HeadShape::STANDARD, seed)
}

pub fn init_head_with(shape: HeadShape, seed: u64) -> HeadParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = HeadParameters::zeros(shape);
    let l1 = (6.0 / (shape.input + shape.hidden) as f64).sqrt();
    p.w1.iter_mut().for_each(|w| *w = rng.random_range(-l1..=l1));
    let l2 = (6.0 / (shape.hidden + 1) as f64).sqrt();
    p.w2.iter_mut().for_each(|w| *w = rng.random_range(-l2..=l2));
    p
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Keeps outputs inside the open interval even when the logit saturates.
fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn check_columns(params: &HeadParameters, features: &FeatureMatrix) -> Result<()> {
    if features.dim() != params.shape.input {
        return Err(Error::Dimension(format!(
            "head expects {} features per row, got {}",
            params.shape.input,
            features.dim()
        )));
    }
    Ok(())
}

/// Hidden pre-activations `x·w1 + b1` for one row.
fn pre_activation(params: &HeadParameters, row: &[f32], out: &mut [f64]) {
    let h = params.shape.hidden;
    out.copy_from_slice(&params.b1);
    for (i, &x) in row.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let x = x as f64;
        let w = &params.w1[i * h..(i + 1) * h];
        for (a, &wij) in out.iter_mut().zip(w) {
            *a += x * wij;
        }
    }
}

fn logit(params: &HeadParameters, pre: &[f64]) -> f64 {
    params.b2
        + pre
            .iter()
            .zip(&params.w2)
            .map(|(&a, &w)| a.max(0.0) * w)
            .sum::<f64>()
}

struct Forward {
    /// `rows × hidden`
    pre: Vec<f64>,
    /// Unclamped sigmoid outputs.
    probs: Vec<f64>,
}

fn forward_pass(params: &HeadParameters, features: &FeatureMatrix) -> Forward {
    let h = params.shape.hidden;
    let n = features.rows();
    let mut pre = vec![0.0; n * h];
    let mut probs = vec![0.0; n];
    pre.par_chunks_mut(h.max(1))
        .zip(probs.par_iter_mut())
        .enumerate()
        .for_each(|(r, (a, p))| {
            pre_activation(params, features.row(r), a);
            *p = sigmoid(logit(params, a));
        });
    Forward { pre, probs }
}

/// Per-row probability of the positive class, each strictly inside (0, 1).
pub fn head_forward(params: &HeadParameters, features: &FeatureMatrix) -> Result<Vec<f64>> {
    check_columns(params, features)?;
    Ok(forward_pass(params, features).probs.into_iter().map(open_unit).collect())
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1-ε]`.
pub fn bce_loss(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.is_empty() || labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities, {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Mean BCE over the batch together with its exact gradient.
pub fn loss_and_gradients(
    params: &HeadParameters,
    features: &FeatureMatrix,
    labels: &[bool],
) -> Result<(f64, HeadGradients)> {
    check_columns(params, features)?;
    if features.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if labels.len() != features.rows() {
        return Err(Error::Dimension(format!(
            "{} rows, {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let HeadShape { input, hidden: h } = params.shape;
    let n = features.rows();
    let fwd = forward_pass(params, features);
    let loss = bce_loss(&fwd.probs, labels)?;

    let dz: Vec<f64> = fwd
        .probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - if y { 1.0 } else { 0.0 }) / n as f64)
        .collect();

    let mut g = HeadParameters::zeros(params.shape);
    g.b2 = dz.iter().sum();
    // gradient wrt pre-activations; relu'(0) = 0
    let mut dpre = vec![0.0; n * h];
    for r in 0..n {
        let a = &fwd.pre[r * h..(r + 1) * h];
        let d = &mut dpre[r * h..(r + 1) * h];
        for j in 0..h {
            if a[j] > 0.0 {
                g.w2[j] += dz[r] * a[j];
                d[j] = dz[r] * params.w2[j];
            }
        }
    }
    for r in 0..n {
        for (gb, &d) in g.b1.iter_mut().zip(&dpre[r * h..(r + 1) * h]) {
            *gb += d;
        }
    }
    g.w1.par_chunks_mut(h.max(1))
        .take(input)
        .enumerate()
        .for_each(|(i, gi)| {
            for r in 0..n {
                let x = features.row(r)[i];
                if x == 0.0 {
                    continue;
                }
                let x = x as f64;
                for (gij, &d) in gi.iter_mut().zip(&dpre[r * h..(r + 1) * h]) {
                    *gij += x * d;
                }
            }
        });
    Ok((loss, g))
}

pub fn head_gradients(params: &HeadParameters, features: &FeatureMatrix, labels: &[bool]) -> Result<HeadGradients> {
    loss_and_gradients(params, features, labels).map(|(_, g)| g)
}

/// Thresholds `head_forward` probabilities; a probability equal to the
/// cutoff is positive.
pub fn predict(params: &HeadParameters, features: &FeatureMatrix, cutoff: f64) -> Result<(Vec<Decision>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::Config(format!("cutoff {cutoff} outside [0, 1]")));
    }
    let probs = head_forward(params, features)?;
    let labels = probs.iter().map(|&p| Decision::at_cutoff(p, cutoff)).collect();
    Ok((labels, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: HeadShape = HeadShape { input: 6, hidden: 4 };

    fn rows(seed: u64, n: usize, dim: usize) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        FeatureMatrix::from_flat(dim, data).unwrap()
    }

    #[test]
    fn standard_parameter_counts() {
        let p = init_head(0);
        assert_eq!(p.layer1_param_count(), 2_097_408);
        assert_eq!(p.layer2_param_count(), 257);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_head_with(SMALL, 7);
        assert_eq!(a, init_head_with(SMALL, 7));
        assert_ne!(a, init_head_with(SMALL, 8));
        assert!(a.b1.iter().all(|&b| b == 0.0));
        assert_eq!(a.b2, 0.0);
        let limit = (6.0 / 10.0f64).sqrt();
        assert!(a.w1.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn zero_params_give_one_half() {
        let p = HeadParameters::zeros(SMALL);
        let probs = head_forward(&p, &rows(1, 3, 6)).unwrap();
        assert_eq!(probs, [0.5; 3]);
    }

    #[test]
    fn identical_rows_identical_probs() {
        let p = init_head_with(SMALL, 1);
        let r = rows(2, 1, 6);
        let m = FeatureMatrix::from_rows(6, &[r.row(0), r.row(0)]).unwrap();
        let probs = head_forward(&p, &m).unwrap();
        assert_eq!(probs[0], probs[1]);
    }

    #[test]
    fn wrong_width_is_dimension_error() {
        let p = init_head(0);
        let m = FeatureMatrix::from_flat(4096, vec![0.0; 4096]).unwrap();
        assert!(matches!(head_forward(&p, &m), Err(Error::Dimension(_))));
    }

    #[test]
    fn saturated_logits_stay_open() {
        let mut p = HeadParameters::zeros(SMALL);
        p.b2 = 800.0;
        let hi = head_forward(&p, &rows(1, 1, 6)).unwrap()[0];
        p.b2 = -800.0;
        let lo = head_forward(&p, &rows(1, 1, 6)).unwrap()[0];
        assert!(hi < 1.0 && hi > 0.5);
        assert!(lo > 0.0 && lo < 0.5);
    }

    #[test]
    fn loss_examples() {
        assert!((bce_loss(&[0.5], &[true]).unwrap() - 0.693147).abs() < 1e-6);
        assert!(bce_loss(&[1.0 - LOSS_EPSILON], &[true]).unwrap() < 1e-6);
        assert!((bce_loss(&[0.5, 0.5], &[false, true]).unwrap() - 0.693147).abs() < 1e-6);
        assert!(matches!(bce_loss(&[], &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn loss_is_clamped() {
        let l = bce_loss(&[0.0], &[true]).unwrap();
        assert!((l - -(LOSS_EPSILON.ln())).abs() < 1e-9);
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let mut p = init_head_with(SMALL, 3);
        p.b1.iter_mut().enumerate().for_each(|(j, b)| *b = 0.1 * j as f64 - 0.1);
        let x = rows(4, 5, 6);
        let y = [true, false, true, true, false];
        let g1 = head_gradients(&p, &x, &y).unwrap();
        let idx: Vec<usize> = (0..5).chain(0..5).collect();
        let y2: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
        let g2 = head_gradients(&p, &x.select(&idx), &y2).unwrap();
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (u, v) in a.iter().zip(b.iter()) {
                assert!((u - v).abs() <= 1e-15 + 1e-12 * u.abs(), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn small_head_matches_finite_differences() {
        let mut p = init_head_with(SMALL, 11);
        p.b1 = vec![0.05, -0.02, 0.3, 0.1];
        p.b2 = -0.2;
        let x = rows(12, 4, 6);
        let y = [true, false, false, true];
        let g = head_gradients(&p, &x, &y).unwrap();
        let loss = |q: &HeadParameters| bce_loss(&head_forward(q, &x).unwrap(), &y).unwrap();
        let h = 1e-5;
        for t in 0..4 {
            for k in 0..p.tensors()[t].len() {
                let mut plus = p.clone();
                plus.tensors_mut()[t][k] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[t][k] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = g.tensors()[t][k];
                assert!((fd - an).abs() <= 1e-7 + 1e-5 * an.abs(), "tensor {t} [{k}]: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn prediction_boundary() {
        let p = HeadParameters::zeros(SMALL);
        let x = rows(1, 2, 6);
        let (labels, probs) = predict(&p, &x, 0.5).unwrap();
        assert_eq!(probs, [0.5, 0.5]);
        assert_eq!(labels, [Decision::Positive; 2]);
        let (labels, _) = predict(&init_head_with(SMALL, 2), &x, 0.0).unwrap();
        assert_eq!(labels, [Decision::Positive; 2]);
        let (labels, _) = predict(&init_head_with(SMALL, 2), &x, 1.0).unwrap();
        assert_eq!(labels, [Decision::Negative; 2]);
        assert!(predict(&p, &x, 1.5).is_err());
    }
}
