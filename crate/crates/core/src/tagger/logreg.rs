//! One binary logistic-regression classifier per label.
//!
//! Training minimizes the mean log loss plus `l2 / 2 * ||w||^2` (the bias is
//! not regularized) with seeded mini-batch gradient descent. Only features
//! that occur in the label's training data can receive non-zero weight, so
//! each model is trained over a compact local index and stored sparse.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainHyper<T> {
    pub l2: T,
    pub lr: T,
    /// Learning rate at epoch `e` is `lr / (1 + lr_decay * e)`.
    pub lr_decay: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub min_positives: usize,
}

impl<T: Scalar> Default for TrainHyper<T> {
    fn default() -> Self {
        TrainHyper {
            l2: T::of(1e-4),
            lr: T::of(2.0),
            lr_decay: T::of(0.2),
            epochs: 20,
            batch_size: 32,
            seed: 0,
            min_positives: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub positives: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Regularized mean log loss over the training data after the last epoch.
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabelModel<T> {
    pub term: String,
    pub dim: usize,
    /// Non-zero weights sorted by feature index.
    pub weights: Vec<(u32, T)>,
    pub bias: T,
    pub l2: T,
    pub meta: TrainMeta,
}

impl<T: Scalar> LabelModel<T> {
    /// A model with all-zero weights.
    pub fn zero(term: impl Into<String>, dim: usize) -> Self {
        LabelModel {
            term: term.into(),
            dim,
            weights: Vec::new(),
            bias: T::zero(),
            l2: T::zero(),
            meta: TrainMeta {
                positives: 0,
                negatives: 0,
                epochs: 0,
                final_loss: f64::NAN,
            },
        }
    }

    pub fn weight(&self, index: u32) -> T {
        self.weights
            .binary_search_by_key(&index, |w| w.0)
            .map_or(T::zero(), |i| self.weights[i].1)
    }

    pub fn margin(&self, fv: &FeatureVector<T>) -> Result<T> {
        if fv.dim() != self.dim {
            return Err(Error::DimMismatch {
                model: self.dim,
                vector: fv.dim(),
            });
        }
        Ok(fv
            .entries()
            .iter()
            .fold(self.bias, |acc, &(i, x)| acc + self.weight(i) * x))
    }
}

/// `sigmoid(w . x + b)`.
pub fn predict_prob<T: Scalar>(model: &LabelModel<T>, fv: &FeatureVector<T>) -> Result<T> {
    model.margin(fv).map(sigmoid)
}

/// Training examples for one label.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub x: &'a FeatureVector<T>,
    pub positive: bool,
}

fn target<T: Scalar>(positive: bool) -> T {
    if positive {
        T::one()
    } else {
        T::zero()
    }
}

/// Regularized log loss over dense weights; used for diagnostics and
/// gradient checking.
#[derive(Debug, Clone)]
pub struct LogisticObjective<'a, T> {
    pub examples: Vec<Example<'a, T>>,
    pub l2: T,
}

impl<'a, T: Scalar> LogisticObjective<'a, T> {
    fn margin(weights: &[T], bias: T, x: &FeatureVector<T>) -> T {
        x.entries()
            .iter()
            .fold(bias, |acc, &(i, v)| acc + weights[i as usize] * v)
    }

    pub fn loss(&self, weights: &[T], bias: T) -> T {
        let n = T::of_usize(self.examples.len());
        let data: T = self
            .examples
            .iter()
            .map(|e| {
                let z = Self::margin(weights, bias, e.x);
                softplus(z) - target::<T>(e.positive) * z
            })
            .sum();
        let reg: T = weights.iter().map(|&w| w * w).sum();
        data / n + self.l2 * reg / T::of(2.0)
    }

    /// Returns `(d loss / d weights, d loss / d bias)`.
    pub fn gradient(&self, weights: &[T], bias: T) -> (Vec<T>, T) {
        let residuals = batch_residuals(&self.examples, |x| Self::margin(weights, bias, x));
        let mut grad: Vec<T> = weights.iter().map(|&w| self.l2 * w).collect();
        let mut grad_bias = T::zero();
        for (e, r) in self.examples.iter().zip(&residuals) {
            for &(i, v) in e.x.entries() {
                grad[i as usize] = grad[i as usize] + *r * v;
            }
            grad_bias = grad_bias + *r;
        }
        (grad, grad_bias)
    }
}

/// `(sigmoid(margin) - y) / batch_len` per example: the data-term gradient
/// coefficient of each example.
fn batch_residuals<T: Scalar>(
    batch: &[Example<'_, T>],
    margin: impl Fn(&FeatureVector<T>) -> T,
) -> Vec<T> {
    let n = T::of_usize(batch.len().max(1));
    batch
        .iter()
        .map(|e| (sigmoid(margin(e.x)) - target::<T>(e.positive)) / n)
        .collect()
}

/// Fits one label's classifier; deterministic given `hyper.seed`.
pub fn train_label_model<T: Scalar>(
    term: &str,
    positives: &[FeatureVector<T>],
    negatives: &[FeatureVector<T>],
    hyper: &TrainHyper<T>,
) -> Result<LabelModel<T>> {
    let fail = |message: String| Error::Training {
        term: term.to_string(),
        message,
    };
    if positives.len() < hyper.min_positives.max(1) {
        return Err(fail(format!(
            "{} positive examples, need at least {}",
            positives.len(),
            hyper.min_positives.max(1)
        )));
    }
    if negatives.len() < positives.len() {
        return Err(fail(format!(
            "{} negative examples for {} positives",
            negatives.len(),
            positives.len()
        )));
    }
    if hyper.batch_size == 0 || hyper.lr <= T::zero() || hyper.l2 < T::zero() {
        return Err(Error::Config("invalid logistic regression hyperparameters".into()));
    }
    let dim = positives[0].dim();
    if let Some(bad) = positives.iter().chain(negatives).find(|x| x.dim() != dim) {
        return Err(Error::DimMismatch {
            model: dim,
            vector: bad.dim(),
        });
    }

    // Compact local index over the features that occur in the data.
    let mut global: Vec<u32> = positives
        .iter()
        .chain(negatives)
        .flat_map(|x| x.entries().iter().map(|e| e.0))
        .collect();
    global.sort_unstable();
    global.dedup();
    let local_of: HashMap<u32, usize> = global.iter().enumerate().map(|(l, &g)| (g, l)).collect();
    let local: Vec<FeatureVector<T>> = positives
        .iter()
        .chain(negatives)
        .map(|x| FeatureVector::from_pairs(
            global.len().max(1),
            x.entries().iter().map(|&(g, v)| (local_of[&g] as u32, v)),
        ))
        .collect::<Result<_>>()?;
    let mut examples: Vec<Example<'_, T>> = local
        .iter()
        .enumerate()
        .map(|(i, x)| Example {
            x,
            positive: i < positives.len(),
        })
        .collect();

    // Effective weights are `scale * v`; weight decay only touches `scale`.
    let mut v = vec![T::zero(); global.len().max(1)];
    let mut scale = T::one();
    let mut bias = T::zero();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);

    for epoch in 0..hyper.epochs {
        let lr = hyper.lr / (T::one() + hyper.lr_decay * T::of_usize(epoch));
        let decay = T::one() - lr * hyper.l2;
        if decay <= T::zero() {
            return Err(fail("learning rate times l2 must stay below 1".into()));
        }
        examples.shuffle(&mut rng);
        for batch in examples.chunks(hyper.batch_size) {
            let residuals = batch_residuals(batch, |x| {
                x.entries()
                    .iter()
                    .fold(T::zero(), |acc, &(i, val)| acc + v[i as usize] * val)
                    * scale
                    + bias
            });
            scale = scale * decay;
            for (e, &r) in batch.iter().zip(&residuals) {
                let step = lr * r / scale;
                for &(i, val) in e.x.entries() {
                    v[i as usize] = v[i as usize] - step * val;
                }
                bias = bias - lr * r;
            }
            if scale < T::of(1e-6) {
                for w in &mut v {
                    *w = *w * scale;
                }
                scale = T::one();
            }
        }
    }

    let weights_local: Vec<T> = v.iter().map(|&w| w * scale).collect();
    let objective = LogisticObjective {
        examples: examples.clone(),
        l2: hyper.l2,
    };
    let final_loss = objective.loss(&weights_local, bias);
    if !final_loss.is_finite() || !bias.is_finite() {
        return Err(fail("training diverged (non-finite loss)".into()));
    }

    Ok(LabelModel {
        term: term.to_string(),
        dim,
        weights: global
            .iter()
            .zip(&weights_local)
            .filter(|(_, &w)| w != T::zero())
            .map(|(&g, &w)| (g, w))
            .collect(),
        bias,
        l2: hyper.l2,
        meta: TrainMeta {
            positives: positives.len(),
            negatives: negatives.len(),
            epochs: hyper.epochs,
            final_loss: final_loss.as_f64(),
        },
    })
}
