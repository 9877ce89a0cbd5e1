//! Payloads exchanged between modules.
//!
//! A [`CategoricalMessage`] carries a finite distribution over a shared latent
//! variable and is what the message-passing connector moves around. A
//! [`SampleMessage`] carries a bag of sampled latent values, used when the latent
//! space is too large (or too awkward) to send as parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MessageError;

/// Tolerance used when checking that a message sums to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A normalized distribution over `K` discrete latent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalMessage {
    probs: Vec<f64>,
}

impl CategoricalMessage {
    /// Builds a message from probabilities that already sum to one.
    pub fn new(probs: Vec<f64>) -> Result<Self, MessageError> {
        if probs.is_empty() {
            return Err(MessageError::Empty);
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(MessageError::InvalidEntry(*p));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(MessageError::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights. Fails when every weight is zero.
    pub fn from_weights(weights: &[f64]) -> Result<Self, MessageError> {
        if weights.is_empty() {
            return Err(MessageError::Empty);
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(MessageError::InvalidEntry(*w));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(MessageError::AllZero);
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / sum).collect(),
        })
    }

    /// Exp-normalizes unnormalized log weights (`-inf` entries allowed).
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self, MessageError> {
        if log_weights.is_empty() {
            return Err(MessageError::Empty);
        }
        if let Some(w) = log_weights.iter().find(|w| w.is_nan() || **w == f64::INFINITY) {
            return Err(MessageError::InvalidEntry(*w));
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(MessageError::AllZero);
        }
        let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
        Self::from_weights(&weights)
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "uniform message needs at least one value");
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn point_mass(k: usize, at: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs[k]
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Elementwise product with `other`, renormalized in log space.
    pub fn product(&self, other: &Self) -> Result<Self, MessageError> {
        if self.len() != other.len() {
            return Err(MessageError::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        let logs: Vec<f64> = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| a.ln() + b.ln())
            .collect();
        Self::from_log_weights(&logs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, rng)
    }

    /// L1 distance between two messages of equal length.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Total-variation distance (half the L1 distance).
    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self.l1_distance(other)
    }
}

/// `L` sampled latent values together with their proposal log densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMessage<T> {
    samples: Vec<T>,
    log_scores: Vec<f64>,
}

impl<T> SampleMessage<T> {
    pub fn new(samples: Vec<T>, log_scores: Vec<f64>) -> Result<Self, MessageError> {
        if samples.is_empty() {
            return Err(MessageError::Empty);
        }
        if samples.len() != log_scores.len() {
            return Err(MessageError::DimensionMismatch {
                expected: samples.len(),
                found: log_scores.len(),
            });
        }
        Ok(Self { samples, log_scores })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn log_scores(&self) -> &[f64] {
        &self.log_scores
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }
}

impl<T: PartialEq> SampleMessage<T> {
    /// Empirical frequency of `value` among the samples.
    pub fn empirical_prob(&self, value: &T) -> f64 {
        let hits = self.samples.iter().filter(|s| *s == value).count();
        hits as f64 / self.samples.len() as f64
    }
}

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Draws an index proportionally to non-negative `weights` (need not sum to one).
///
/// Falls back to the last positive entry if rounding leaves the cursor past the end.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "sample_index needs positive mass");
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if u < *w {
                return i;
            }
            last_positive = i;
        }
        u -= w;
    }
    last_positive
}

/// Draws an index from unnormalized log weights.
pub fn sample_log_index<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    sample_index(&weights, rng)
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
