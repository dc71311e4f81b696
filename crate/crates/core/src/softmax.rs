//! Softmax-with-threshold baseline.

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingRecord;
use crate::error::Result;
use crate::openmax::{check_epsilon, stable_softmax, Prediction};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SoftmaxDecisionConfig {
    pub epsilon: f64,
}

impl SoftmaxDecisionConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(SoftmaxDecisionConfig { epsilon })
    }
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    stable_softmax(v)
}

/// Probabilities laid out like an OpenMax prediction: 0 at index 0, softmax at 1..=N.
pub fn padded_softmax(v: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(v.len() + 1);
    p.push(0.0);
    p.extend(softmax(v));
    p
}

/// Rejects when the largest softmax probability is strictly below epsilon.
pub fn softmax_predict(v: &[f64], config: SoftmaxDecisionConfig) -> Prediction {
    Prediction::from_probabilities(padded_softmax(v), config.epsilon)
}

pub fn softmax_predict_batch(
    records: &[&EmbeddingRecord],
    config: SoftmaxDecisionConfig,
    exec: Execution,
) -> Vec<Prediction> {
    par::map(exec, records, |r| {
        softmax_predict(&r.activations, config).with_id(r.sample_id.clone())
    })
}
