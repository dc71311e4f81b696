//! Open-set recognition on top of a closed-set classifier's activation vectors.
//!
//! The pipeline is split into a calibration half and an inference half:
//!
//! * [`data`] loads activation-vector datasets and label maps.
//! * [`weibull`] fits Weibull models to the tail of per-class distances.
//! * [`openmax`] computes mean activation vectors, calibrates per-class tail
//!   models and applies the OpenMax recalibration with rejection.
//! * [`softmax`] is the softmax-with-threshold baseline.
//! * [`metrics`] builds confusion matrices, accuracy and precision/recall reports.
//! * [`sweep`] runs the (alpha, tail size, epsilon) grid search.
//! * [`synth`] generates seeded synthetic cluster datasets for desk-scale checks.
//!
//! Batch scoring and sweeps run on rayon when the `parallel` feature is on
//! (the default); see [`Execution`].

pub mod data;
pub mod error;
pub mod metrics;
pub mod openmax;
mod par;
pub mod report;
pub mod softmax;
pub mod sweep;
pub mod synth;
pub mod weibull;

pub use data::{DatasetManifest, EmbeddingRecord, LabelMap, Split};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, EvalMode, EvalReport};
pub use openmax::{CalibrationParams, MavSet, OpenMaxModel, Prediction, WeightForm};
pub use par::Execution;
pub use softmax::SoftmaxDecisionConfig;
pub use sweep::{Method, SweepResult, SweepSpec};
pub use weibull::{FitMode, WeibullModel};

/// Index of the rejection ("unknown") class in every N+1 sized vector.
pub const UNKNOWN: usize = 0;

/// Argmax with ties resolved to the smallest index. Returns 0 for an empty slice.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Closed-set prediction for an activation vector: argmax over the N logits,
/// reported as a class index in 1..=N.
pub fn closed_set_prediction(activations: &[f64]) -> usize {
    argmax(activations) + 1
}
