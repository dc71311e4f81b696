//! Four-way evaluation of a test set: closed-set, plain softmax,
//! softmax with threshold and OpenMax with threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::closed_set_prediction;
use crate::data::EmbeddingRecord;
use crate::error::{Error, Result};
use crate::metrics::{build_confusion, confusion_from_predictions, EvalMode, EvalReport};
use crate::openmax::{OpenMaxModel, Prediction};
use crate::par::Execution;
use crate::softmax::{softmax_predict_batch, SoftmaxDecisionConfig};
use crate::UNKNOWN;

pub const REPORT_FORMAT_VERSION: &str = "osr-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: String,
    pub epsilon: f64,
    pub acc_c: f64,
    pub acc_s: f64,
    pub acc_st: f64,
    pub acc_ot: f64,
    /// One report per mode, in [`EvalMode::ALL`] order.
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPredictions {
    pub softmax_threshold: Vec<Prediction>,
    pub openmax_threshold: Vec<Prediction>,
}

impl ExperimentReport {
    pub fn report(&self, mode: EvalMode) -> &EvalReport {
        self.reports
            .iter()
            .find(|r| r.mode == mode)
            .expect("every mode is evaluated")
    }
}

/// Evaluates `test` under all four modes at threshold `epsilon`.
pub fn evaluate(
    model: &OpenMaxModel,
    test: &[&EmbeddingRecord],
    epsilon: f64,
    exec: Execution,
) -> Result<(ExperimentReport, ExperimentPredictions)> {
    let n = model.num_classes();
    if let Some(r) = test.iter().find(|r| r.activations.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: r.activations.len(),
        });
    }
    let labels = model.label_map();
    let truths: Vec<usize> = test.iter().map(|r| r.true_label).collect();

    let known: Vec<&EmbeddingRecord> = test
        .iter()
        .copied()
        .filter(|r| r.true_label != UNKNOWN)
        .collect();
    let closed = build_confusion(
        n,
        &known.iter().map(|r| r.true_label).collect::<Vec<_>>(),
        &known
            .iter()
            .map(|r| closed_set_prediction(&r.activations))
            .collect::<Vec<_>>(),
    )?;
    let plain = build_confusion(
        n,
        &truths,
        &test
            .iter()
            .map(|r| closed_set_prediction(&r.activations))
            .collect::<Vec<_>>(),
    )?;
    let softmax_threshold = softmax_predict_batch(test, SoftmaxDecisionConfig::new(epsilon)?, exec);
    let openmax_threshold = model.predict_batch(test, epsilon, exec)?;

    let reports = vec![
        EvalReport::new(EvalMode::Closed, closed, labels)?,
        EvalReport::new(EvalMode::Softmax, plain, labels)?,
        EvalReport::new(
            EvalMode::SoftmaxThreshold,
            confusion_from_predictions(n, &truths, &softmax_threshold)?,
            labels,
        )?,
        EvalReport::new(
            EvalMode::OpenmaxThreshold,
            confusion_from_predictions(n, &truths, &openmax_threshold)?,
            labels,
        )?,
    ];
    let report = ExperimentReport {
        format_version: REPORT_FORMAT_VERSION.to_string(),
        epsilon,
        acc_c: reports[0].accuracy,
        acc_s: reports[1].accuracy,
        acc_st: reports[2].accuracy,
        acc_ot: reports[3].accuracy,
        reports,
    };
    Ok((
        report,
        ExperimentPredictions {
            softmax_threshold,
            openmax_threshold,
        },
    ))
}

/// Aligned accuracy table, one row per named experiment.
pub fn render_accuracy_table(rows: &[(&str, &ExperimentReport)]) -> String {
    let width = rows
        .iter()
        .map(|(name, _)| name.len())
        .max()
        .unwrap_or(0)
        .max("Experiment".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}",
        "Experiment", "Acc_c", "Acc_s", "Acc_st", "Acc_ot"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}",
            name, r.acc_c, r.acc_s, r.acc_st, r.acc_ot
        );
    }
    out
}
