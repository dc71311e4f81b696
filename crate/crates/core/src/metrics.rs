//! Confusion matrices, accuracy and per-class precision/recall.
//!
//! Accuracy is `sum_k TP_k / sum_k (TP_k + FN_k)`. With one label per sample
//! this is the diagonal over the row total of the included classes: 1..=N for
//! closed-set evaluation, 0..=N once unknown samples are in play.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::data::LabelMap;
use crate::error::{Error, Result};
use crate::openmax::Prediction;
use crate::UNKNOWN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Closed-set argmax on known-class test samples.
    Closed,
    /// Plain argmax on the full test set; unknown samples are always wrong.
    Softmax,
    SoftmaxThreshold,
    OpenmaxThreshold,
}

impl EvalMode {
    pub const ALL: [EvalMode; 4] = [
        EvalMode::Closed,
        EvalMode::Softmax,
        EvalMode::SoftmaxThreshold,
        EvalMode::OpenmaxThreshold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Closed => "closed",
            EvalMode::Softmax => "softmax",
            EvalMode::SoftmaxThreshold => "softmax-threshold",
            EvalMode::OpenmaxThreshold => "openmax-threshold",
        }
    }

    /// First class index counted by accuracy.
    fn first_class(self) -> usize {
        match self {
            EvalMode::Closed => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(N+1) x (N+1)` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; num_classes + 1]; num_classes + 1],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let size = counts.len();
        if size < 2 || counts.iter().any(|row| row.len() != size) {
            return Err(Error::InvalidParameter {
                name: "counts",
                reason: "confusion matrix must be square with at least 2 rows".into(),
            });
        }
        Ok(ConfusionMatrix { counts })
    }

    /// Number of known classes N.
    pub fn num_classes(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let n = self.num_classes();
        if truth > n || predicted > n {
            return Err(Error::InvalidParameter {
                name: "class index",
                reason: format!("pair ({truth}, {predicted}) outside 0..={n}"),
            });
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|k| self.counts[k][k]).sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|row| row[k]).sum()
    }

    /// CSV with class names on the header row and first column.
    pub fn to_csv(&self, label_map: &LabelMap) -> Result<String> {
        let names = label_map.all_names();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(names.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (name, row) in names.iter().zip(&self.counts) {
            let mut line = vec![name.to_string()];
            line.extend(row.iter().map(u64::to_string));
            w.write_record(&line)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("<csv>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Tallies (truth, predicted) pairs.
pub fn build_confusion(
    num_classes: usize,
    truths: &[usize],
    predicted: &[usize],
) -> Result<ConfusionMatrix> {
    if truths.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            actual: predicted.len(),
        });
    }
    let mut m = ConfusionMatrix::zeros(num_classes);
    for (&t, &p) in truths.iter().zip(predicted) {
        m.record(t, p)?;
    }
    Ok(m)
}

pub fn confusion_from_predictions(
    num_classes: usize,
    truths: &[usize],
    predictions: &[Prediction],
) -> Result<ConfusionMatrix> {
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    build_confusion(num_classes, truths, &predicted)
}

pub fn accuracy(confusion: &ConfusionMatrix, mode: EvalMode) -> Result<f64> {
    let included = mode.first_class()..=confusion.num_classes();
    let hits: u64 = included.clone().map(|k| confusion.get(k, k)).sum();
    let total: u64 = included.map(|k| confusion.row_sum(k)).sum();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(hits as f64 / total as f64)
}

/// Precision and recall of one class; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Per-class precision and recall for classes 0..=N.
pub fn precision_recall(confusion: &ConfusionMatrix) -> Vec<PrecisionRecall> {
    (0..=confusion.num_classes())
        .map(|k| PrecisionRecall {
            precision: ratio(confusion.get(k, k), confusion.col_sum(k)),
            recall: ratio(confusion.get(k, k), confusion.row_sum(k)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub index: usize,
    pub name: String,
    /// Number of samples whose true class is this one.
    pub support: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

fn fmt_ratio(x: Option<f64>) -> String {
    format!("{:.3}", x.unwrap_or(0.0))
}

impl EvalReport {
    pub fn new(mode: EvalMode, confusion: ConfusionMatrix, label_map: &LabelMap) -> Result<Self> {
        if confusion.num_classes() != label_map.len() {
            return Err(Error::DimensionMismatch {
                expected: label_map.len(),
                actual: confusion.num_classes(),
            });
        }
        let accuracy = accuracy(&confusion, mode)?;
        let per_class = precision_recall(&confusion)
            .into_iter()
            .enumerate()
            .map(|(k, pr)| ClassMetrics {
                index: k,
                name: label_map.name(k).unwrap_or_default().to_string(),
                support: confusion.row_sum(k),
                precision: pr.precision,
                recall: pr.recall,
            })
            .collect();
        Ok(EvalReport {
            mode,
            accuracy,
            per_class,
            confusion,
        })
    }

    /// Aligned per-class table: class, support, precision, recall. Undefined
    /// ratios print as 0.000.
    pub fn render_class_table(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(5)
            .max("Class".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>9}  {:>6}",
            "Class", "Support", "Precision", "Recall"
        );
        for c in &self.per_class {
            if self.mode == EvalMode::Closed && c.index == UNKNOWN {
                continue;
            }
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>9}  {:>6}",
                c.name,
                c.support,
                fmt_ratio(c.precision),
                fmt_ratio(c.recall)
            );
        }
        out
    }
}
