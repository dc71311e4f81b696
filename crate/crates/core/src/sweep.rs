//! Exhaustive grid search over (alpha, tail size, epsilon).
//!
//! OpenMax is calibrated once per (alpha, tail size) pair; epsilon only changes
//! the rejection rule, so every epsilon reuses the same probability vectors.
//! Softmax-threshold rows depend on epsilon alone and carry no alpha/tail.
//! Rows are always emitted in (method, alpha, tail, epsilon) ascending order
//! regardless of how the grid was listed or how work was scheduled.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingRecord, LabelMap};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, build_confusion, EvalMode};
use crate::openmax::{CalibrationParams, OpenMaxModel, Prediction, WeightForm};
use crate::par::{self, Execution};
use crate::softmax::padded_softmax;
use crate::weibull::FitMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SoftmaxThreshold,
    OpenmaxThreshold,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SoftmaxThreshold => "softmax-threshold",
            Method::OpenmaxThreshold => "openmax-threshold",
        }
    }

    pub const ALL: [Method; 2] = [Method::SoftmaxThreshold, Method::OpenmaxThreshold];

    /// Evaluation mode whose accuracy this method reports.
    pub fn mode(self) -> EvalMode {
        match self {
            Method::SoftmaxThreshold => EvalMode::SoftmaxThreshold,
            Method::OpenmaxThreshold => EvalMode::OpenmaxThreshold,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "softmax-threshold" => Ok(Method::SoftmaxThreshold),
            "openmax-threshold" => Ok(Method::OpenmaxThreshold),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

/// How the lower alpha bound N/2 is rounded for odd N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaRounding {
    #[default]
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alphas: Vec<usize>,
    pub tails: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub methods: Vec<Method>,
    pub weight_form: WeightForm,
    pub fit_mode: FitMode,
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_epsilons() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

impl SweepSpec {
    /// alpha in [N/2, N], tail size 20..=40 step 5, epsilon 0.05..=0.95 step 0.05.
    pub fn standard(num_classes: usize, rounding: AlphaRounding) -> Self {
        let low = match rounding {
            AlphaRounding::Up => num_classes.div_ceil(2),
            AlphaRounding::Down => num_classes / 2,
        }
        .max(1);
        SweepSpec {
            alphas: (low..=num_classes).collect(),
            tails: vec![20, 25, 30, 35, 40],
            epsilons: default_epsilons(),
            methods: vec![Method::SoftmaxThreshold, Method::OpenmaxThreshold],
            weight_form: WeightForm::Cdf,
            fit_mode: FitMode::Zero,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad =
            |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.methods.is_empty() || self.epsilons.is_empty() {
            return bad("sweep", "methods and epsilons must be non-empty".into());
        }
        if self.methods.contains(&Method::OpenmaxThreshold)
            && (self.alphas.is_empty() || self.tails.is_empty())
        {
            return bad("sweep", "alphas and tails must be non-empty".into());
        }
        if let Some(a) = self
            .alphas
            .iter()
            .find(|&&a| !(1..=num_classes).contains(&a))
        {
            return bad("alpha", format!("{a} outside [1, {num_classes}]"));
        }
        if let Some(t) = self.tails.iter().find(|&&t| t < 2) {
            return bad("tail_size", format!("{t} is below 2"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return bad("epsilon", format!("{e} outside [0, 1]"));
        }
        Ok(())
    }

    fn normalized(&self) -> SweepSpec {
        let mut s = self.clone();
        s.alphas.sort_unstable();
        s.alphas.dedup();
        s.tails.sort_unstable();
        s.tails.dedup();
        s.epsilons.sort_by(f64::total_cmp);
        s.epsilons.dedup();
        s.methods.sort_unstable();
        s.methods.dedup();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub alpha: Option<usize>,
    pub tail: Option<usize>,
    pub epsilon: f64,
    pub accuracy: Option<f64>,
    #[serde(flatten)]
    pub status: RowStatus,
}

impl SweepRow {
    fn sort_key(&self, other: &Self) -> Ordering {
        self.method
            .cmp(&other.method)
            .then(self.alpha.cmp(&other.alpha))
            .then(self.tail.cmp(&other.tail))
            .then(self.epsilon.total_cmp(&other.epsilon))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Highest-accuracy row per method; ties go to smaller epsilon, then
    /// smaller alpha, then smaller tail size.
    pub best: Vec<SweepRow>,
    /// Number of OpenMax calibrations performed.
    pub calibrations: usize,
}

fn best_row<'a>(rows: impl Iterator<Item = &'a SweepRow>) -> Option<&'a SweepRow> {
    rows.filter(|r| r.accuracy.is_some()).min_by(|a, b| {
        b.accuracy
            .unwrap()
            .total_cmp(&a.accuracy.unwrap())
            .then(a.epsilon.total_cmp(&b.epsilon))
            .then(a.alpha.cmp(&b.alpha))
            .then(a.tail.cmp(&b.tail))
    })
}

fn threshold_accuracies(
    num_classes: usize,
    truths: &[usize],
    probabilities: &[Vec<f64>],
    epsilons: &[f64],
    mode: EvalMode,
) -> Result<Vec<f64>> {
    epsilons
        .iter()
        .map(|&eps| {
            let predicted: Vec<usize> = probabilities
                .iter()
                .map(|p| Prediction::from_probabilities(p.clone(), eps).predicted)
                .collect();
            accuracy(&build_confusion(num_classes, truths, &predicted)?, mode)
        })
        .collect()
}

/// Runs the grid on `eval` records (the test split, or the eval split for
/// selection without peeking at test data). `predictions` are the closed-set
/// predictions for `train`, used to pick correctly classified samples.
pub fn sweep(
    label_map: &LabelMap,
    train: &[&EmbeddingRecord],
    eval: &[&EmbeddingRecord],
    predictions: &[usize],
    spec: &SweepSpec,
    exec: Execution,
) -> Result<SweepResult> {
    let n = label_map.len();
    spec.validate(n)?;
    if eval.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if let Some(r) = eval.iter().find(|r| r.activations.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: r.activations.len(),
        });
    }
    let spec = spec.normalized();
    let truths: Vec<usize> = eval.iter().map(|r| r.true_label).collect();
    let mut rows = Vec::new();

    if spec.methods.contains(&Method::SoftmaxThreshold) {
        let probs = par::map(exec, eval, |r| padded_softmax(&r.activations));
        let accs = threshold_accuracies(
            n,
            &truths,
            &probs,
            &spec.epsilons,
            EvalMode::SoftmaxThreshold,
        )?;
        rows.extend(
            spec.epsilons
                .iter()
                .zip(accs)
                .map(|(&epsilon, acc)| SweepRow {
                    method: Method::SoftmaxThreshold,
                    alpha: None,
                    tail: None,
                    epsilon,
                    accuracy: Some(acc),
                    status: RowStatus::Ok,
                }),
        );
    }

    let calibrations = AtomicUsize::new(0);
    if spec.methods.contains(&Method::OpenmaxThreshold) {
        let grid: Vec<(usize, usize)> = spec
            .alphas
            .iter()
            .flat_map(|&a| spec.tails.iter().map(move |&t| (a, t)))
            .collect();
        let outcomes = par::map(exec, &grid, |&(alpha, tail)| {
            calibrations.fetch_add(1, AtomicOrdering::Relaxed);
            let params = CalibrationParams::new(alpha, tail)
                .with_weight_form(spec.weight_form)
                .with_fit_mode(spec.fit_mode);
            let model = OpenMaxModel::calibrate(label_map, train, predictions, params)?;
            let probs = model.probabilities_batch(eval, Execution::Sequential)?;
            threshold_accuracies(
                n,
                &truths,
                &probs,
                &spec.epsilons,
                EvalMode::OpenmaxThreshold,
            )
        });
        for (&(alpha, tail), outcome) in grid.iter().zip(outcomes) {
            match outcome {
                Ok(accs) => {
                    rows.extend(
                        spec.epsilons
                            .iter()
                            .zip(accs)
                            .map(|(&epsilon, acc)| SweepRow {
                                method: Method::OpenmaxThreshold,
                                alpha: Some(alpha),
                                tail: Some(tail),
                                epsilon,
                                accuracy: Some(acc),
                                status: RowStatus::Ok,
                            }),
                    )
                }
                Err(e) if e.is_computation() => {
                    rows.extend(spec.epsilons.iter().map(|&epsilon| SweepRow {
                        method: Method::OpenmaxThreshold,
                        alpha: Some(alpha),
                        tail: Some(tail),
                        epsilon,
                        accuracy: None,
                        status: RowStatus::Failed(e.to_string()),
                    }))
                }
                Err(e) => return Err(e),
            }
        }
    }

    rows.sort_by(SweepRow::sort_key);
    let best = spec
        .methods
        .iter()
        .filter_map(|&m| best_row(rows.iter().filter(|r| r.method == m)).cloned())
        .collect();
    Ok(SweepResult {
        rows,
        best,
        calibrations: calibrations.into_inner(),
    })
}

impl SweepResult {
    pub fn best_for(&self, method: Method) -> Option<&SweepRow> {
        self.best.iter().find(|r| r.method == method)
    }

    /// `method,alpha,tail,epsilon,accuracy,status`; empty cells for fields
    /// that do not apply.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "alpha", "tail", "epsilon", "accuracy", "status"])?;
        for r in &self.rows {
            let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.method.as_str().to_string(),
                opt(r.alpha),
                opt(r.tail),
                r.epsilon.to_string(),
                r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                match &r.status {
                    RowStatus::Ok => "ok".to_string(),
                    RowStatus::Failed(_) => "failed".to_string(),
                },
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("<csv>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Distinct (alpha, tail) keys of OpenMax rows, ascending.
    pub fn openmax_keys(&self) -> Vec<(usize, usize)> {
        let mut keys: Vec<(usize, usize)> = self
            .rows
            .iter()
            .filter_map(|r| Some((r.alpha?, r.tail?)))
            .collect();
        keys.dedup();
        keys
    }
}

/// Accuracy against epsilon for one configuration, epsilon ascending. Softmax
/// rows ignore `alpha` and `tail`. Failed rows are skipped.
pub fn threshold_curve(
    result: &SweepResult,
    method: Method,
    alpha: Option<usize>,
    tail: Option<usize>,
) -> Result<Vec<(f64, f64)>> {
    let (alpha, tail) = match method {
        Method::SoftmaxThreshold => (None, None),
        Method::OpenmaxThreshold => (alpha, tail),
    };
    let curve: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter(|r| r.method == method && r.alpha == alpha && r.tail == tail)
        .filter_map(|r| Some((r.epsilon, r.accuracy?)))
        .collect();
    if curve.is_empty() {
        return Err(Error::MissingKey(format!(
            "{method} alpha={alpha:?} tail={tail:?}"
        )));
    }
    Ok(curve)
}

pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("epsilon,accuracy\n");
    for (e, a) in curve {
        out.push_str(&format!("{e},{a}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid() {
        let s = SweepSpec::standard(5, AlphaRounding::Up);
        assert_eq!(s.alphas, vec![3, 4, 5]);
        assert_eq!(
            SweepSpec::standard(5, AlphaRounding::Down).alphas,
            vec![2, 3, 4, 5]
        );
        assert_eq!(
            SweepSpec::standard(10, AlphaRounding::Up).alphas,
            (5..=10).collect::<Vec<_>>()
        );
        assert_eq!(s.tails, vec![20, 25, 30, 35, 40]);
        assert_eq!(s.epsilons.len(), 19);
        assert!((s.epsilons[18] - 0.95).abs() < 1e-12);
        s.validate(5).unwrap();
    }

    #[test]
    fn validation() {
        let mut s = SweepSpec::standard(5, AlphaRounding::Up);
        s.alphas.push(6);
        assert!(s.validate(5).is_err());
        let mut s = SweepSpec::standard(5, AlphaRounding::Up);
        s.tails = vec![1];
        assert!(s.validate(5).is_err());
        let mut s = SweepSpec::standard(5, AlphaRounding::Up);
        s.epsilons = vec![1.5];
        assert!(s.validate(5).is_err());
        let mut s = SweepSpec::standard(5, AlphaRounding::Up);
        s.methods.clear();
        assert!(s.validate(5).is_err());
    }

    #[test]
    fn best_tie_break() {
        let row = |alpha, tail, epsilon, acc| SweepRow {
            method: Method::OpenmaxThreshold,
            alpha: Some(alpha),
            tail: Some(tail),
            epsilon,
            accuracy: Some(acc),
            status: RowStatus::Ok,
        };
        let rows = [
            row(3, 25, 0.3, 0.8),
            row(2, 30, 0.3, 0.8),
            row(2, 20, 0.5, 0.8),
            row(2, 25, 0.3, 0.8),
            row(5, 20, 0.1, 0.7),
        ];
        let best = best_row(rows.iter()).unwrap();
        assert_eq!(
            (best.alpha, best.tail, best.epsilon),
            (Some(2), Some(25), 0.3)
        );
    }
}
