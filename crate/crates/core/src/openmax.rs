//! Mean activation vectors, per-class Weibull calibration and OpenMax scoring.
//!
//! Scoring follows the usual OpenMax recipe over an activation vector `v` of
//! length N:
//!
//! 1. rank classes by descending activation (ties by ascending class index);
//! 2. for the top `alpha` ranks `i = 1..=alpha`, set
//!    `w = 1 - (alpha - i) / alpha * W(||v - mu||)`, all other weights 1;
//! 3. revise `v_hat_j = v_j * w_j` and `v_hat_0 = sum_j v_j * (1 - w_j)`;
//! 4. softmax over the N+1 revised logits.
//!
//! `W` is the Weibull CDF for [`WeightForm::Cdf`] and the survival function for
//! [`WeightForm::PaperLiteral`]. The rejection rule in [`OpenMaxModel::predict`]
//! rejects when the winner is class 0 or its probability is below epsilon.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingRecord, LabelMap};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::weibull::{self, FitMode, WeibullModel};
use crate::{argmax, UNKNOWN};

pub const MODEL_FORMAT_VERSION: &str = "osr-openmax/1";

/// Which Weibull function scales the top-ranked activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WeightForm {
    /// CDF: inputs far from the class mean lose more of their activation.
    #[default]
    #[serde(rename = "cdf")]
    Cdf,
    /// Survival function `exp(-((d - tau)/lambda)^kappa)`, the formula exactly
    /// as commonly printed. Far inputs are revised less.
    #[serde(rename = "paper-literal")]
    PaperLiteral,
}

impl WeightForm {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightForm::Cdf => "cdf",
            WeightForm::PaperLiteral => "paper-literal",
        }
    }

    fn apply(self, model: &WeibullModel, d: f64) -> f64 {
        match self {
            WeightForm::Cdf => model.cdf(d),
            WeightForm::PaperLiteral => model.survival(d),
        }
    }
}

impl fmt::Display for WeightForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightForm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cdf" => Ok(WeightForm::Cdf),
            "paper-literal" => Ok(WeightForm::PaperLiteral),
            other => Err(format!("unknown weight form {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-class mean activation vectors over correctly classified training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MavSet {
    /// `means[j - 1]` is the MAV of class j.
    pub means: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

impl MavSet {
    pub fn get(&self, class: usize) -> &[f64] {
        &self.means[class - 1]
    }
}

fn check_training_inputs(
    label_map: &LabelMap,
    train: &[&EmbeddingRecord],
    predictions: &[usize],
) -> Result<()> {
    let n = label_map.len();
    if train.len() != predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            actual: predictions.len(),
        });
    }
    for (r, &p) in train.iter().zip(predictions) {
        if r.activations.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: r.activations.len(),
            });
        }
        if !(1..=n).contains(&r.true_label) {
            return Err(Error::InvalidParameter {
                name: "train_records",
                reason: format!(
                    "sample {} has label {} outside 1..={n}",
                    r.sample_id, r.true_label
                ),
            });
        }
        if !(1..=n).contains(&p) {
            return Err(Error::InvalidParameter {
                name: "closed_set_predictions",
                reason: format!("prediction {p} for sample {} outside 1..={n}", r.sample_id),
            });
        }
    }
    Ok(())
}

/// Averages activations of training samples whose closed-set prediction matches
/// their label. A class without any such sample is an error.
pub fn compute_mavs(
    label_map: &LabelMap,
    train: &[&EmbeddingRecord],
    predictions: &[usize],
) -> Result<MavSet> {
    check_training_inputs(label_map, train, predictions)?;
    let n = label_map.len();
    let mut sums = vec![vec![0.0; n]; n];
    let mut counts = vec![0usize; n];
    for (r, &p) in train.iter().zip(predictions) {
        if r.true_label != p {
            continue;
        }
        let j = r.true_label - 1;
        counts[j] += 1;
        for (s, x) in sums[j].iter_mut().zip(&r.activations) {
            *s += x;
        }
    }
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass {
            class: label_map.names()[j].clone(),
        });
    }
    let means = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|x| x / c as f64).collect())
        .collect();
    Ok(MavSet { means, counts })
}

/// Distances from each correctly classified training sample of class `class`
/// to that class's MAV, in input order.
pub fn class_distances(
    mavs: &MavSet,
    train: &[&EmbeddingRecord],
    predictions: &[usize],
    class: usize,
) -> Vec<f64> {
    let mu = mavs.get(class);
    train
        .iter()
        .zip(predictions)
        .filter(|(r, &p)| r.true_label == class && p == class)
        .map(|(r, _)| euclidean(&r.activations, mu))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub alpha: usize,
    pub tail_size: usize,
    pub weight_form: WeightForm,
    pub fit_mode: FitMode,
}

impl CalibrationParams {
    pub fn new(alpha: usize, tail_size: usize) -> Self {
        CalibrationParams {
            alpha,
            tail_size,
            weight_form: WeightForm::Cdf,
            fit_mode: FitMode::Zero,
        }
    }

    pub fn with_weight_form(mut self, weight_form: WeightForm) -> Self {
        self.weight_form = weight_form;
        self
    }

    pub fn with_fit_mode(mut self, fit_mode: FitMode) -> Self {
        self.fit_mode = fit_mode;
        self
    }
}

/// A calibrated OpenMax recognizer. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct OpenMaxModel {
    label_map: LabelMap,
    mavs: MavSet,
    weibulls: Vec<WeibullModel>,
    alpha: usize,
    tail_size: usize,
    weight_form: WeightForm,
    fit_mode: FitMode,
    distance: Distance,
}

/// Scores for one activation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenMaxScores {
    /// Per-class weights `w_1..w_N`.
    pub weights: Vec<f64>,
    /// Revised logits indexed 0..=N.
    pub revised: Vec<f64>,
    /// Probabilities indexed 0..=N.
    pub probabilities: Vec<f64>,
}

/// A class decision for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "id")]
    pub sample_id: String,
    /// Indexed 0..=N, index 0 being the unknown class.
    pub probabilities: Vec<f64>,
    pub predicted: usize,
    pub rejected: bool,
}

impl Prediction {
    /// Applies the shared rejection rule to an N+1 probability vector: the
    /// winner is the argmax (smallest index on ties) and the sample is rejected
    /// when the winner is 0 or its probability is strictly below `epsilon`.
    pub fn from_probabilities(probabilities: Vec<f64>, epsilon: f64) -> Self {
        let winner = argmax(&probabilities);
        let rejected = winner == UNKNOWN || probabilities[winner] < epsilon;
        Prediction {
            sample_id: String::new(),
            predicted: if rejected { UNKNOWN } else { winner },
            rejected,
            probabilities,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.sample_id = id.into();
        self
    }
}

/// Softmax with max subtraction, shared by both recognizers.
pub(crate) fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must lie in [0, 1], got {epsilon}"),
        })
    }
}

impl OpenMaxModel {
    /// Assembles a model from precomputed parts, checking every invariant.
    pub fn from_parts(
        label_map: LabelMap,
        mavs: MavSet,
        weibulls: Vec<WeibullModel>,
        alpha: usize,
        tail_size: usize,
        weight_form: WeightForm,
        fit_mode: FitMode,
    ) -> Result<Self> {
        let n = label_map.len();
        if !(1..=n).contains(&alpha) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must lie in [1, {n}], got {alpha}"),
            });
        }
        if mavs.means.len() != n || mavs.counts.len() != n || weibulls.len() != n {
            return Err(Error::InvalidModel(format!(
                "expected {n} MAVs and Weibull models, got {} and {}",
                mavs.means.len(),
                weibulls.len()
            )));
        }
        for (j, mu) in mavs.means.iter().enumerate() {
            if mu.len() != n || mu.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "MAV of class {} must be {n} finite values",
                    j + 1
                )));
            }
        }
        for w in &weibulls {
            w.validate()?;
        }
        Ok(OpenMaxModel {
            label_map,
            mavs,
            weibulls,
            alpha,
            tail_size,
            weight_form,
            fit_mode,
            distance: Distance::Euclidean,
        })
    }

    /// Computes MAVs from correctly classified training samples and fits one
    /// Weibull tail per class to their distances from the class MAV.
    pub fn calibrate(
        label_map: &LabelMap,
        train: &[&EmbeddingRecord],
        predictions: &[usize],
        params: CalibrationParams,
    ) -> Result<Self> {
        let n = label_map.len();
        if !(1..=n).contains(&params.alpha) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must lie in [1, {n}], got {}", params.alpha),
            });
        }
        if params.tail_size < 2 {
            return Err(Error::InvalidParameter {
                name: "tail_size",
                reason: format!("must be >= 2, got {}", params.tail_size),
            });
        }
        let mavs = compute_mavs(label_map, train, predictions)?;
        let weibulls = (1..=n)
            .map(|class| {
                let d = class_distances(&mavs, train, predictions, class);
                weibull::fit_tail_with(&d, params.tail_size, params.fit_mode).map_err(|e| {
                    Error::ClassFit {
                        class: label_map.names()[class - 1].clone(),
                        cause: Box::new(e),
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            label_map.clone(),
            mavs,
            weibulls,
            params.alpha,
            params.tail_size,
            params.weight_form,
            params.fit_mode,
        )
    }

    pub fn label_map(&self) -> &LabelMap {
        &self.label_map
    }

    pub fn num_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn mavs(&self) -> &MavSet {
        &self.mavs
    }

    /// Weibull model of class `class` in 1..=N.
    pub fn weibull(&self, class: usize) -> &WeibullModel {
        &self.weibulls[class - 1]
    }

    pub fn weibulls(&self) -> &[WeibullModel] {
        &self.weibulls
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn tail_size(&self) -> usize {
        self.tail_size
    }

    pub fn weight_form(&self) -> WeightForm {
        self.weight_form
    }

    pub fn fit_mode(&self) -> FitMode {
        self.fit_mode
    }

    /// Same calibration, different weight form. Used to compare both forms
    /// without refitting.
    pub fn with_weight_form(&self, weight_form: WeightForm) -> Self {
        OpenMaxModel {
            weight_form,
            ..self.clone()
        }
    }

    pub fn score(&self, v: &[f64]) -> Result<OpenMaxScores> {
        let n = self.num_classes();
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: v.len(),
            });
        }
        let mut ranking: Vec<usize> = (0..n).collect();
        ranking.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));

        let mut weights = vec![1.0; n];
        let alpha = self.alpha as f64;
        for (rank, &j) in ranking.iter().take(self.alpha).enumerate() {
            let i = (rank + 1) as f64;
            let d = euclidean(v, &self.mavs.means[j]);
            let tail = self.weight_form.apply(&self.weibulls[j], d);
            weights[j] = 1.0 - (alpha - i) / alpha * tail;
        }

        let mut revised = Vec::with_capacity(n + 1);
        revised.push(v.iter().zip(&weights).map(|(x, w)| x * (1.0 - w)).sum());
        revised.extend(v.iter().zip(&weights).map(|(x, w)| x * w));
        let probabilities = stable_softmax(&revised);
        Ok(OpenMaxScores {
            weights,
            revised,
            probabilities,
        })
    }

    pub fn predict(&self, v: &[f64], epsilon: f64) -> Result<Prediction> {
        check_epsilon(epsilon)?;
        let scores = self.score(v)?;
        Ok(Prediction::from_probabilities(
            scores.probabilities,
            epsilon,
        ))
    }

    pub fn predict_record(&self, record: &EmbeddingRecord, epsilon: f64) -> Result<Prediction> {
        Ok(self
            .predict(&record.activations, epsilon)?
            .with_id(record.sample_id.clone()))
    }

    /// Scores every record, in input order.
    pub fn predict_batch(
        &self,
        records: &[&EmbeddingRecord],
        epsilon: f64,
        exec: Execution,
    ) -> Result<Vec<Prediction>> {
        check_epsilon(epsilon)?;
        par::map(exec, records, |r| self.predict_record(r, epsilon))
            .into_iter()
            .collect()
    }

    /// Probability vectors for every record, in input order.
    pub fn probabilities_batch(
        &self,
        records: &[&EmbeddingRecord],
        exec: Execution,
    ) -> Result<Vec<Vec<f64>>> {
        par::map(exec, records, |r| {
            self.score(&r.activations).map(|s| s.probabilities)
        })
        .into_iter()
        .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Free-function form of [`OpenMaxModel::score`].
pub fn openmax_score(model: &OpenMaxModel, v: &[f64]) -> Result<OpenMaxScores> {
    model.score(v)
}

/// Free-function form of [`OpenMaxModel::predict`].
pub fn openmax_predict(model: &OpenMaxModel, v: &[f64], epsilon: f64) -> Result<Prediction> {
    model.predict(v, epsilon)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: String,
    label_map: LabelMap,
    alpha: usize,
    tail_size: usize,
    weight_form: WeightForm,
    fit_mode: FitMode,
    distance: Distance,
    classes: Vec<ClassEntry>,
}

#[derive(Serialize, Deserialize)]
struct ClassEntry {
    name: String,
    mav: Vec<f64>,
    mav_count: usize,
    weibull: WeibullEntry,
}

#[derive(Serialize, Deserialize)]
struct WeibullEntry {
    tau: f64,
    lambda: f64,
    kappa: f64,
    tail_size: usize,
    n_fit: usize,
}

impl From<OpenMaxModel> for ModelFile {
    fn from(m: OpenMaxModel) -> Self {
        let classes = m
            .label_map
            .names()
            .iter()
            .zip(m.mavs.means)
            .zip(m.mavs.counts)
            .zip(m.weibulls)
            .map(|(((name, mav), mav_count), w)| ClassEntry {
                name: name.clone(),
                mav,
                mav_count,
                weibull: WeibullEntry {
                    tau: w.tau,
                    lambda: w.lambda,
                    kappa: w.kappa,
                    tail_size: w.tail_size,
                    n_fit: w.n_fit,
                },
            })
            .collect();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION.to_string(),
            label_map: m.label_map,
            alpha: m.alpha,
            tail_size: m.tail_size,
            weight_form: m.weight_form,
            fit_mode: m.fit_mode,
            distance: m.distance,
            classes,
        }
    }
}

impl TryFrom<ModelFile> for OpenMaxModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported format version {:?}",
                f.format_version
            )));
        }
        for (c, name) in f.classes.iter().zip(f.label_map.names()) {
            if &c.name != name {
                return Err(Error::InvalidModel(format!(
                    "class entry {:?} does not match label map entry {name:?}",
                    c.name
                )));
            }
        }
        let mut means = Vec::new();
        let mut counts = Vec::new();
        let mut weibulls = Vec::new();
        for c in f.classes {
            means.push(c.mav);
            counts.push(c.mav_count);
            weibulls.push(WeibullModel {
                tau: c.weibull.tau,
                lambda: c.weibull.lambda,
                kappa: c.weibull.kappa,
                tail_size: c.weibull.tail_size,
                n_fit: c.weibull.n_fit,
            });
        }
        OpenMaxModel::from_parts(
            f.label_map,
            MavSet { means, counts },
            weibulls,
            f.alpha,
            f.tail_size,
            f.weight_form,
            f.fit_mode,
        )
    }
}
