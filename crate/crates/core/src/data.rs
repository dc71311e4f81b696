//! Activation-vector datasets, label maps and dataset manifests.
//!
//! Embedding files are UTF-8 text with one JSON object per line:
//!
//! ```text
//! {"id":"blues.00012","split":"train","label":"Blues","v":[3.1,-0.4,0.9,-1.2,0.2]}
//! {"id":"disco.00003","split":"test","label":"unknown","origin":"Disco","v":[...]}
//! ```
//!
//! `label` is a known class name or `unknown`. The optional `origin` field keeps
//! the true genre of an unknown sample for reporting; all computation treats
//! unknown samples as class 0.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::UNKNOWN;

/// Reserved name of class index 0.
pub const UNKNOWN_LABEL: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Eval, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Ordered names of the N known classes. Class `k` (1-based) is `names[k - 1]`;
/// index 0 is always [`UNKNOWN_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelMapFile", into = "LabelMapFile")]
pub struct LabelMap {
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct LabelMapFile {
    classes: Vec<String>,
}

impl TryFrom<LabelMapFile> for LabelMap {
    type Error = Error;

    fn try_from(file: LabelMapFile) -> Result<Self> {
        LabelMap::new(file.classes)
    }
}

impl From<LabelMap> for LabelMapFile {
    fn from(map: LabelMap) -> Self {
        LabelMapFile { classes: map.names }
    }
}

impl LabelMap {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidLabelMap(format!(
                "need at least 2 known classes, got {}",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidLabelMap(format!(
                    "class {} has an empty name",
                    i + 1
                )));
            }
            if name == UNKNOWN_LABEL {
                return Err(Error::InvalidLabelMap(format!(
                    "{UNKNOWN_LABEL:?} is reserved for index 0"
                )));
            }
            if names[..i].contains(name) {
                return Err(Error::InvalidLabelMap(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        Ok(LabelMap { names })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Number of known classes N.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Known class names in index order 1..=N.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Name of class `index` in 0..=N.
    pub fn name(&self, index: usize) -> Option<&str> {
        match index {
            UNKNOWN => Some(UNKNOWN_LABEL),
            k => self.names.get(k - 1).map(String::as_str),
        }
    }

    /// Class index for a label string; `unknown` maps to 0.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        if label == UNKNOWN_LABEL {
            return Some(UNKNOWN);
        }
        self.names.iter().position(|n| n == label).map(|i| i + 1)
    }

    /// Names for all N+1 indices, `unknown` first.
    pub fn all_names(&self) -> Vec<&str> {
        std::iter::once(UNKNOWN_LABEL)
            .chain(self.names.iter().map(String::as_str))
            .collect()
    }
}

/// One sample's activation vector with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub split: Split,
    /// Class index in 0..=N; 0 marks a sample from an unknown class.
    pub true_label: usize,
    /// Original genre name of an unknown sample, if the file carried one.
    pub origin: Option<String>,
    pub activations: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    split: Split,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<String>,
    v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub eval: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Eval => self.eval,
            Split::Test => self.test,
        }
    }

    fn bump(&mut self, split: Split) {
        match split {
            Split::Train => self.train += 1,
            Split::Eval => self.eval += 1,
            Split::Test => self.test += 1,
        }
    }
}

/// Known/unknown class selection and split sizes of a loaded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub label_map: LabelMap,
    pub kkc_names: Vec<String>,
    /// Distinct `origin` names of unknown samples, in first-seen order.
    pub uuc_names: Vec<String>,
    pub counts: SplitCounts,
}

impl DatasetManifest {
    pub fn from_records(label_map: &LabelMap, records: &[EmbeddingRecord]) -> Self {
        let mut counts = SplitCounts::default();
        let mut uuc_names: Vec<String> = Vec::new();
        for r in records {
            counts.bump(r.split);
            if let Some(origin) = &r.origin {
                if r.true_label == UNKNOWN && !uuc_names.contains(origin) {
                    uuc_names.push(origin.clone());
                }
            }
        }
        DatasetManifest {
            label_map: label_map.clone(),
            kkc_names: label_map.names().to_vec(),
            uuc_names,
            counts,
        }
    }

    /// Per-class record counts for each split, keyed by class name.
    pub fn class_counts(
        label_map: &LabelMap,
        records: &[EmbeddingRecord],
    ) -> BTreeMap<String, SplitCounts> {
        let mut out = BTreeMap::new();
        for r in records {
            let name = label_map
                .name(r.true_label)
                .unwrap_or(UNKNOWN_LABEL)
                .to_string();
            out.entry(name)
                .or_insert_with(SplitCounts::default)
                .bump(r.split);
        }
        out
    }
}

fn parse_line(label_map: &LabelMap, line_no: usize, line: &str) -> Result<EmbeddingRecord> {
    let raw: RecordLine = serde_json::from_str(line).map_err(|e| Error::MalformedRow {
        line: line_no,
        reason: e.to_string(),
    })?;
    let invalid = |reason: String| Error::InvalidRecord {
        line: line_no,
        sample_id: raw.id.clone(),
        reason,
    };
    let true_label = label_map
        .index_of(&raw.label)
        .ok_or_else(|| invalid(format!("unknown label name {:?}", raw.label)))?;
    if true_label == UNKNOWN && raw.split != Split::Test {
        return Err(invalid(format!(
            "{} records must carry a known class label",
            raw.split
        )));
    }
    if raw.v.len() != label_map.len() {
        return Err(invalid(format!(
            "activation vector has length {}, expected {}",
            raw.v.len(),
            label_map.len()
        )));
    }
    if let Some(pos) = raw.v.iter().position(|x| !x.is_finite()) {
        return Err(invalid(format!("activation {pos} is not finite")));
    }
    Ok(EmbeddingRecord {
        sample_id: raw.id,
        split: raw.split,
        true_label,
        origin: raw.origin,
        activations: raw.v,
    })
}

/// Parses an embedding file from any reader. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn read_dataset<R: BufRead>(
    reader: R,
    label_map: &LabelMap,
) -> Result<(Vec<EmbeddingRecord>, DatasetManifest)> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedRow {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_line(label_map, i + 1, &line)?);
    }
    let manifest = DatasetManifest::from_records(label_map, &records);
    Ok((records, manifest))
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    label_map: &LabelMap,
) -> Result<(Vec<EmbeddingRecord>, DatasetManifest)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), label_map)
}

/// Serializes records in the embedding file format. Floats are written in
/// shortest round-trip form, so reading the output back is lossless.
pub fn write_dataset<W: Write>(
    mut writer: W,
    label_map: &LabelMap,
    records: &[EmbeddingRecord],
) -> Result<()> {
    for r in records {
        let label = label_map
            .name(r.true_label)
            .ok_or(Error::DimensionMismatch {
                expected: label_map.len(),
                actual: r.true_label,
            })?;
        let line = RecordLine {
            id: r.sample_id.clone(),
            split: r.split,
            label: label.to_string(),
            origin: r.origin.clone(),
            v: r.activations.clone(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_dataset(
    path: impl AsRef<Path>,
    label_map: &LabelMap,
    records: &[EmbeddingRecord],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, label_map, records)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Stable filter of records by split.
pub fn split(records: &[EmbeddingRecord], which: Split) -> Vec<&EmbeddingRecord> {
    records.iter().filter(|r| r.split == which).collect()
}
