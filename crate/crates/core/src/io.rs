//! Versioned file formats: line-delimited datasets, model documents, tidy databases, traces.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::TidyDatabase;
use crate::error::{Error, Result};
use crate::gibbs::{SweepSelection, ThetaEstimate};
use crate::model::{ConceptModel, Hyperparams, LabeledDataset, Observation, Position};

pub const FORMAT_VERSION: u32 = 1;

fn check_version(found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::FormatVersion { found, expected: FORMAT_VERSION });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    num_classes: usize,
    num_words: usize,
    #[serde(default)]
    provenance: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    position: Position,
    class: usize,
    #[serde(default)]
    words: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    concept: Option<usize>,
}

/// One header line followed by one JSON record per observation.
pub fn write_dataset(dataset: &LabeledDataset, provenance: &serde_json::Value) -> Result<String> {
    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        num_classes: dataset.num_classes,
        num_words: dataset.num_words,
        provenance: provenance.clone(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for (i, o) in dataset.observations.iter().enumerate() {
        let record = DatasetRecord {
            position: o.position,
            class: o.object_class,
            words: o.words.clone(),
            concept: dataset.truth_assignments.as_ref().map(|t| t[i]),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses [`write_dataset`] output. Truth labels are kept only when every record has one.
pub fn read_dataset(text: &str) -> Result<(LabeledDataset, serde_json::Value)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
    let header: DatasetHeader =
        serde_json::from_str(first).map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    check_version(header.format_version)?;
    let mut observations = Vec::new();
    let mut truth = Vec::new();
    for (i, line) in lines {
        let r: DatasetRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        observations.push(Observation::new(r.position, r.class, r.words));
        truth.push(r.concept);
    }
    let truth = truth.into_iter().collect::<Option<Vec<usize>>>().filter(|t| !t.is_empty());
    let ds = LabeledDataset::new(header.num_classes, header.num_words, observations, truth)?;
    Ok((ds, header.provenance))
}

/// Everything needed to plan with a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: ConceptModel,
    pub hyperparams: Hyperparams,
    pub selection: SweepSelection,
    pub estimate: ThetaEstimate,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub word_names: Vec<String>,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        check_version(serde_json::from_str::<Version>(text)?.format_version)?;
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct DatabaseFile {
    format_version: u32,
    records: Vec<DatabaseRecord>,
}

#[derive(Serialize, Deserialize)]
struct DatabaseRecord {
    class: usize,
    position: Position,
}

pub fn write_database(db: &TidyDatabase) -> Result<String> {
    let file = DatabaseFile {
        format_version: FORMAT_VERSION,
        records: db.records.iter().map(|&(class, position)| DatabaseRecord { class, position }).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn read_database(text: &str) -> Result<TidyDatabase> {
    let file: DatabaseFile = serde_json::from_str(text)?;
    check_version(file.format_version)?;
    Ok(TidyDatabase { records: file.records.into_iter().map(|r| (r.class, r.position)).collect() })
}

/// `sweep,joint_logprob` with one row per sweep, numbered from 1.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("sweep,joint_logprob\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{},{v:?}", i + 1).expect("string write");
    }
    out
}
