use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One model's prediction for one sample, both on the `[0, 100]` scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub model_id: String,
    pub partition: String,
    pub prediction: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    #[default]
    Squared,
    Absolute,
}

impl ErrorMetric {
    pub fn apply(self, prediction: f64, target: f64) -> f64 {
        let e = prediction - target;
        match self {
            ErrorMetric::Squared => e * e,
            ErrorMetric::Absolute => e.abs(),
        }
    }
}

impl PredictionRecord {
    pub fn error(&self, metric: ErrorMetric) -> f64 {
        metric.apply(self.prediction, self.target)
    }
}

/// Checks value ranges and `(sample_id, model_id)` uniqueness.
pub fn validate_records(records: &[PredictionRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    let mut problems = Vec::new();
    for r in records {
        if !(0.0..=100.0).contains(&r.prediction) {
            problems.push(format!(
                "{}/{}: prediction {} outside [0, 100]",
                r.model_id, r.sample_id, r.prediction
            ));
        }
        if !(0.0..=100.0).contains(&r.target) {
            problems.push(format!(
                "{}/{}: target {} outside [0, 100]",
                r.model_id, r.sample_id, r.target
            ));
        }
        if !seen.insert((r.sample_id.as_str(), r.model_id.as_str())) {
            problems.push(format!("{}/{}: duplicate record", r.model_id, r.sample_id));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems.join("; ")))
    }
}

pub fn write_records(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads and validates a CSV file with header
/// `sample_id,model_id,partition,prediction,target`.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let records = r
        .deserialize()
        .collect::<std::result::Result<Vec<PredictionRecord>, _>>()
        .map_err(|e| csv_error(path, e))?;
    validate_records(&records)?;
    Ok(records)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse {
            what: path.display().to_string(),
            msg: e.to_string(),
        }
    }
}
