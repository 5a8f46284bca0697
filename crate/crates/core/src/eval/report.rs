use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::eval::PredictionRecord;
use crate::model::{predict_downsampled, Checkpoint};
use crate::scalar::Scalar;

/// `sqrt(mean((prediction - target)²))`.
pub fn rmse_of(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Usage("RMSE of an empty set".into()));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

pub fn rmse(records: &[PredictionRecord]) -> Result<f64> {
    let p: Vec<f64> = records.iter().map(|r| r.prediction).collect();
    let t: Vec<f64> = records.iter().map(|r| r.target).collect();
    rmse_of(&p, &t)
}

/// RMSE of always predicting the mean training target.
pub fn constant_predictor_rmse(train_targets: &[f64], test_targets: &[f64]) -> Result<f64> {
    if train_targets.is_empty() {
        return Err(Error::Usage("constant predictor needs training targets".into()));
    }
    let mean = train_targets.iter().sum::<f64>() / train_targets.len() as f64;
    rmse_of(&vec![mean; test_targets.len()], test_targets)
}

pub fn mean_rmse(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScore {
    pub partition: String,
    pub rmse: f64,
    pub count: usize,
}

/// Test RMSE of one model (one checkpoint per partition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub partitions: Vec<PartitionScore>,
    /// Arithmetic mean of the per-partition RMSEs.
    pub mean_rmse: f64,
}

impl EvalReport {
    /// Groups `records` by partition, in order of first appearance.
    pub fn from_records(model_id: &str, records: &[PredictionRecord]) -> Result<Self> {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: HashMap<&str, Vec<PredictionRecord>> = HashMap::new();
        for r in records {
            let group = groups.entry(r.partition.as_str()).or_insert_with(|| {
                order.push(r.partition.as_str());
                Vec::new()
            });
            group.push(r.clone());
        }
        let partitions = order
            .iter()
            .map(|p| {
                Ok(PartitionScore {
                    partition: p.to_string(),
                    rmse: rmse(&groups[p])?,
                    count: groups[p].len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = partitions.iter().map(|p| p.rmse).collect();
        Ok(EvalReport {
            model_id: model_id.to_string(),
            partitions,
            mean_rmse: mean_rmse(&scores),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("model {}\n", self.model_id);
        let width = self
            .partitions
            .iter()
            .map(|p| p.partition.len())
            .max()
            .unwrap_or(0)
            .max("mean".len());
        for p in &self.partitions {
            out += &format!("  {:<width$}  {:>9.4}  (n={})\n", p.partition, p.rmse, p.count);
        }
        out += &format!("  {:<width$}  {:>9.4}\n", "mean", self.mean_rmse);
        out
    }
}

/// One partition's test samples.
pub struct TestSet<'a, T> {
    pub partition: String,
    pub samples: Vec<&'a Sample<T>>,
}

/// Eval-mode predictions of `checkpoints[i]` on `test_sets[i]`.
pub fn evaluate<T: Scalar>(
    model_id: &str,
    checkpoints: &[&Checkpoint<T>],
    test_sets: &[TestSet<'_, T>],
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    if checkpoints.len() != test_sets.len() {
        return Err(Error::Config(format!(
            "{} checkpoints for {} partitions",
            checkpoints.len(),
            test_sets.len()
        )));
    }
    let mut records = Vec::new();
    for (ck, set) in checkpoints.iter().zip(test_sets) {
        if set.samples.is_empty() {
            return Err(Error::Config(format!("partition {} has no test samples", set.partition)));
        }
        let predictions: Vec<f64> = set
            .samples
            .par_iter()
            .map(|s| {
                let input = s.input()?.downsampled(ck.config.downsample_factor)?;
                let y = predict_downsampled(&input, &ck.params, &ck.config)?;
                Ok(y.to_f64().unwrap_or(f64::NAN))
            })
            .collect::<Result<_>>()?;
        for (s, p) in set.samples.iter().zip(predictions) {
            if !p.is_finite() {
                return Err(Error::Numeric(format!("non-finite prediction for sample {}", s.id)));
            }
            records.push(PredictionRecord {
                sample_id: s.id.clone(),
                model_id: model_id.to_string(),
                partition: set.partition.clone(),
                prediction: p,
                target: s.correctness,
            });
        }
    }
    Ok((EvalReport::from_records(model_id, &records)?, records))
}

/// Index of the lowest dev RMSE; the earliest run wins ties and NaN never
/// wins.
pub fn select_best_on_dev(dev_rmse: &[f64]) -> Result<usize> {
    if dev_rmse.is_empty() {
        return Err(Error::Usage("no runs to select from".into()));
    }
    let mut best = 0;
    for (i, &r) in dev_rmse.iter().enumerate().skip(1) {
        if r < dev_rmse[best] || dev_rmse[best].is_nan() && !r.is_nan() {
            best = i;
        }
    }
    Ok(best)
}

/// Spread of mean test RMSE over repeated runs of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model_id: String,
    pub runs: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Test RMSE of the run with the lowest dev RMSE.
    pub best_on_dev: Option<f64>,
    pub best_run: Option<usize>,
}

pub fn summarize_runs(
    model_id: &str,
    reports: &[EvalReport],
    dev_rmse: Option<&[f64]>,
) -> Result<RunSummary> {
    if reports.is_empty() {
        return Err(Error::Usage(format!("no runs for model {model_id}")));
    }
    let scores: Vec<f64> = reports.iter().map(|r| r.mean_rmse).collect();
    let best_run = match dev_rmse {
        Some(dev) if dev.len() != reports.len() => {
            return Err(Error::Config(format!(
                "{} dev scores for {} runs",
                dev.len(),
                reports.len()
            )))
        }
        Some(dev) => Some(select_best_on_dev(dev)?),
        None => None,
    };
    Ok(RunSummary {
        model_id: model_id.to_string(),
        runs: reports.len(),
        min: scores.iter().copied().fold(f64::INFINITY, f64::min),
        mean: mean_rmse(&scores),
        max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        best_on_dev: best_run.map(|i| scores[i]),
        best_run,
    })
}

/// Averages the predictions of several models sample by sample. Every set
/// must cover the same sample ids; the output follows the first set's order.
pub fn ensemble(sets: &[&[PredictionRecord]], model_id: &str) -> Result<Vec<PredictionRecord>> {
    let Some((first, rest)) = sets.split_first() else {
        return Err(Error::Usage("ensemble of zero models".into()));
    };
    let index: Vec<HashMap<&str, &PredictionRecord>> = rest
        .iter()
        .map(|set| set.iter().map(|r| (r.sample_id.as_str(), r)).collect())
        .collect();
    let ids: BTreeSet<&str> = first.iter().map(|r| r.sample_id.as_str()).collect();
    let mut problems = Vec::new();
    for (k, (set, map)) in rest.iter().zip(&index).enumerate() {
        let other: BTreeSet<&str> = set.iter().map(|r| r.sample_id.as_str()).collect();
        let missing: Vec<&str> = ids.difference(&other).copied().collect();
        let extra: Vec<&str> = other.difference(&ids).copied().collect();
        if !missing.is_empty() {
            problems.push(format!("model {} lacks {}", k + 1, missing.join(", ")));
        }
        if !extra.is_empty() {
            problems.push(format!("model {} has unmatched {}", k + 1, extra.join(", ")));
        }
        if map.len() != set.len() {
            problems.push(format!("model {} repeats sample ids", k + 1));
        }
    }
    if ids.len() != first.len() {
        problems.push("model 0 repeats sample ids".into());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(format!(
            "ensemble members differ: {}",
            problems.join("; ")
        )));
    }
    let k = sets.len() as f64;
    Ok(first
        .iter()
        .map(|r| {
            let sum = r.prediction
                + index
                    .iter()
                    .map(|m| m[r.sample_id.as_str()].prediction)
                    .sum::<f64>();
            PredictionRecord {
                sample_id: r.sample_id.clone(),
                model_id: model_id.to_string(),
                partition: r.partition.clone(),
                prediction: sum / k,
                target: r.target,
            }
        })
        .collect())
}
