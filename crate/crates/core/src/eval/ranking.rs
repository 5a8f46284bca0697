use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    rmse, wilcoxon_signed_rank, Alternative, ErrorMetric, PredictionRecord, ZeroMethod,
};

/// How two models' errors are paired for the signed-rank test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Per-sample errors, paired by sample id.
    #[default]
    PerSample,
    /// Per-run mean partition RMSE, paired by run index. Model ids take the
    /// form `name@runK`; rows are named by `name`.
    PerRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub model_id: String,
    /// One-sided p-value for "this model has larger error than the baseline".
    pub p_value: f64,
    pub pairs: usize,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub baseline: String,
    pub pairing: Pairing,
    pub metric: ErrorMetric,
    /// Sorted by descending p-value.
    pub rows: Vec<RankingRow>,
}

fn split_run(model_id: &str) -> (&str, &str) {
    model_id.rsplit_once('@').unwrap_or((model_id, ""))
}

/// Paired observations per model: key → error.
fn observations(
    records: &[PredictionRecord],
    pairing: Pairing,
    metric: ErrorMetric,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    match pairing {
        Pairing::PerSample => {
            for r in records {
                let prev = out
                    .entry(r.model_id.clone())
                    .or_default()
                    .insert(r.sample_id.clone(), r.error(metric));
                if prev.is_some() {
                    return Err(Error::Validation(format!(
                        "{}/{}: duplicate record",
                        r.model_id, r.sample_id
                    )));
                }
            }
        }
        Pairing::PerRun => {
            let mut groups: HashMap<(&str, &str, &str), Vec<PredictionRecord>> = HashMap::new();
            for r in records {
                let (name, run) = split_run(&r.model_id);
                groups.entry((name, run, &r.partition)).or_default().push(r.clone());
            }
            let mut per_run: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
            let mut keys: Vec<_> = groups.keys().copied().collect();
            keys.sort();
            for key in keys {
                let score = rmse(&groups[&key])?;
                per_run.entry((key.0.into(), key.1.into())).or_default().push(score);
            }
            for ((name, run), scores) in per_run {
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                out.entry(name).or_default().insert(run, mean);
            }
        }
    }
    Ok(out)
}

/// Tests every model against `baseline` with the one-sided hypothesis that
/// the model's error is larger, and sorts rows by descending p-value (stable
/// in model id order). The baseline's own row has p = 1.
pub fn ranking_table(
    records: &[PredictionRecord],
    baseline: &str,
    pairing: Pairing,
    metric: ErrorMetric,
) -> Result<RankingTable> {
    let obs = observations(records, pairing, metric)?;
    let base = obs
        .get(baseline)
        .ok_or_else(|| Error::Config(format!("baseline model {baseline} has no records")))?;
    let mut rows = Vec::new();
    for (model, errors) in &obs {
        let missing: Vec<&str> = base
            .keys()
            .filter(|k| !errors.contains_key(*k))
            .chain(errors.keys().filter(|k| !base.contains_key(*k)))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "model {model} and baseline {baseline} are not paired on: {}",
                missing.join(", ")
            )));
        }
        let a: Vec<f64> = errors.values().copied().collect();
        let b: Vec<f64> = errors.keys().map(|k| base[k]).collect();
        let test = wilcoxon_signed_rank(&a, &b, Alternative::Greater, ZeroMethod::Wilcox)?;
        rows.push(RankingRow {
            model_id: model.clone(),
            p_value: test.p_value,
            pairs: a.len(),
            mean_error: a.iter().sum::<f64>() / a.len() as f64,
        });
    }
    rows.sort_by(|x, y| y.p_value.total_cmp(&x.p_value));
    Ok(RankingTable {
        baseline: baseline.to_string(),
        pairing,
        metric,
        rows,
    })
}

impl RankingTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ranking table serializes")
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.model_id.len())
            .max()
            .unwrap_or(0)
            .max("model".len());
        let mut out = format!("baseline: {}\n", self.baseline);
        out += &format!("{:<width$}  {:>10}  {:>6}  {:>12}\n", "model", "p-value", "pairs", "mean error");
        for r in &self.rows {
            out += &format!(
                "{:<width$}  {:>10.6}  {:>6}  {:>12.4}\n",
                r.model_id, r.p_value, r.pairs, r.mean_error
            );
        }
        out
    }
}
