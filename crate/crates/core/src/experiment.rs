//! End-to-end experiments: data, three per-partition trainings and test
//! evaluation, driven by one TOML document.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/desk"
//! precision = "f32"
//! model_id = "head"
//!
//! [head]            # HeadConfig; num_layers/feature_dim default to the data's
//! proj_dim = 32
//!
//! [train]           # TrainConfig
//! steps = 3000
//!
//! [data]            # kind = "synthetic" with SyntheticConfig fields,
//! kind = "manifest" # or kind = "manifest" with a path
//! path = "data/manifest.json"
//!
//! [partition]       # PartitionConfig
//! scheme = "random"
//! ```
//!
//! Partition `i` trains with seed `seed + i`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::manifest::load_manifest;
use crate::data::{
    generate_synthetic, make_partitions, Dataset, PartitionConfig, PartitionSet, Sample,
    SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::eval::{constant_predictor_rmse, evaluate, write_records, EvalReport, PredictionRecord, TestSet};
use crate::model::{Checkpoint, HeadConfig};
use crate::optim::{train, TrainConfig, TrainHistory};
use crate::scalar::{Precision, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Manifest { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
    Tiny,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            "tiny" => Ok(Preset::Tiny),
            _ => Err(Error::Config(format!(
                "unknown preset {s:?} (expected paper, desk or tiny)"
            ))),
        }
    }
}

impl Preset {
    pub fn synthetic(self, seed: u64) -> SyntheticConfig {
        match self {
            Preset::Paper => SyntheticConfig::paper(seed),
            Preset::Desk => SyntheticConfig::desk(seed),
            Preset::Tiny => SyntheticConfig::tiny(seed),
        }
    }

    pub fn head(self, num_layers: usize, feature_dim: usize) -> HeadConfig {
        match self {
            Preset::Paper => HeadConfig::new(num_layers, feature_dim),
            Preset::Desk | Preset::Tiny => HeadConfig::desk(num_layers, feature_dim),
        }
    }

    pub fn train(self, seed: u64) -> TrainConfig {
        match self {
            Preset::Paper => TrainConfig::paper(seed),
            Preset::Desk => TrainConfig::desk(seed),
            Preset::Tiny => TrainConfig::tiny(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    #[serde(default)]
    pub head: HeadConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataSource,
    #[serde(default)]
    pub partition: PartitionConfig,
}

fn default_precision() -> Precision {
    Precision::F32
}

fn default_model_id() -> String {
    "head".into()
}

impl ExperimentConfig {
    /// Preset on synthetic data whose generator shares `seed`.
    pub fn preset(preset: Preset, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        let synthetic = preset.synthetic(seed);
        ExperimentConfig {
            seed,
            output_dir: output_dir.into(),
            precision: Precision::F32,
            model_id: default_model_id(),
            head: preset.head(synthetic.num_layers, synthetic.feature_dim),
            train: preset.train(seed),
            data: DataSource::Synthetic(synthetic),
            partition: PartitionConfig::default(),
        }
    }

    /// Parses TOML; relative manifest and output paths resolve against
    /// `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        if let DataSource::Manifest { path } = &mut config.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// Sets the experiment, training and (for synthetic data) generator
    /// seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        if let DataSource::Synthetic(s) = &mut self.data {
            s.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        if self.model_id.is_empty() || self.model_id.contains(',') {
            return Err(Error::Config(format!("invalid model id {:?}", self.model_id)));
        }
        Ok(())
    }
}

/// Results of one partition's training.
pub struct PartitionRun<T> {
    pub partition: String,
    pub best: Checkpoint<T>,
    pub last: Checkpoint<T>,
    pub history: TrainHistory,
    /// RMSE on this partition's test set of the mean-training-target predictor.
    pub constant_rmse: f64,
}

pub struct ExperimentOutcome<T> {
    /// Config after filling in data-dependent fields; written to
    /// `output_dir/config.toml`.
    pub config: ExperimentConfig,
    pub dataset: Dataset<T>,
    pub partitions: PartitionSet,
    pub runs: Vec<PartitionRun<T>>,
    pub report: EvalReport,
    pub records: Vec<PredictionRecord>,
}

impl<T> ExperimentOutcome<T> {
    /// Mean over partitions of the constant-predictor test RMSE.
    pub fn constant_rmse(&self) -> f64 {
        self.runs.iter().map(|r| r.constant_rmse).sum::<f64>() / self.runs.len() as f64
    }

    pub fn dev_rmse(&self) -> Vec<Option<f64>> {
        self.runs.iter().map(|r| r.best.meta.dev_rmse).collect()
    }
}

pub fn load_data<T: Scalar>(source: &DataSource) -> Result<Dataset<T>> {
    match source {
        DataSource::Synthetic(s) => Ok(generate_synthetic(s)?.dataset),
        DataSource::Manifest { path } => load_manifest(path),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs an experiment in the precision fixed by the type parameter.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig) -> Result<ExperimentOutcome<T>> {
    config.validate()?;
    let dataset = load_data::<T>(&config.data)?;
    run_on_dataset(config, dataset)
}

/// Like [`run_experiment`] with an already loaded dataset; the config's data
/// source is recorded but not read.
pub fn run_on_dataset<T: Scalar>(config: &ExperimentConfig, dataset: Dataset<T>) -> Result<ExperimentOutcome<T>> {
    config.validate()?;
    let mut config = config.clone();
    config.train.seed = config.seed;
    config.train.checkpoint_path = None;
    let (layers, dim) = dataset
        .feature_dims()
        .ok_or_else(|| Error::Validation("dataset is empty".into()))?;
    let head = &mut config.head;
    let configured = [head.num_layers, head.feature_dim];
    if configured.iter().zip([layers, dim]).any(|(&c, a)| c != 0 && c != a) {
        return Err(Error::shape("experiment data", &configured, &[layers, dim]));
    }
    head.num_layers = layers;
    head.feature_dim = dim;
    config.head.validate()?;

    let out = config.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_text(&out.join("config.toml"), &config.to_toml())?;

    let partitions = make_partitions(&dataset, &config.partition, config.seed)?;
    let layout: Vec<serde_json::Value> = partitions
        .partitions
        .iter()
        .map(|p| {
            let ids = |v: &[usize]| v.iter().map(|&i| dataset.samples[i].id.clone()).collect::<Vec<_>>();
            serde_json::json!({"name": p.name, "train": ids(&p.train), "dev": ids(&p.dev), "test": ids(&p.test)})
        })
        .collect();
    write_text(
        &out.join("partitions.json"),
        &(serde_json::to_string_pretty(&layout).expect("layout serializes") + "\n"),
    )?;

    let pick = |v: &[usize]| -> Vec<&Sample<T>> { v.iter().map(|&i| &dataset.samples[i]).collect() };
    let mut runs = Vec::new();
    for (i, p) in partitions.partitions.iter().enumerate() {
        let train_config = TrainConfig {
            seed: config.seed.wrapping_add(i as u64),
            checkpoint_path: Some(out.join(&p.name)),
            ..config.train.clone()
        };
        let (train_set, dev_set, test_set) = (pick(&p.train), pick(&p.dev), pick(&p.test));
        let outcome = train(&train_set, &dev_set, &config.head, &train_config)?;
        let train_targets: Vec<f64> = train_set.iter().map(|s| s.correctness).collect();
        let test_targets: Vec<f64> = test_set.iter().map(|s| s.correctness).collect();
        runs.push(PartitionRun {
            partition: p.name.clone(),
            best: outcome.best,
            last: outcome.last,
            history: outcome.history,
            constant_rmse: constant_predictor_rmse(&train_targets, &test_targets)?,
        });
    }

    let checkpoints: Vec<&Checkpoint<T>> = runs.iter().map(|r| &r.best).collect();
    let test_sets: Vec<TestSet<'_, T>> = partitions
        .partitions
        .iter()
        .map(|p| TestSet {
            partition: p.name.clone(),
            samples: pick(&p.test),
        })
        .collect();
    let (report, records) = evaluate(&config.model_id, &checkpoints, &test_sets)?;
    write_records(out.join("test_predictions.csv"), &records)?;
    let summary = serde_json::json!({
        "report": report,
        "constant_predictor_rmse": runs.iter().map(|r| r.constant_rmse).collect::<Vec<_>>(),
        "dev_rmse": runs.iter().map(|r| r.best.meta.dev_rmse).collect::<Vec<_>>(),
    });
    write_text(
        &out.join("report.json"),
        &(serde_json::to_string_pretty(&summary).expect("report serializes") + "\n"),
    )?;
    Ok(ExperimentOutcome {
        config,
        dataset,
        partitions,
        runs,
        report,
        records,
    })
}

/// Precision-erased summary for callers that pick the precision at run time.
pub struct ExperimentSummary {
    pub report: EvalReport,
    pub constant_rmse: f64,
    pub output_dir: PathBuf,
}

pub fn run_experiment_any(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    fn go<T: Scalar>(c: &ExperimentConfig) -> Result<ExperimentSummary> {
        let o = run_experiment::<T>(c)?;
        Ok(ExperimentSummary {
            constant_rmse: o.constant_rmse(),
            report: o.report,
            output_dir: o.config.output_dir,
        })
    }
    match config.precision {
        Precision::F32 => go::<f32>(config),
        Precision::F64 => go::<f64>(config),
    }
}
