use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sipred::data::manifest::{load_manifest, save_dataset};
use sipred::data::{generate_synthetic, SyntheticConfig};
use sipred::eval::{
    ensemble, ranking_table, read_records, write_records, ErrorMetric, EvalReport, Pairing,
    PredictionRecord,
};
use sipred::experiment::{run_experiment_any, ExperimentConfig, Preset};
use sipred::model::checkpoint::peek_config;
use sipred::model::{predict_downsampled, Checkpoint};
use sipred::{Error, ErrorClass, Precision, Result, Scalar};

#[derive(Parser)]
#[command(name = "sipred", version, about = "Binaural speech intelligibility prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (SFMT features plus manifest).
    GenData(GenDataArgs),
    /// Train one model per partition and evaluate on the test sets.
    Train(TrainArgs),
    /// Predict every sample of a manifest with one checkpoint.
    Predict(PredictArgs),
    /// Score prediction files, average them, or rank models.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// TOML file with a synthetic generator config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "tiny")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML experiment config; without it the preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_binaural_cross_attention: bool,
    /// Output directory (overrides the config's).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "model")]
    model_id: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Single,
    Ensemble,
    Stats,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction CSV files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "single")]
    mode: EvalMode,
    /// Baseline model id for stats mode.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, value_enum, default_value = "squared")]
    metric: MetricArg,
    #[arg(long, value_enum, default_value = "per-sample")]
    pairing: PairingArg,
    /// Directory for machine-readable outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Squared,
    Absolute,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairingArg {
    PerSample,
    PerRun,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<SyntheticConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => args.preset.parse::<Preset>()?.synthetic(0),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let data = generate_synthetic::<f32>(&config)?;
    create_dir(&args.out)?;
    let manifest = save_dataset(&data.dataset, &args.out)?;
    write(
        &args.out.join("synthetic.toml"),
        &toml::to_string(&config).expect("config serializes"),
    )?;
    eprintln!(
        "wrote {} samples to {}",
        data.dataset.len(),
        manifest.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(preset)) => {
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(preset));
            ExperimentConfig::preset(preset.parse()?, 0, out)
        }
        (None, None) => return Err(Error::Config("train needs --config or --preset".into())),
    };
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    if args.no_binaural_cross_attention {
        config.head.binaural_cross_attention = false;
        if config.model_id == "head" {
            config.model_id = "head-nocross".into();
        }
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let summary = run_experiment_any(&config)?;
    print!("{}", summary.report.to_text());
    println!("constant predictor mean RMSE {:.4}", summary.constant_rmse);
    eprintln!("outputs in {}", summary.output_dir.display());
    Ok(())
}

fn predict_with<T: Scalar>(args: &PredictArgs) -> Result<Vec<PredictionRecord>> {
    let ck = Checkpoint::<T>::load(&args.checkpoint)?;
    let data = load_manifest::<T>(&args.manifest)?;
    let mut records = Vec::with_capacity(data.len());
    for s in &data.samples {
        let input = s.input()?.downsampled(ck.config.downsample_factor)?;
        let y = predict_downsampled(&input, &ck.params, &ck.config)
            .map_err(|e| Error::Validation(format!("sample {}: {e}", s.id)))?;
        let prediction = y.to_f64().filter(|p| p.is_finite()).ok_or_else(|| {
            Error::Numeric(format!("non-finite prediction for sample {}", s.id))
        })?;
        records.push(PredictionRecord {
            sample_id: s.id.clone(),
            model_id: args.model_id.clone(),
            partition: s.partition.clone().unwrap_or_else(|| "all".into()),
            prediction,
            target: s.correctness,
        });
    }
    Ok(records)
}

fn predict(args: PredictArgs) -> Result<()> {
    let (code, _) = peek_config(&args.checkpoint)?;
    let records = match Precision::from_code(code) {
        Some(Precision::F64) => predict_with::<f64>(&args)?,
        _ => predict_with::<f32>(&args)?,
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_records(&args.out, &records)?;
    eprintln!("wrote {} predictions to {}", records.len(), args.out.display());
    Ok(())
}

fn model_ids(records: &[PredictionRecord]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for r in records {
        if !ids.contains(&r.model_id) {
            ids.push(r.model_id.clone());
        }
    }
    ids
}

fn reports(records: &[PredictionRecord]) -> Result<Vec<EvalReport>> {
    model_ids(records)
        .iter()
        .map(|id| {
            let own: Vec<PredictionRecord> =
                records.iter().filter(|r| &r.model_id == id).cloned().collect();
            EvalReport::from_records(id, &own)
        })
        .collect()
}

fn eval(args: EvalArgs) -> Result<()> {
    let sets = args
        .files
        .iter()
        .map(read_records)
        .collect::<Result<Vec<_>>>()?;
    if let Some(out) = &args.out {
        create_dir(out)?;
    }
    match args.mode {
        EvalMode::Single => {
            let all: Vec<PredictionRecord> = sets.into_iter().flatten().collect();
            let reports = reports(&all)?;
            for r in &reports {
                print!("{}", r.to_text());
            }
            if let Some(out) = &args.out {
                write(
                    &out.join("report.json"),
                    &(serde_json::to_string_pretty(&reports).expect("report serializes") + "\n"),
                )?;
            }
        }
        EvalMode::Ensemble => {
            let refs: Vec<&[PredictionRecord]> = sets.iter().map(Vec::as_slice).collect();
            let averaged = ensemble(&refs, "ensemble")?;
            let report = EvalReport::from_records("ensemble", &averaged)?;
            print!("{}", report.to_text());
            if let Some(out) = &args.out {
                write_records(out.join("ensemble.csv"), &averaged)?;
                write(
                    &out.join("report.json"),
                    &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
                )?;
            }
        }
        EvalMode::Stats => {
            let all: Vec<PredictionRecord> = sets.into_iter().flatten().collect();
            let baseline = args
                .baseline
                .ok_or_else(|| Error::Config("stats mode needs --baseline".into()))?;
            let metric = match args.metric {
                MetricArg::Squared => ErrorMetric::Squared,
                MetricArg::Absolute => ErrorMetric::Absolute,
            };
            let pairing = match args.pairing {
                PairingArg::PerSample => Pairing::PerSample,
                PairingArg::PerRun => Pairing::PerRun,
            };
            let table = ranking_table(&all, &baseline, pairing, metric)?;
            print!("{}", table.to_text());
            if let Some(out) = &args.out {
                write(&out.join("ranking.json"), &(table.to_json() + "\n"))?;
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
