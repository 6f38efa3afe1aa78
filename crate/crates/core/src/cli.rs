//! Command-line entry point: `synth-data`, `train`, `eval`, `serve`.
//!
//! Every subcommand accepts `--config FILE` (TOML); flags given on the
//! command line override file values, and the merged settings are written as
//! `resolved_config.toml` into the output directory, from which the run can
//! be repeated with `--config` alone. Exit status: 0 success, 1 user error,
//! 2 internal error.

use std::ffi::OsString;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{build_dataset, load_segments, DatasetManifest, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, separation_scores, sort_records, write_report, SweepSpec};
use crate::model::{init_params, Checkpoint, ModelConfig, Variant};
use crate::service::{AppState, LoadedModel, ServiceConfig};
use crate::training::{train, write_history_csv, LossWeights, StopReason, TrainConfig};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Parser)]
#[command(name = "remixer", version, about = "Separate, remix and evaluate music mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-instrument dataset.
    SynthData(SynthArgs),
    /// Train a separator / remixer.
    Train(TrainArgs),
    /// Run the gain sweep and write records, summary and curves.
    Eval(EvalArgs),
    /// Serve a checkpoint over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Track length in seconds.
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Dataset manifest (file or directory containing manifest.json).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub segment_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to evaluate; repeat to compare variants in one report.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Longest accepted upload in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub max_upload_s: f64,
}

/// Settings of `synth-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SynthRun {
    pub out: Option<PathBuf>,
    pub dataset: SynthConfig,
}

/// Settings of `train`. `model.k` follows the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Settings of `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRun {
    pub checkpoints: Vec<PathBuf>,
    pub data: Option<PathBuf>,
    pub split: Split,
    pub out: Option<PathBuf>,
    pub sweep: SweepSpec,
}

impl Default for EvalRun {
    fn default() -> Self {
        EvalRun {
            checkpoints: Vec::new(),
            data: None,
            split: Split::Test,
            out: None,
            sweep: SweepSpec::default(),
        }
    }
}

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_resolved<T: Serialize>(dir: &Path, cfg: &T) -> Result<()> {
    let text = toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join(RESOLVED_CONFIG);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn required<'a>(v: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    v.as_ref().ok_or_else(|| Error::Config(format!("{what} is required (flag or config file)")))
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn is_nonempty_dir(path: &Path) -> bool {
    std::fs::read_dir(path).map(|mut d| d.next().is_some()).unwrap_or(false)
}

/// Absolute form of a path, so resolved configs stay valid from any working directory.
fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

pub fn synth_data(args: SynthArgs) -> Result<()> {
    let mut run: SynthRun = load_config(args.config.as_deref())?;
    if args.out.is_some() {
        run.out = args.out;
    }
    let d = &mut run.dataset;
    set(&mut d.k, args.k);
    set(&mut d.seed, args.seed);
    set(&mut d.n_train, args.n_train);
    set(&mut d.n_val, args.n_val);
    set(&mut d.n_test, args.n_test);
    set(&mut d.duration_s, args.duration_s);
    set(&mut d.sample_rate, args.sample_rate);
    let out = required(&run.out, "--out")?.clone();
    if is_nonempty_dir(&out) && !args.force {
        return Err(Error::Config(format!(
            "{} exists and is not empty; pass --force to write into it",
            out.display()
        )));
    }
    run.out = Some(absolute(&out));
    ensure_dir(&out)?;
    let manifest = build_dataset(&out, &run.dataset)?;
    write_resolved(&out, &run)?;
    println!(
        "wrote {} items ({} sources) to {}",
        manifest.items.len(),
        manifest.k,
        out.join(crate::data::MANIFEST_FILE).display()
    );
    Ok(())
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut run: TrainRun = load_config(args.config.as_deref())?;
    if args.data.is_some() {
        run.data = args.data;
    }
    if args.out.is_some() {
        run.out = args.out;
    }
    let t = &mut run.train;
    set(&mut t.variant, args.variant);
    set(&mut t.seed, args.seed);
    set(&mut t.learning_rate, args.learning_rate);
    set(&mut t.batch_size, args.batch_size);
    set(&mut t.max_epochs, args.max_epochs);
    set(&mut t.patience, args.patience);
    set(&mut t.segment_s, args.segment_s);
    if t.variant == Variant::Baseline {
        if args.psi.is_some() || args.lambda.is_some() {
            log::warn!("--psi/--lambda are ignored for the baseline, which trains on source terms only");
        }
        t.loss_weights = LossWeights::SOURCE_ONLY;
    } else {
        set(&mut t.loss_weights.psi, args.psi);
        set(&mut t.loss_weights.lambda, args.lambda);
    }

    let data = required(&run.data, "--data")?.clone();
    let out = required(&run.out, "--out")?.clone();
    let manifest = DatasetManifest::load(&data)?;
    if run.model.k != manifest.k {
        if args.config.is_some() {
            return Err(Error::Config(format!(
                "config has k = {} but the dataset has {} sources",
                run.model.k, manifest.k
            )));
        }
        run.model.k = manifest.k;
    }
    run.model.sample_rate = manifest.sample_rate;
    run.model.validate()?;
    run.train.validate()?;
    run.data = Some(absolute(&data));
    run.out = Some(absolute(&out));

    let seg = run.train.segment_s;
    let train_set: Vec<_> = load_segments(&manifest, Split::Train, seg, seg, true)?
        .into_iter()
        .map(|s| s.sources)
        .collect();
    let val_set: Vec<_> = load_segments(&manifest, Split::Val, seg, seg, true)?
        .into_iter()
        .map(|s| s.sources)
        .collect();
    log::info!("{} training and {} validation segments", train_set.len(), val_set.len());

    ensure_dir(&out)?;
    write_resolved(&out, &run)?;
    let initial = init_params(&run.model, run.train.seed)?;
    let outcome = train(&run.train, initial, manifest.labels.clone(), &train_set, &val_set)?;
    outcome.checkpoint.save(out.join("checkpoint.json"))?;
    write_history_csv(out.join("history.csv"), &outcome.history)?;
    println!(
        "stopped after {} epochs ({}); best epoch {}",
        outcome.history.len(),
        outcome.stop_reason.as_str(),
        outcome.checkpoint.metadata.best_epoch
    );
    if outcome.stop_reason == StopReason::Diverged {
        return Err(Error::Numerical(format!(
            "training diverged ({}); best checkpoint saved",
            outcome.failure.unwrap_or_default()
        )));
    }
    Ok(())
}

pub fn eval_cmd(args: EvalArgs) -> Result<()> {
    let mut run: EvalRun = load_config(args.config.as_deref())?;
    if !args.checkpoint.is_empty() {
        run.checkpoints = args.checkpoint;
    }
    if args.data.is_some() {
        run.data = args.data;
    }
    if args.out.is_some() {
        run.out = args.out;
    }
    set(&mut run.split, args.split);
    if run.checkpoints.is_empty() {
        return Err(Error::Config("at least one --checkpoint is required".into()));
    }
    let data = required(&run.data, "--data")?.clone();
    let out = required(&run.out, "--out")?.clone();
    let manifest = DatasetManifest::load(&data)?;
    run.data = Some(absolute(&data));
    run.out = Some(absolute(&out));
    run.checkpoints = run.checkpoints.iter().map(|p| absolute(p)).collect();

    let mut records = Vec::new();
    let mut scores = serde_json::Map::new();
    for path in &run.checkpoints {
        let ck = Checkpoint::load(path)?;
        let name = ck.variant.to_string();
        if scores.contains_key(&name) {
            return Err(Error::invalid(format!("two checkpoints of variant {name}; evaluate them separately")));
        }
        records.extend(evaluate(&ck, &manifest, run.split, &run.sweep)?);
        let s = separation_scores(&ck, &manifest, run.split)?;
        scores.insert(name, serde_json::to_value(s).map_err(|e| Error::Format(e.to_string()))?);
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("split {} has no evaluation segments", run.split)));
    }
    sort_records(&mut records);
    ensure_dir(&out)?;
    write_resolved(&out, &run)?;
    write_report(&out, &records, &manifest.labels)?;
    let path = out.join("separation.json");
    let mut text = serde_json::to_string_pretty(&scores).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("wrote {} records to {}", records.len(), out.join("records.csv").display());
    Ok(())
}

pub fn serve_cmd(args: ServeArgs) -> Result<()> {
    if !(args.max_upload_s > 0.0) {
        return Err(Error::invalid("--max-upload-s must be positive"));
    }
    let model = LoadedModel::from_file(&args.checkpoint)?;
    let state = AppState::new(
        Some(model),
        ServiceConfig {
            max_upload_s: args.max_upload_s,
            ..ServiceConfig::default()
        },
    );
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Config(format!("cannot start runtime: {e}")))?;
    rt.block_on(async move {
        let listener = crate::service::bind(SocketAddr::new(args.host, args.port)).await?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::Config(format!("cannot read bound address: {e}")))?;
        println!("listening on http://{addr}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        crate::service::serve(state, listener, async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
    })
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}
