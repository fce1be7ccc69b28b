//! Command-line workflows: generate, label, train, predict and evaluate.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use steiner_core::data::{generate_dataset, label_dataset, DatasetFile};
use steiner_core::eval::{evaluate, evaluate_oracle};
use steiner_core::io::{
    load_checkpoint, load_dataset, save_checkpoint, save_dataset, save_eval_csv, save_history,
    save_predictions, save_text, Checkpoint, PredictionRecord, TrainingMeta,
};
use steiner_core::net::{Net, DEFAULT_COORD_MAX};
use steiner_core::predict::{predict_batch, refine, route_prediction, DEFAULT_THRESHOLD};
use steiner_core::rsmt::DEFAULT_MAX_DEGREE;
use steiner_core::train::{split_dataset, train_with_observer, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "steiner", version, about = "Steiner point prediction on Hanan grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate random unlabeled nets.
    Gen(GenArgs),
    /// Add exact Steiner labels and optimal wirelengths.
    Label(LabelArgs),
    /// Train a model on a labeled dataset.
    Train(TrainArgs),
    /// Predict Steiner points and route each net.
    Predict(PredictArgs),
    /// Score predictions against oracle labels.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Degrees as `3..8` (inclusive), `3,5,7` or a single number.
    #[arg(long, value_parser = parse_degrees)]
    pub degrees: DegreeList,
    #[arg(long)]
    pub per_degree: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_COORD_MAX)]
    pub coord_max: i64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct JobsArg {
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_DEGREE)]
    pub max_degree: usize,
    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled dataset, split 80/10/10 into train/validation/test.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-epoch losses and validation accuracy as CSV.
    #[arg(long)]
    pub history: PathBuf,
    /// Where to write the held-out test nets.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 100)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.225)]
    pub attention_dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    pub layer_dropout: f64,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labeled dataset.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Score the oracle's own labels instead of a model.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Plain-text summary.
    #[arg(long)]
    pub report: PathBuf,
    /// Per-net rows.
    #[arg(long)]
    pub csv: PathBuf,
    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeList(pub Vec<usize>);

/// Parses `3..8`, `3,4,5` or `7`.
pub fn parse_degrees(s: &str) -> std::result::Result<DegreeList, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("`{t}` is not a degree"))
    };
    let degrees = if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(format!("empty degree range {s}"));
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?
    };
    if let Some(d) = degrees.iter().find(|&&d| d < 2) {
        return Err(format!("degree {d} is below 2"));
    }
    Ok(DegreeList(degrees))
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        bail!("threshold {t} is outside [0, 1]");
    }
    Ok(())
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker threads")?;
    pool.install(f)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Label(a) => label(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let degrees = a.degrees.0;
    if a.per_degree == 0 {
        bail!("--per-degree must be positive");
    }
    let file = generate_dataset(&degrees, a.per_degree, a.seed, a.coord_max)?;
    save_dataset(&a.out, &file)?;
    println!("wrote {} nets to {}", file.records.len(), a.out.display());
    Ok(())
}

fn label(a: LabelArgs) -> Result<()> {
    let file = load_dataset(&a.input)?;
    let labeled = with_jobs(a.jobs.jobs, || Ok(label_dataset(&file, a.max_degree)?))?;
    save_dataset(&a.out, &labeled)?;
    println!("labeled {} nets into {}", labeled.records.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::new(a.seed);
    cfg.learning_rate = a.learning_rate;
    cfg.patience = a.patience;
    cfg.max_epochs = a.max_epochs;
    cfg.batch_size = a.batch_size;
    cfg.l2_lambda = a.l2;
    cfg.model.attention_dropout = a.attention_dropout;
    cfg.model.layer_dropout = a.layer_dropout;
    cfg.validate()?;
    for (name, rate) in [("attention", a.attention_dropout), ("layer", a.layer_dropout)] {
        if !(0.0..1.0).contains(&rate) {
            bail!("{name} dropout {rate} is outside [0, 1)");
        }
    }

    let file = load_dataset(&a.data)?;
    let records = file.records;
    if let Some(r) = records.iter().find(|r| !r.is_labeled()) {
        bail!("{}: net {} has no labels", a.data.display(), r.id);
    }
    let split = split_dataset(records, a.seed)?;
    let to_labeled = |rs: &[_]| -> Result<Vec<_>> {
        Ok(DatasetFile { records: rs.to_vec() }.labeled()?)
    };
    let (train_set, val_set) = (to_labeled(&split.train)?, to_labeled(&split.val)?);

    let verbose = a.verbose;
    let outcome = train_with_observer(&cfg, &train_set, &val_set, |r| {
        if verbose {
            eprintln!(
                "epoch {} train_loss {} val_loss {} val_accuracy {}",
                r.epoch, r.train_loss, r.val_loss, r.val_accuracy
            );
        }
    })?;

    let checkpoint = Checkpoint {
        params: outcome.params,
        training: TrainingMeta {
            seed: a.seed,
            epochs_run: outcome.history.len(),
            best_epoch: outcome.best_epoch,
            best_val_loss: outcome.best_val_loss,
        },
    };
    save_checkpoint(&a.checkpoint, &checkpoint)?;
    save_history(&a.history, &outcome.history)?;
    if let Some(path) = &a.test_out {
        save_dataset(path, &DatasetFile { records: split.test })?;
    }
    println!(
        "trained {} epochs, best epoch {} with validation loss {}",
        outcome.history.len(),
        outcome.best_epoch,
        outcome.best_val_loss
    );
    Ok(())
}

/// Nets per forward pass.
const PREDICT_BATCH: usize = 256;

fn predict(a: PredictArgs) -> Result<()> {
    check_threshold(a.threshold)?;
    let params = load_checkpoint(&a.checkpoint)?.params;
    let nets = load_dataset(&a.input)?.nets()?;
    let records = with_jobs(a.jobs.jobs, || {
        let chunks = nets
            .par_chunks(PREDICT_BATCH)
            .map(|chunk| -> Result<Vec<PredictionRecord>> {
                let preds = predict_batch(&params, chunk, a.threshold)?;
                Ok(chunk
                    .iter()
                    .zip(&preds)
                    .map(|(net, pred)| routed_record(net, pred))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(chunks.into_iter().flatten().collect::<Vec<_>>())
    })?;
    save_predictions(&a.out, &records)?;
    println!("wrote {} predictions to {}", records.len(), a.out.display());
    Ok(())
}

fn routed_record(net: &Net, pred: &steiner_core::predict::SteinerPrediction) -> PredictionRecord {
    let tree = route_prediction(net, pred);
    let r = refine(net, pred, &tree);
    PredictionRecord {
        id: net.id(),
        selected: r.selected,
        wl: r.tree.total_wirelength,
        refined: r.refined,
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    check_threshold(a.threshold)?;
    let params = match &a.checkpoint {
        Some(path) => Some(load_checkpoint(path)?.params),
        None => None,
    };
    let dataset = load_dataset(&a.input)?.labeled()?;
    let report = with_jobs(a.jobs.jobs, || {
        Ok(match &params {
            Some(p) => evaluate(p, &dataset, a.threshold)?,
            None => evaluate_oracle(&dataset)?,
        })
    })?;
    let text = report.to_string();
    save_text(&a.report, &text)?;
    save_eval_csv(&a.csv, &report)?;
    print!("{text}");
    Ok(())
}
