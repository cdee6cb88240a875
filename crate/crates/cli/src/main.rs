//! `mfdnn` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage, domain, parse or i/o errors, 2 on
//! numeric failures.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use mfdnn::eval::{evaluate, predict_labels};
use mfdnn::io::{self, ModelFile, TrainingMetadata};
use mfdnn::network::ce_loss;
use mfdnn::simgen::{default_test_size, generate_train_test, grid_for, GridSpec};
use mfdnn::train::select;
use mfdnn::{
    Dataset, Error, EvalConfig, HyperGrid, ModelId, Optimizer, ProbabilityVector, Projector,
    Result, SimModel, TrainConfig,
};

#[derive(Parser)]
#[command(name = "mfdnn", version, about = "Functional data classification with sparse ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training and test sets from a simulation model.
    Simulate(SimulateArgs),
    /// Select hyperparameters on a dataset and save the refit network.
    Train(TrainArgs),
    /// Write per-sample predictions and class probabilities as CSV.
    Predict(PredictArgs),
    /// Print the error rate and confusion matrix on a labeled dataset.
    Eval(EvalArgs),
    /// Replicated simulate/select/test runs, reported as CSV.
    Benchmark(BenchmarkArgs),
    /// Train on MNIST IDX files.
    Mnist(MnistArgs),
    /// Dump a dataset file as CSV.
    ExportCsv(ExportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model name (2d-gaussian, 2d-mixed1..3, 3d-gaussian, 3d-mixed1..3) or 1..8.
    #[arg(long)]
    model: ModelId,
    /// Training samples per class.
    #[arg(long)]
    nk: usize,
    /// Sampling frequency.
    #[arg(long)]
    m: usize,
    /// Test samples per class (default pairs 200→100, 350→150, 700→300).
    #[arg(long)]
    test_nk: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training set path; the test set goes to `<stem>.test.<ext>` beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args)]
struct TrainingFlags {
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    /// Project weights into [-1, 1] after every step.
    #[arg(long)]
    clip_weights: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainingFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            optimizer: match self.optimizer {
                OptimizerArg::Adam => Optimizer::default(),
                OptimizerArg::Sgd => Optimizer::Sgd,
            },
            seed: self.seed,
            clip_weights: self.clip_weights,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Hyperparameter grid JSON: {"J":[..],"L":[..],"width":[..],"dropout":[..]}.
    #[arg(long)]
    grid: PathBuf,
    #[command(flatten)]
    training: TrainingFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Truncation constant for the reported cross-entropy.
    #[arg(long, default_value_t = 2.0)]
    c0: f64,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    model_id: ModelId,
    #[arg(long)]
    nk: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    test_nk: Option<usize>,
    #[command(flatten)]
    training: TrainingFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MnistArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    grid: PathBuf,
    /// Use only the first N training images.
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long, requires = "test_labels")]
    test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    test_labels: Option<PathBuf>,
    /// Use only the first N test images.
    #[arg(long)]
    test_limit: Option<usize>,
    #[command(flatten)]
    training: TrainingFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Mnist(a) => mnist(a),
        Command::ExportCsv(a) => export_csv(a),
    }
}

/// `data.mfdn` → `data.test.mfdn`.
fn test_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.test.{}", ext.to_string_lossy()),
        None => format!("{stem}.test"),
    };
    out.with_file_name(name)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = SimModel::preset(a.model);
    let grid = Arc::new(grid_for(model.dim, &GridSpec::Frequency(a.m))?);
    let test_nk = a.test_nk.unwrap_or_else(|| default_test_size(a.nk));
    let (train, test) = generate_train_test(&model, a.nk, test_nk, &grid, a.seed)?;
    io::save_dataset(&train.dataset, &a.out)?;
    let test_out = test_path(&a.out);
    io::save_dataset(&test.dataset, &test_out)?;
    println!(
        "wrote {} training samples to {} and {} test samples to {}",
        train.dataset.len(),
        a.out.display(),
        test.dataset.len(),
        test_out.display()
    );
    Ok(())
}

fn fit_and_save(dataset: &Dataset, hyper: &HyperGrid, cfg: &TrainConfig, out: &Path) -> Result<ModelFile> {
    let selection = select(dataset, hyper, cfg)?;
    for (cell, err) in &selection.validation_errors {
        log::info!("J={} L={} width={} dropout={}: validation error {err}", cell.j, cell.depth, cell.width, cell.dropout);
    }
    let c = selection.chosen;
    println!("chosen J={} L={} width={} dropout={}", c.j, c.depth, c.width, c.dropout);
    let file = ModelFile::new(
        &selection.final_params,
        TrainingMetadata {
            seed: cfg.seed,
            config: cfg.clone(),
            chosen: Some(c),
            grid_shape: dataset.grid.shape().to_vec(),
        },
    )?;
    io::save_model(&file, out)?;
    Ok(file)
}

fn train(a: TrainArgs) -> Result<()> {
    let dataset = io::load_dataset(&a.data)?;
    let hyper = io::load_hyper_grid(&a.grid)?;
    fit_and_save(&dataset, &hyper, &a.training.config(), &a.out)?;
    Ok(())
}

/// Scores of every sample at the model's `J`, on the dataset's own grid.
fn scores_for(file: &ModelFile, dataset: &Dataset) -> Result<Array2<f64>> {
    if dataset.grid.shape() != file.metadata.grid_shape.as_slice() {
        log::warn!(
            "model was trained on grid {:?}, data is on {:?}",
            file.metadata.grid_shape,
            dataset.grid.shape()
        );
    }
    let projector = Projector::new(Arc::clone(&dataset.grid), file.architecture.j)?;
    projector.project_all(&dataset.samples)
}

fn predict(a: PredictArgs) -> Result<()> {
    let file = io::load_model(&a.model)?;
    let params = file.params()?;
    let dataset = io::load_dataset(&a.data)?;
    let scores = scores_for(&file, &dataset)?;
    let probs = params.forward_batch(scores.view())?;
    let predicted = predict_labels(&params, scores.view())?;
    io::write_file(&a.out, io::predictions_to_csv(&predicted, &probs))?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    if !(a.c0 >= 2.0) {
        return Err(Error::Domain(format!("--c0 {} must be >= 2", a.c0)));
    }
    let file = io::load_model(&a.model)?;
    let params = file.params()?;
    let dataset = io::load_dataset(&a.data)?;
    let labels = dataset.labels()?;
    let scores = scores_for(&file, &dataset)?;
    let report = evaluate(&params, scores.view(), &labels, None, a.c0)?;
    let probs = params.forward_batch(scores.view())?;
    let loss = probs
        .rows()
        .into_iter()
        .zip(&labels)
        .map(|(p, &y)| ce_loss(&ProbabilityVector(p.to_vec()), y, Some(a.c0)))
        .sum::<f64>()
        / labels.len() as f64;

    let mut out = String::new();
    writeln!(out, "samples: {}", labels.len()).unwrap();
    writeln!(out, "error rate: {}", report.error_rate).unwrap();
    writeln!(out, "cross-entropy (truncated at C0 = {}): {loss}", a.c0).unwrap();
    writeln!(out, "confusion matrix (rows: true class, columns: predicted):").unwrap();
    for row in &report.confusion.counts {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(out, "{}", cells.join("\t")).unwrap();
    }
    print!("{out}");
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let model = SimModel::preset(a.model_id);
    let grid = Arc::new(grid_for(model.dim, &GridSpec::Frequency(a.m))?);
    let hyper = io::load_hyper_grid(&a.grid)?;
    let eval_cfg = EvalConfig {
        replicates: a.reps,
        seed: a.training.seed,
        test_per_class: a.test_nk,
        ..EvalConfig::default()
    };
    let report = mfdnn::eval::benchmark(&model, a.nk, &grid, &hyper, &a.training.config(), &eval_cfg)?;
    io::write_file(&a.out, report.to_csv())?;
    let sd = report.sd.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
    println!("{}: mean error {} (sd {sd}) over {} replicates", model.name, report.mean_error, a.reps);
    if let Some(kl) = report.mean_kl {
        println!("mean truncated KL risk (C0 = {}): {kl}", eval_cfg.c0);
    }
    Ok(())
}

fn mnist(a: MnistArgs) -> Result<()> {
    let mut train = io::load_idx(&a.images, &a.labels)?;
    if let Some(n) = a.train_limit {
        train = io::take_first(&train, n)?;
    }
    let hyper = io::load_hyper_grid(&a.grid)?;
    let file = fit_and_save(&train, &hyper, &a.training.config(), &a.out)?;
    if let (Some(images), Some(labels)) = (&a.test_images, &a.test_labels) {
        let mut test = io::load_idx(images, labels)?;
        if let Some(n) = a.test_limit {
            test = io::take_first(&test, n)?;
        }
        let params = file.params()?;
        let scores = scores_for(&file, &test)?;
        let report = evaluate(&params, scores.view(), &test.labels()?, None, 2.0)?;
        println!("test accuracy: {}", 1.0 - report.error_rate);
    }
    Ok(())
}

fn export_csv(a: ExportArgs) -> Result<()> {
    let dataset = io::load_dataset(&a.data)?;
    io::write_file(&a.out, io::dataset_to_csv(&dataset))?;
    Ok(())
}
