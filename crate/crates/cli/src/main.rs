//! Command-line front end for the torscope pipeline: synthesize labeled
//! corpora, extract flow features, train and evaluate classifiers, and run
//! single experiments or the full 16-cell grid.
//!
//! Every path is explicit — nothing is resolved against the working
//! directory implicitly. Commands exit 0 on success and nonzero with a
//! one-line diagnostic on failure.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use torscope_core::features::{
    apply_scaler, fit_scaler, load_dataset, load_scaler, save_dataset, save_scaler, FeatureVector,
};
use torscope_core::flow::FlowConfig;
use torscope_core::learn::{
    forest::train_random_forest, knn::train_knn, load_model, predict, save_model,
    svm::train_linear_svm_ovr, LabeledDataset, ModelKind,
};
use torscope_core::metrics::{
    overall_metrics, per_class_metrics, render_overall, render_per_class_table, report_key_values,
    ConfusionMatrix,
};
use torscope_core::pipeline::{
    extract_dataset, run_experiment, run_grid, write_reports, ExperimentConfig, Hyperparams,
};
use torscope_core::synth::{
    build_labeled_corpus, default_archetypes, load_archetypes, load_manifest, PaddingConfig,
    PaddingMode, MANIFEST_NAME,
};

#[derive(Parser)]
#[command(
    name = "torscope",
    version,
    about = "Batch pipeline for app classification over padded TCP captures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus of padded PCAP sessions.
    Synth(SynthArgs),
    /// Turn a corpus into a feature dataset file.
    Extract(ExtractArgs),
    /// Fit a scaler and train one classifier on a dataset file.
    Train(TrainArgs),
    /// Evaluate a trained model against a labeled dataset file.
    Evaluate(EvaluateArgs),
    /// Cross-validate all classifiers over a corpus and write reports.
    Experiment(ExperimentArgs),
    /// Run the 16-cell configuration grid over two corpora.
    Grid(GridArgs),
}

fn padding_mode(s: &str) -> Result<PaddingMode, torscope_core::Error> {
    s.parse()
}

fn model_kind(s: &str) -> Result<ModelKind, String> {
    match s {
        "knn" => Ok(ModelKind::Knn),
        "forest" => Ok(ModelKind::RandomForest),
        "svm" => Ok(ModelKind::LinearSvmOvr),
        other => Err(format!(
            "unknown model {other:?} (expected knn, forest, or svm)"
        )),
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write PCAPs and the manifest into.
    #[arg(long)]
    out_dir: PathBuf,
    /// Sessions generated per archetype.
    #[arg(long, default_value_t = 50)]
    sessions_per_class: usize,
    /// Length of each session in seconds.
    #[arg(long, default_value_t = 120.0)]
    duration_s: f64,
    /// Connection padding mode: none, reduced, or full.
    #[arg(long, value_parser = padding_mode, default_value = "reduced")]
    padding: PaddingMode,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// TOML archetype definitions; defaults to the six built-ins.
    #[arg(long)]
    archetypes: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Corpus directory containing manifest.csv and its PCAP files.
    #[arg(long)]
    corpus: PathBuf,
    /// Flow window length T_F in seconds.
    #[arg(long, default_value_t = 10.0)]
    flow_timeout_s: f64,
    /// Active/idle gap threshold T_A in seconds.
    #[arg(long, default_value_t = 2.0)]
    activity_timeout_s: f64,
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file produced by `extract`.
    #[arg(long)]
    dataset: PathBuf,
    /// Classifier to train: knn, forest, or svm.
    #[arg(long, value_parser = model_kind)]
    model: ModelKind,
    /// Model file to write (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Scaler file to write; evaluation needs it to standardize inputs.
    #[arg(long)]
    scaler_out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Scaler file written alongside the model.
    #[arg(long)]
    scaler: PathBuf,
    /// Labeled dataset file to score.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory the report files are written into.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Corpus directory containing manifest.csv and its PCAP files.
    #[arg(long)]
    corpus: PathBuf,
    /// Directory the report files are written into.
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML file supplying any parameter fields; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    flow_timeout_s: Option<f64>,
    #[arg(long)]
    activity_timeout_s: Option<f64>,
    /// Set to false to exclude browser-labeled flows.
    #[arg(long)]
    include_browser: Option<bool>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct GridArgs {
    /// Corpus directory generated with reduced padding.
    #[arg(long)]
    corpus_reduced: PathBuf,
    /// Corpus directory generated with full padding.
    #[arg(long)]
    corpus_full: PathBuf,
    /// Directory receiving one exp01..exp16 subdirectory per cell.
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML file supplying any parameter fields; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct HyperArgs {
    /// Neighbors consulted by k-NN.
    #[arg(long)]
    knn_k: Option<usize>,
    /// Trees in the random forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Depth limit for forest trees; unlimited when absent.
    #[arg(long)]
    max_depth: Option<usize>,
    /// SVM regularization constant C.
    #[arg(long)]
    svm_c: Option<f64>,
    /// SVM training epochs.
    #[arg(long)]
    svm_epochs: Option<usize>,
}

/// Optional config-file counterpart of the experiment/grid flags.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    flow_timeout_s: Option<f64>,
    activity_timeout_s: Option<f64>,
    include_browser: Option<bool>,
    folds: Option<usize>,
    seed: Option<u64>,
    knn_k: Option<usize>,
    trees: Option<usize>,
    max_depth: Option<usize>,
    svm_c: Option<f64>,
    svm_epochs: Option<usize>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
        }
    }
}

fn resolve_hyperparams(flags: &HyperArgs, file: &FileConfig) -> Hyperparams {
    let defaults = Hyperparams::default();
    Hyperparams {
        knn_k: flags.knn_k.or(file.knn_k).unwrap_or(defaults.knn_k),
        trees: flags.trees.or(file.trees).unwrap_or(defaults.trees),
        max_depth: flags.max_depth.or(file.max_depth),
        svm_c: flags.svm_c.or(file.svm_c).unwrap_or(defaults.svm_c),
        svm_epochs: flags
            .svm_epochs
            .or(file.svm_epochs)
            .unwrap_or(defaults.svm_epochs),
    }
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => synth(args),
        Command::Extract(args) => extract(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Experiment(args) => experiment(args),
        Command::Grid(args) => grid(args),
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let specs = match &args.archetypes {
        Some(path) => load_archetypes(path)
            .with_context(|| format!("loading archetypes from {}", path.display()))?,
        None => default_archetypes(),
    };
    let padding = PaddingConfig::new(args.padding);
    let manifest = build_labeled_corpus(
        &specs,
        args.sessions_per_class,
        args.duration_s,
        &padding,
        args.seed,
        &args.out_dir,
    )?;
    println!(
        "wrote {} sessions ({} classes, padding {}) to {}",
        manifest.rows.len(),
        specs.len(),
        manifest.padding_mode,
        args.out_dir.display()
    );
    Ok(())
}

fn extract(args: ExtractArgs) -> Result<()> {
    let manifest = load_manifest(&args.corpus.join(MANIFEST_NAME))
        .with_context(|| format!("loading corpus manifest from {}", args.corpus.display()))?;
    let flow_config = FlowConfig::new(args.flow_timeout_s, args.activity_timeout_s)?;
    let dataset = extract_dataset(&manifest, &args.corpus, &flow_config)?;
    save_dataset(&dataset, &args.out)?;
    println!(
        "extracted {} flows from {} sessions to {}",
        dataset.vectors.len(),
        manifest.rows.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let fitted_on = args.dataset.display().to_string();
    let scaler = fit_scaler(&dataset.vectors, &fitted_on)?;
    let scaled: Vec<FeatureVector> = dataset
        .vectors
        .iter()
        .map(|v| apply_scaler(&scaler, v))
        .collect();
    let train_set = LabeledDataset::from_vectors(scaled, &scaler.fitted_on)?;
    let hyper = resolve_hyperparams(&args.hyper, &FileConfig::default());
    let model = match args.model {
        ModelKind::Knn => train_knn(&train_set, hyper.knn_k)?,
        ModelKind::RandomForest => {
            train_random_forest(&train_set, hyper.trees, hyper.max_depth, args.seed)?
        }
        ModelKind::LinearSvmOvr => {
            train_linear_svm_ovr(&train_set, hyper.svm_c, hyper.svm_epochs, args.seed)?
        }
    };
    save_model(&model, &args.out)?;
    save_scaler(&scaler, &args.scaler_out)?;
    println!(
        "trained {} ({}) on {} flows; model {}, scaler {}",
        model.kind.display_name(),
        model.parameter_summary(),
        train_set.len(),
        args.out.display(),
        args.scaler_out.display()
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let scaler = load_scaler(&args.scaler)?;
    if model.scaler_id != scaler.fitted_on {
        bail!(
            "scaler mismatch: model was trained with {:?}, got {:?}",
            model.scaler_id,
            scaler.fitted_on
        );
    }
    let dataset = load_dataset(&args.dataset)?;
    let mut truths = Vec::with_capacity(dataset.vectors.len());
    let mut predictions = Vec::with_capacity(dataset.vectors.len());
    for vector in &dataset.vectors {
        let truth = vector
            .label
            .clone()
            .ok_or(torscope_core::Error::UnlabeledVector)?;
        truths.push(truth);
        predictions.push(predict(&model, &apply_scaler(&scaler, vector))?);
    }
    let confusion = ConfusionMatrix::from_labels(&truths, &predictions, &model.classes)?;
    let report = overall_metrics(&confusion);

    fs::create_dir_all(&args.out_dir)?;
    let group = [(model.kind.display_name().to_string(), &confusion)];
    fs::write(
        args.out_dir.join("per_class.txt"),
        render_per_class_table(&group),
    )?;
    let tag = model.kind.tag();
    let mut human = format!(
        "{} evaluation\n\nparameters:        {}\nscaler:            {}\nflows:             {}\nclasses:           {}\n\n",
        model.kind.display_name(),
        model.parameter_summary(),
        scaler.fitted_on,
        dataset.vectors.len(),
        model.classes.join(", ")
    );
    human.push_str(&render_overall(&report));
    fs::write(args.out_dir.join(format!("{tag}_report.txt")), human)?;

    let mut kv = String::new();
    let mut push = |key: &str, value: String| {
        kv.push_str(key);
        kv.push('=');
        kv.push_str(&value);
        kv.push('\n');
    };
    push("classifier", tag.to_string());
    push("display_name", model.kind.display_name().to_string());
    push("parameters", model.parameter_summary());
    push("scaler", scaler.fitted_on.clone());
    push("flows", dataset.vectors.len().to_string());
    push("classes", model.classes.join(";"));
    for (key, value) in report_key_values(&report) {
        push(key, value);
    }
    for (i, class) in model.classes.iter().enumerate() {
        let m = per_class_metrics(&confusion, i);
        push(&format!("class.{class}.precision"), m.precision.to_string());
        push(&format!("class.{class}.recall"), m.recall.to_string());
        push(&format!("class.{class}.f1"), m.f1.to_string());
        push(&format!("class.{class}.accuracy"), m.accuracy.to_string());
    }
    for (i, truth) in model.classes.iter().enumerate() {
        for (j, predicted) in model.classes.iter().enumerate() {
            push(
                &format!("confusion.{truth}.{predicted}"),
                confusion.counts()[i][j].to_string(),
            );
        }
    }
    fs::write(args.out_dir.join(format!("{tag}_report.kv")), kv)?;

    println!(
        "evaluated {} flows: macro F1 {:.4}, avg accuracy {:.4}; reports in {}",
        dataset.vectors.len(),
        report.macro_f1,
        report.average_accuracy,
        args.out_dir.display()
    );
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let file = load_file_config(args.config.as_deref())?;
    let manifest = load_manifest(&args.corpus.join(MANIFEST_NAME))
        .with_context(|| format!("loading corpus manifest from {}", args.corpus.display()))?;
    let mut config = ExperimentConfig::new(
        manifest.padding_mode,
        args.flow_timeout_s.or(file.flow_timeout_s).unwrap_or(10.0),
        args.activity_timeout_s
            .or(file.activity_timeout_s)
            .unwrap_or(2.0),
    );
    config.include_browser = args
        .include_browser
        .or(file.include_browser)
        .unwrap_or(true);
    config.folds = args.folds.or(file.folds).unwrap_or(5);
    config.seed = args.seed.or(file.seed).unwrap_or(42);
    config.hyperparams = resolve_hyperparams(&args.hyper, &file);
    config.validate()?;

    let dataset = extract_dataset(&manifest, &args.corpus, &config.flow_config()?)?;
    let outcome = run_experiment(&dataset.vectors, &config)?;
    let written = write_reports(&outcome, &config, &args.out_dir)?;
    for classifier in &outcome.per_classifier {
        println!(
            "{:<18} macro F1 {:.4}, avg accuracy {:.4}",
            classifier.kind.display_name(),
            classifier.report.macro_f1,
            classifier.report.average_accuracy
        );
    }
    println!(
        "wrote {} report files to {}",
        written.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn grid(args: GridArgs) -> Result<()> {
    let file = load_file_config(args.config.as_deref())?;
    let folds = args.folds.or(file.folds).unwrap_or(5);
    let seed = args.seed.or(file.seed).unwrap_or(42);
    let hyper = resolve_hyperparams(&args.hyper, &file);
    let written = run_grid(
        &args.corpus_reduced,
        &args.corpus_full,
        &args.out_dir,
        folds,
        seed,
        &hyper,
    )?;
    println!(
        "grid complete: {} report files across 16 cells in {}",
        written.len(),
        args.out_dir.display()
    );
    Ok(())
}
