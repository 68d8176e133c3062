//! End-to-end orchestration: corpus directory → feature dataset →
//! cross-validated classifiers → report files, plus the 16-cell
//! configuration grid.
//!
//! Evaluation is k-fold: for every fold the scaler is fit on the training
//! split only (`Scaler::fitted_on` records which split, and predictions
//! assert the tag), each classifier trains on the standardized split, and
//! test-fold predictions from all folds are pooled into one confusion
//! matrix per classifier.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::derive_seed;
use crate::features::{
    apply_scaler, extract_features, fit_scaler, Dataset, DatasetMeta, FeatureVector, LAYOUT_VERSION,
};
use crate::flow::{label_flows, split_flows, FlowConfig};
use crate::learn::{
    forest::train_random_forest, knn::train_knn, predict, stratified_folds,
    svm::train_linear_svm_ovr, ClassifierModel, LabeledDataset, ModelKind,
};
use crate::metrics::{
    overall_metrics, render_overall, render_per_class_table, ConfusionMatrix, Report,
};
use crate::synth::{load_manifest, CorpusManifest, PaddingMode, MANIFEST_NAME};
use crate::trace::{assemble_sessions, read_pcap};
use crate::{Error, Result};

/// Label treated as the browser class by `include_browser = false`.
pub const BROWSER_LABEL: &str = "browser";

/// Tunable classifier parameters with the defaults used throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub knn_k: usize,
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub svm_c: f64,
    pub svm_epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            knn_k: 5,
            trees: 100,
            max_depth: None,
            svm_c: 1.0,
            svm_epochs: 20,
        }
    }
}

impl Hyperparams {
    /// One-line echo of the parameters relevant to `kind`, for reports.
    pub fn summary(&self, kind: ModelKind) -> String {
        match kind {
            ModelKind::Knn => format!("k={}", self.knn_k),
            ModelKind::RandomForest => {
                let depth = match self.max_depth {
                    Some(d) => d.to_string(),
                    None => "unlimited".into(),
                };
                format!("trees={}, max_depth={depth}", self.trees)
            }
            ModelKind::LinearSvmOvr => {
                format!("C={}, epochs={}", self.svm_c, self.svm_epochs)
            }
        }
    }
}

/// Classifier evaluation order used in reports: forest, then k-NN, then SVM.
pub fn default_classifiers() -> Vec<ModelKind> {
    vec![
        ModelKind::RandomForest,
        ModelKind::Knn,
        ModelKind::LinearSvmOvr,
    ]
}

/// One evaluation configuration (one row of the experiment grid).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Padding mode of the corpus under evaluation; recorded in reports.
    /// The standard grid uses `Reduced` and `Full`.
    pub padding: PaddingMode,
    pub flow_timeout_s: f64,
    pub activity_timeout_s: f64,
    /// When false, flows labeled [`BROWSER_LABEL`] are dropped before
    /// splitting into folds.
    pub include_browser: bool,
    pub classifiers: Vec<ModelKind>,
    pub folds: usize,
    pub seed: u64,
    pub hyperparams: Hyperparams,
}

impl ExperimentConfig {
    /// A config with the standard classifier set, 5 folds, and seed 42.
    pub fn new(padding: PaddingMode, flow_timeout_s: f64, activity_timeout_s: f64) -> Self {
        Self {
            padding,
            flow_timeout_s,
            activity_timeout_s,
            include_browser: true,
            classifiers: default_classifiers(),
            folds: 5,
            seed: 42,
            hyperparams: Hyperparams::default(),
        }
    }

    /// The flow/activity window pair as a validated [`FlowConfig`].
    pub fn flow_config(&self) -> Result<FlowConfig> {
        FlowConfig::new(self.flow_timeout_s, self.activity_timeout_s)
    }

    pub fn validate(&self) -> Result<()> {
        self.flow_config()?;
        if self.classifiers.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one classifier is required".into(),
            ));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig(
                "cross-validation requires at least 2 folds".into(),
            ));
        }
        Ok(())
    }
}

/// Reads every PCAP named by the manifest, splits sessions into flows, and
/// extracts one labeled feature vector per flow. Any manifest label that
/// ends up with zero flows is an error naming the class.
pub fn extract_dataset(
    manifest: &CorpusManifest,
    corpus_dir: &Path,
    flow_config: &FlowConfig,
) -> Result<Dataset> {
    let mut vectors = Vec::new();
    let mut flows_per_label: BTreeMap<&str, usize> = BTreeMap::new();
    for row in &manifest.rows {
        flows_per_label.entry(&row.label).or_insert(0);
        let contents = read_pcap(&corpus_dir.join(&row.filename))?;
        for session in assemble_sessions(&contents.packets, None) {
            let split = split_flows(&session, flow_config);
            let labeled = label_flows(split.flows, &row.label)?;
            *flows_per_label.get_mut(row.label.as_str()).unwrap() += labeled.len();
            for flow in &labeled {
                vectors.push(extract_features(flow, flow_config));
            }
        }
    }
    for (label, flows) in &flows_per_label {
        if *flows == 0 {
            return Err(Error::ClassWithoutFlows((*label).to_string()));
        }
    }
    Ok(Dataset {
        meta: DatasetMeta {
            layout_version: LAYOUT_VERSION,
            flow_timeout_s: flow_config.flow_timeout_s(),
            activity_timeout_s: flow_config.activity_timeout_s(),
            padding_mode: manifest.padding_mode.to_string(),
        },
        vectors,
    })
}

/// Pooled cross-validation result for one classifier.
#[derive(Debug, Clone)]
pub struct ClassifierOutcome {
    pub kind: ModelKind,
    pub confusion: ConfusionMatrix,
    pub report: Report,
}

/// Everything an experiment produces, before rendering.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Sorted class list shared by every confusion matrix.
    pub classes: Vec<String>,
    /// Number of flows that entered cross-validation (after any exclusion).
    pub n_flows: usize,
    /// `Scaler::fitted_on` provenance, one entry per fold; each names the
    /// training split the fold's scaler was fit on.
    pub fold_scaler_tags: Vec<String>,
    pub per_classifier: Vec<ClassifierOutcome>,
}

/// Cross-validates every configured classifier over the labeled vectors.
///
/// Per fold: fit the scaler on the training split only, standardize both
/// splits with it, train, and predict the test split. Test predictions from
/// all folds pool into one confusion matrix per classifier, so every vector
/// is scored exactly once.
pub fn run_experiment(
    vectors: &[FeatureVector],
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let kept: Vec<FeatureVector> = vectors
        .iter()
        .filter(|v| config.include_browser || v.label.as_deref() != Some(BROWSER_LABEL))
        .cloned()
        .collect();
    let raw = LabeledDataset::from_vectors(kept, "unscaled")?;
    let classes = raw.classes().to_vec();
    let folds = stratified_folds(&raw, config.folds, config.seed)?;

    let mut truths: Vec<String> = Vec::with_capacity(raw.len());
    let mut predictions: Vec<Vec<String>> =
        vec![Vec::with_capacity(raw.len()); config.classifiers.len()];
    let mut fold_scaler_tags = Vec::with_capacity(folds.len());
    for (fold_idx, (train, test)) in folds.iter().enumerate() {
        let tag = format!("seed{}/fold{}/train", config.seed, fold_idx);
        let train_raw: Vec<FeatureVector> =
            train.iter().map(|&i| raw.vectors()[i].clone()).collect();
        let scaler = fit_scaler(&train_raw, &tag)?;
        let train_scaled: Vec<FeatureVector> =
            train_raw.iter().map(|v| apply_scaler(&scaler, v)).collect();
        let train_set = LabeledDataset::from_vectors(train_scaled, &scaler.fitted_on)?;

        let fold_seed = derive_seed(config.seed, fold_idx as u64);
        let models: Vec<ClassifierModel> = config
            .classifiers
            .iter()
            .map(|kind| match kind {
                ModelKind::Knn => train_knn(&train_set, config.hyperparams.knn_k),
                ModelKind::RandomForest => train_random_forest(
                    &train_set,
                    config.hyperparams.trees,
                    config.hyperparams.max_depth,
                    derive_seed(fold_seed, 1),
                ),
                ModelKind::LinearSvmOvr => train_linear_svm_ovr(
                    &train_set,
                    config.hyperparams.svm_c,
                    config.hyperparams.svm_epochs,
                    derive_seed(fold_seed, 2),
                ),
            })
            .collect::<Result<_>>()?;

        for &i in test {
            truths.push(raw.label(i).to_string());
            let scaled = apply_scaler(&scaler, &raw.vectors()[i]);
            for (model, preds) in models.iter().zip(predictions.iter_mut()) {
                // Leakage guard: the model must have been trained on data
                // standardized by this fold's train-split scaler.
                assert_eq!(
                    model.scaler_id, scaler.fitted_on,
                    "scaler provenance mismatch"
                );
                preds.push(predict(model, &scaled)?);
            }
        }
        fold_scaler_tags.push(tag);
    }

    let per_classifier = config
        .classifiers
        .iter()
        .zip(predictions)
        .map(|(&kind, preds)| {
            let confusion = ConfusionMatrix::from_labels(&truths, &preds, &classes)?;
            let report = overall_metrics(&confusion);
            Ok(ClassifierOutcome {
                kind,
                confusion,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutcome {
        classes,
        n_flows: raw.len(),
        fold_scaler_tags,
        per_classifier,
    })
}

/// Renders an outcome into `dir`: one `per_class.txt` table covering all
/// classifiers side by side, plus `<tag>_report.txt` (human-readable) and
/// `<tag>_report.kv` (machine-readable, byte-deterministic) per classifier.
/// Returns the written paths.
pub fn write_reports(
    outcome: &ExperimentOutcome,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let groups: Vec<(String, &ConfusionMatrix)> = outcome
        .per_classifier
        .iter()
        .map(|c| (c.kind.display_name().to_string(), &c.confusion))
        .collect();
    let per_class_path = dir.join("per_class.txt");
    fs::write(&per_class_path, render_per_class_table(&groups))?;
    written.push(per_class_path);

    for classifier in &outcome.per_classifier {
        let tag = classifier.kind.tag();
        let mut human = String::new();
        human.push_str(&format!(
            "{} cross-validated evaluation\n\n",
            classifier.kind.display_name()
        ));
        for (name, value) in config_echo(outcome, config, classifier.kind) {
            human.push_str(&format!("{name:<18} {value}\n"));
        }
        human.push('\n');
        human.push_str(&render_overall(&classifier.report));
        let txt_path = dir.join(format!("{tag}_report.txt"));
        fs::write(&txt_path, human)?;
        written.push(txt_path);

        let kv_path = dir.join(format!("{tag}_report.kv"));
        fs::write(&kv_path, render_kv(outcome, config, classifier))?;
        written.push(kv_path);
    }
    Ok(written)
}

fn config_echo(
    outcome: &ExperimentOutcome,
    config: &ExperimentConfig,
    kind: ModelKind,
) -> Vec<(&'static str, String)> {
    vec![
        ("padding:", config.padding.to_string()),
        ("flow timeout:", format!("{} s", config.flow_timeout_s)),
        (
            "activity timeout:",
            format!("{} s", config.activity_timeout_s),
        ),
        ("include browser:", config.include_browser.to_string()),
        ("folds:", config.folds.to_string()),
        ("seed:", config.seed.to_string()),
        ("flows:", outcome.n_flows.to_string()),
        ("classes:", outcome.classes.join(", ")),
        ("parameters:", config.hyperparams.summary(kind)),
    ]
}

fn render_kv(
    outcome: &ExperimentOutcome,
    config: &ExperimentConfig,
    classifier: &ClassifierOutcome,
) -> String {
    let r = &classifier.report;
    let mut out = String::new();
    let mut push = |key: &str, value: String| {
        out.push_str(key);
        out.push('=');
        out.push_str(&value);
        out.push('\n');
    };
    push("classifier", classifier.kind.tag().to_string());
    push("display_name", classifier.kind.display_name().to_string());
    push("parameters", config.hyperparams.summary(classifier.kind));
    push("padding", config.padding.to_string());
    push("flow_timeout_s", config.flow_timeout_s.to_string());
    push("activity_timeout_s", config.activity_timeout_s.to_string());
    push("include_browser", config.include_browser.to_string());
    push("folds", config.folds.to_string());
    push("seed", config.seed.to_string());
    push("flows", outcome.n_flows.to_string());
    push("classes", outcome.classes.join(";"));
    for (key, value) in crate::metrics::report_key_values(r) {
        push(key, value);
    }
    for (i, class) in outcome.classes.iter().enumerate() {
        let m = crate::metrics::per_class_metrics(&classifier.confusion, i);
        push(&format!("class.{class}.precision"), m.precision.to_string());
        push(&format!("class.{class}.recall"), m.recall.to_string());
        push(&format!("class.{class}.f1"), m.f1.to_string());
        push(&format!("class.{class}.accuracy"), m.accuracy.to_string());
    }
    for (i, truth) in outcome.classes.iter().enumerate() {
        for (j, predicted) in outcome.classes.iter().enumerate() {
            push(
                &format!("confusion.{truth}.{predicted}"),
                classifier.confusion.counts()[i][j].to_string(),
            );
        }
    }
    out
}

/// The 16 grid configurations in canonical order: flow timeout {10, 15} s,
/// then activity timeout {2, 5} s, then padding {reduced, full}, then
/// browser {included, excluded}.
pub fn grid_cells(folds: usize, seed: u64, hyperparams: &Hyperparams) -> Vec<ExperimentConfig> {
    let mut cells = Vec::with_capacity(16);
    for t_f in [10.0, 15.0] {
        for t_a in [2.0, 5.0] {
            for padding in [PaddingMode::Reduced, PaddingMode::Full] {
                for include_browser in [true, false] {
                    let mut config = ExperimentConfig::new(padding, t_f, t_a);
                    config.include_browser = include_browser;
                    config.folds = folds;
                    config.seed = seed;
                    config.hyperparams = hyperparams.clone();
                    cells.push(config);
                }
            }
        }
    }
    cells
}

/// Runs all 16 grid cells over a reduced-padding corpus and a full-padding
/// corpus, writing each cell's reports under `out_dir/exp01` … `exp16`.
/// Feature extraction is shared between the two browser variants of a cell.
/// Returns every written path.
pub fn run_grid(
    reduced_dir: &Path,
    full_dir: &Path,
    out_dir: &Path,
    folds: usize,
    seed: u64,
    hyperparams: &Hyperparams,
) -> Result<Vec<PathBuf>> {
    let corpus_for = |mode: PaddingMode| -> Result<(CorpusManifest, &Path)> {
        let dir = match mode {
            PaddingMode::Reduced => reduced_dir,
            PaddingMode::Full => full_dir,
            PaddingMode::None => {
                return Err(Error::InvalidConfig(
                    "the grid uses reduced and full padding only".into(),
                ))
            }
        };
        let manifest = load_manifest(&dir.join(MANIFEST_NAME))?;
        if manifest.padding_mode != mode {
            return Err(Error::InvalidConfig(format!(
                "corpus at {} has padding {}, expected {mode}",
                dir.display(),
                manifest.padding_mode
            )));
        }
        Ok((manifest, dir))
    };

    let mut extracted: BTreeMap<(u64, u64, &'static str), Vec<FeatureVector>> = BTreeMap::new();
    let mut written = Vec::new();
    for (idx, config) in grid_cells(folds, seed, hyperparams).into_iter().enumerate() {
        let key = (
            config.flow_timeout_s.to_bits(),
            config.activity_timeout_s.to_bits(),
            config.padding.as_str(),
        );
        if let Entry::Vacant(slot) = extracted.entry(key) {
            let (manifest, dir) = corpus_for(config.padding)?;
            let dataset = extract_dataset(&manifest, dir, &config.flow_config()?)?;
            slot.insert(dataset.vectors);
        }
        let outcome = run_experiment(&extracted[&key], &config)?;
        let cell_dir = out_dir.join(format!("exp{:02}", idx + 1));
        written.extend(write_reports(&outcome, &config, &cell_dir)?);
    }
    Ok(written)
}
