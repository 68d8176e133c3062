//! Multi-class classifiers over standardized feature vectors, stratified
//! k-fold splitting, and model (de)serialization.
//!
//! Three classifiers share one model container: k-nearest neighbors, a
//! random forest, and a linear one-vs-rest SVM. Every trainer is a pure
//! function of `(dataset, parameters, seed)`, so a recorded seed reproduces a
//! model exactly.

pub mod forest;
pub mod knn;
pub mod svm;

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, FEATURE_DIM};
use crate::{Error, Result};

/// Version tag of the model container format.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Labeled feature vectors with a fixed, ordered class list.
///
/// The class list is sorted and shared by every subset taken from the same
/// dataset, so class indices stay comparable across folds even when a subset
/// happens to miss a class.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    vectors: Vec<FeatureVector>,
    /// `labels[i]` indexes `classes`.
    labels: Vec<usize>,
    classes: Vec<String>,
    scaler_id: String,
}

impl LabeledDataset {
    /// Builds a dataset from labeled vectors; the class list is the sorted
    /// set of distinct labels. `scaler_id` records which scaler standardized
    /// the vectors ("raw" for none).
    pub fn from_vectors(vectors: Vec<FeatureVector>, scaler_id: &str) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for v in &vectors {
            match v.label.as_deref() {
                Some(label) => {
                    names.insert(label);
                }
                None => return Err(Error::UnlabeledVector),
            }
        }
        let classes: Vec<String> = names.into_iter().map(str::to_string).collect();
        let labels = vectors
            .iter()
            .map(|v| {
                let label = v.label.as_deref().unwrap();
                classes.binary_search_by(|c| c.as_str().cmp(label)).unwrap()
            })
            .collect();
        Ok(Self {
            vectors,
            labels,
            classes,
            scaler_id: scaler_id.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn scaler_id(&self) -> &str {
        &self.scaler_id
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn values(&self, i: usize) -> &[f64; FEATURE_DIM] {
        &self.vectors[i].values
    }

    pub fn label_index(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.classes[self.labels[i]]
    }

    /// A new dataset holding the chosen rows; classes and scaler provenance
    /// are carried over unchanged.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
            scaler_id: self.scaler_id.clone(),
        }
    }
}

/// Splits the dataset into `k` disjoint test folds with per-class counts
/// differing by at most one across folds. Returns `(train, test)` index
/// pairs, both sorted ascending. Deterministic for a given seed.
pub fn stratified_folds(
    dataset: &LabeledDataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "stratified k-fold requires k >= 2, got {k}"
        )));
    }
    let n_classes = dataset.classes().len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for i in 0..dataset.len() {
        by_class[dataset.label_index(i)].push(i);
    }
    for (ci, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class: dataset.classes()[ci].clone(),
                members: members.len(),
                k,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (ci, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        // Rotate the dealing start per class so remainder rows don't all
        // land in fold 0.
        for (pos, &idx) in members.iter().enumerate() {
            test_folds[(pos + ci) % k].push(idx);
        }
    }

    let folds = test_folds
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..dataset.len()).filter(|i| !test.contains(i)).collect();
            (train, test)
        })
        .collect();
    Ok(folds)
}

/// Classifier family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Knn,
    RandomForest,
    LinearSvmOvr,
}

impl ModelKind {
    /// Human-readable name used in reports.
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::Knn => "k-NN",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::LinearSvmOvr => "SVM (linear, OvR)",
        }
    }

    /// Stable lowercase tag used in file names and CLI arguments.
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::RandomForest => "forest",
            ModelKind::LinearSvmOvr => "svm",
        }
    }
}

/// Parameters plus learned state for one classifier family.
///
/// Vector data is stored as `Vec<f64>` rows of length [`FEATURE_DIM`];
/// lengths are validated when a model file is loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelState {
    Knn {
        k: usize,
        vectors: Vec<Vec<f64>>,
        /// Class index per stored vector.
        labels: Vec<u32>,
    },
    Forest {
        max_depth: Option<usize>,
        seed: u64,
        trees: Vec<forest::Tree>,
    },
    Svm {
        c: f64,
        epochs: usize,
        seed: u64,
        /// One weight row per class, in class order.
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    },
}

/// A trained multi-class classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub kind: ModelKind,
    /// Ordered class list; predictions index into it.
    pub classes: Vec<String>,
    /// Provenance of the scaler the training vectors were standardized with.
    pub scaler_id: String,
    pub state: ModelState,
}

impl ClassifierModel {
    /// One-line parameter summary for reports.
    pub fn parameter_summary(&self) -> String {
        match &self.state {
            ModelState::Knn { k, vectors, .. } => {
                format!("k={k}, stored_vectors={}", vectors.len())
            }
            ModelState::Forest {
                max_depth,
                seed,
                trees,
            } => {
                let depth = match max_depth {
                    Some(d) => d.to_string(),
                    None => "unlimited".into(),
                };
                format!("trees={}, max_depth={depth}, seed={seed}", trees.len())
            }
            ModelState::Svm {
                c, epochs, seed, ..
            } => format!("C={c}, epochs={epochs}, seed={seed}"),
        }
    }
}

/// Predicts the class of one standardized vector. The result is always a
/// member of `model.classes`.
pub fn predict(model: &ClassifierModel, v: &FeatureVector) -> Result<String> {
    let idx = match &model.state {
        ModelState::Knn { k, vectors, labels } => {
            knn::predict_index(vectors, labels, *k, model.classes.len(), &v.values)?
        }
        ModelState::Forest { trees, .. } => {
            forest::predict_index(trees, model.classes.len(), &v.values)
        }
        ModelState::Svm {
            weights, biases, ..
        } => svm::predict_index(weights, biases, &v.values)?,
    };
    Ok(model.classes[idx].clone())
}

/// Saves a model as JSON. Floating-point state round-trips exactly.
pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer(BufWriter::new(file), model)?;
    Ok(())
}

/// Loads and validates a model saved by [`save_model`].
pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    let file = fs::File::open(path)?;
    let model: ClassifierModel = serde_json::from_reader(BufReader::new(file))?;
    validate_model(&model)?;
    Ok(model)
}

fn validate_model(model: &ClassifierModel) -> Result<()> {
    if model.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            model.format_version
        )));
    }
    if model.classes.is_empty() {
        return Err(Error::Format("model has no classes".into()));
    }
    let n_classes = model.classes.len();
    let check_row = |row: &[f64]| -> Result<()> {
        if row.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                found: row.len(),
            });
        }
        Ok(())
    };
    match &model.state {
        ModelState::Knn { k, vectors, labels } => {
            if vectors.is_empty() || *k < 1 || *k > vectors.len() {
                return Err(Error::Format(format!(
                    "k-NN model with k={k} over {} vectors",
                    vectors.len()
                )));
            }
            if labels.len() != vectors.len() {
                return Err(Error::Format("k-NN label/vector count mismatch".into()));
            }
            for row in vectors {
                check_row(row)?;
            }
            if labels.iter().any(|&l| l as usize >= n_classes) {
                return Err(Error::Format("k-NN label index out of range".into()));
            }
        }
        ModelState::Forest { trees, .. } => {
            if trees.is_empty() {
                return Err(Error::Format("forest model with no trees".into()));
            }
            for tree in trees {
                tree.validate(n_classes)?;
            }
        }
        ModelState::Svm {
            weights, biases, ..
        } => {
            if weights.len() != n_classes || biases.len() != n_classes {
                return Err(Error::Format(
                    "SVM weight/bias rows do not match class count".into(),
                ));
            }
            for row in weights {
                check_row(row)?;
            }
        }
    }
    Ok(())
}

/// Squared Euclidean distance; ranks identically to the true distance.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plurality winner of per-class counts; ties go to the earliest class.
pub(crate) fn plurality(counts: &[u64]) -> usize {
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    /// A deterministic blob dataset: each class occupies a disjoint axis-
    /// aligned box, so the classes are separable by construction.
    pub fn blob_dataset(per_class: usize, classes: &[&str], seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = Vec::new();
        for (ci, name) in classes.iter().enumerate() {
            let base = ci as f64 * 3.0; // boxes [base, base+1] never overlap
            for _ in 0..per_class {
                let mut values = [0.0f64; FEATURE_DIM];
                for value in values.iter_mut() {
                    *value = base + rng.gen_range(0.0..1.0);
                }
                vectors.push(FeatureVector {
                    values,
                    label: Some(name.to_string()),
                });
            }
        }
        LabeledDataset::from_vectors(vectors, "test-blobs").unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(labels: &[&str]) -> LabeledDataset {
        let vectors: Vec<FeatureVector> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| FeatureVector {
                values: [i as f64; FEATURE_DIM],
                label: Some(l.to_string()),
            })
            .collect();
        LabeledDataset::from_vectors(vectors, "raw").unwrap()
    }

    #[test]
    fn classes_are_sorted_and_distinct() {
        let ds = tiny(&["zoom", "app", "zoom", "mail"]);
        assert_eq!(ds.classes(), ["app", "mail", "zoom"]);
        assert_eq!(ds.label_index(0), 2);
        assert_eq!(ds.label(3), "mail");
    }

    #[test]
    fn construction_rejects_empty_and_unlabeled() {
        assert!(matches!(
            LabeledDataset::from_vectors(Vec::new(), "raw"),
            Err(Error::EmptyDataset)
        ));
        let v = FeatureVector {
            values: [0.0; FEATURE_DIM],
            label: None,
        };
        assert!(matches!(
            LabeledDataset::from_vectors(vec![v], "raw"),
            Err(Error::UnlabeledVector)
        ));
    }

    #[test]
    fn subset_preserves_classes() {
        let ds = tiny(&["a", "b", "c", "a"]);
        let sub = ds.subset(&[0, 3]);
        assert_eq!(sub.classes(), ["a", "b", "c"]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.label(1), "a");
    }

    #[test]
    fn stratified_fold_counts_are_exact_when_divisible() {
        let labels: Vec<&str> = std::iter::repeat_n("a", 10)
            .chain(std::iter::repeat_n("b", 10))
            .collect();
        let ds = tiny(&labels);
        let folds = stratified_folds(&ds, 5, 7).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = vec![false; ds.len()];
        for (train, test) in &folds {
            assert_eq!(test.len(), 4);
            assert_eq!(train.len(), 16);
            let a = test.iter().filter(|&&i| ds.label(i) == "a").count();
            let b = test.iter().filter(|&&i| ds.label(i) == "b").count();
            assert_eq!((a, b), (2, 2));
            for &i in test {
                assert!(!seen[i], "index {i} appears in two test folds");
                seen[i] = true;
                assert!(!train.contains(&i));
            }
        }
        assert!(seen.iter().all(|&s| s), "test folds must cover the dataset");
    }

    #[test]
    fn stratified_minimal_case() {
        let ds = tiny(&["a", "a", "b", "b"]);
        let folds = stratified_folds(&ds, 2, 1).unwrap();
        for (_, test) in &folds {
            let a = test.iter().filter(|&&i| ds.label(i) == "a").count();
            let b = test.iter().filter(|&&i| ds.label(i) == "b").count();
            assert_eq!((a, b), (1, 1));
        }
    }

    #[test]
    fn stratified_is_deterministic_and_seed_sensitive() {
        let labels: Vec<&str> = ["a", "b", "c"]
            .iter()
            .flat_map(|l| std::iter::repeat_n(*l, 12))
            .collect();
        let ds = tiny(&labels);
        let one = stratified_folds(&ds, 4, 42).unwrap();
        let two = stratified_folds(&ds, 4, 42).unwrap();
        assert_eq!(one, two);
        let other = stratified_folds(&ds, 4, 43).unwrap();
        assert_ne!(one, other);
    }

    #[test]
    fn small_class_is_named_in_error() {
        let ds = tiny(&["a", "a", "a", "rare", "rare"]);
        match stratified_folds(&ds, 3, 0) {
            Err(Error::ClassTooSmall { class, members, k }) => {
                assert_eq!(class, "rare");
                assert_eq!(members, 2);
                assert_eq!(k, 3);
            }
            other => panic!("expected ClassTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn uneven_counts_differ_by_at_most_one() {
        let labels: Vec<&str> = std::iter::repeat_n("a", 11)
            .chain(std::iter::repeat_n("b", 7))
            .collect();
        let ds = tiny(&labels);
        let folds = stratified_folds(&ds, 3, 9).unwrap();
        for class in ["a", "b"] {
            let counts: Vec<usize> = folds
                .iter()
                .map(|(_, test)| test.iter().filter(|&&i| ds.label(i) == class).count())
                .collect();
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "class {class} fold counts {counts:?}");
        }
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = testutil::blob_dataset(6, &["a", "b"], 3);
        for model in [
            knn::train_knn(&ds, 3).unwrap(),
            forest::train_random_forest(&ds, 5, Some(4), 11).unwrap(),
            svm::train_linear_svm_ovr(&ds, 1.0, 5, 11).unwrap(),
        ] {
            let path = dir.path().join(format!("{}.model.json", model.kind.tag()));
            save_model(&model, &path).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(loaded, model);
        }
    }

    #[test]
    fn load_rejects_wrong_version_and_bad_dims() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.model.json");
        let ds = testutil::blob_dataset(4, &["a", "b"], 3);
        let mut model = knn::train_knn(&ds, 1).unwrap();
        model.format_version = 99;
        save_model(&model, &path).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        model.format_version = MODEL_FORMAT_VERSION;
        if let ModelState::Knn { vectors, .. } = &mut model.state {
            vectors[0].truncate(10);
        }
        save_model(&model, &path).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::DimensionMismatch {
                expected: 68,
                found: 10
            })
        ));
    }
}
