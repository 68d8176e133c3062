//! Linear one-vs-rest SVM trained by stochastic subgradient descent
//! (Pegasos-style) on the hinge loss with L2 regularization.
//!
//! For each class a binary problem is solved: members are +1, everything
//! else −1. With λ = 1/(C·n) and step η_t = 1/(λ·t), each visit shrinks the
//! weights by (1 − η_t·λ) = (1 − 1/t) and, on a margin violation
//! (y·(w·x + b) < 1), adds η_t·y·x to the weights and η_t·y to the
//! unregularized bias. Prediction is the argmax of per-class decision
//! values, ties going to the earliest class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassifierModel, LabeledDataset, ModelKind, ModelState, MODEL_FORMAT_VERSION};
use crate::features::FEATURE_DIM;
use crate::{derive_seed, Error, Result};

/// Trains one linear SVM per class against the rest.
pub fn train_linear_svm_ovr(
    dataset: &LabeledDataset,
    c: f64,
    epochs: usize,
    seed: u64,
) -> Result<ClassifierModel> {
    if dataset.classes().len() < 2 {
        return Err(Error::SingleClass);
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "SVM regularization constant C must be positive, got {c}"
        )));
    }
    if epochs < 1 {
        return Err(Error::InvalidParameter(
            "SVM training requires at least one epoch".into(),
        ));
    }

    let n = dataset.len();
    let lambda = 1.0 / (c * n as f64);
    let mut weights = Vec::with_capacity(dataset.classes().len());
    let mut biases = Vec::with_capacity(dataset.classes().len());
    for ci in 0..dataset.classes().len() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ci as u64));
        let mut w = vec![0.0f64; FEATURE_DIM];
        let mut b = 0.0f64;
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0u64;
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let x = dataset.values(i);
                let y = if dataset.label_index(i) == ci {
                    1.0
                } else {
                    -1.0
                };
                let margin = y * (dot(&w, x) + b);
                let shrink = 1.0 - 1.0 / t as f64;
                for wk in w.iter_mut() {
                    *wk *= shrink;
                }
                if margin < 1.0 {
                    for (wk, xk) in w.iter_mut().zip(x.iter()) {
                        *wk += eta * y * xk;
                    }
                    b += eta * y;
                }
            }
        }
        weights.push(w);
        biases.push(b);
    }

    Ok(ClassifierModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::LinearSvmOvr,
        classes: dataset.classes().to_vec(),
        scaler_id: dataset.scaler_id().to_string(),
        state: ModelState::Svm {
            c,
            epochs,
            seed,
            weights,
            biases,
        },
    })
}

/// Argmax of per-class decision values `w_c·x + b_c`; strict comparison
/// keeps ties on the earliest class.
pub(crate) fn predict_index(weights: &[Vec<f64>], biases: &[f64], query: &[f64]) -> Result<usize> {
    if let Some(bad) = weights.iter().find(|w| w.len() != query.len()) {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            found: bad.len(),
        });
    }
    let mut best = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    for (ci, (w, &b)) in weights.iter().zip(biases.iter()).enumerate() {
        let value = dot(w, query) + b;
        if value > best_value {
            best_value = value;
            best = ci;
        }
    }
    Ok(best)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::super::predict;
    use super::super::testutil::blob_dataset;
    use super::*;
    use crate::features::FeatureVector;

    /// Two 1-D bands on dimension 0 with a margin of at least 2 between
    /// them: class "neg" in [−3,−1], class "pos" in [1,3].
    fn banded() -> LabeledDataset {
        let mut vectors = Vec::new();
        for i in 0..40 {
            let offset = (i % 20) as f64 / 10.0; // 0.0 .. 1.9
            let (value, label) = if i < 20 {
                (-3.0 + offset, "neg")
            } else {
                (1.0 + offset, "pos")
            };
            let mut values = [0.0f64; FEATURE_DIM];
            values[0] = value;
            vectors.push(FeatureVector {
                values,
                label: Some(label.into()),
            });
        }
        LabeledDataset::from_vectors(vectors, "raw").unwrap()
    }

    #[test]
    fn separable_bands_reach_perfect_training_accuracy() {
        let ds = banded();
        let model = train_linear_svm_ovr(&ds, 1.0, 20, 7).unwrap();
        for i in 0..ds.len() {
            let q = FeatureVector {
                values: *ds.values(i),
                label: None,
            };
            assert_eq!(predict(&model, &q).unwrap(), ds.label(i), "row {i}");
        }
    }

    /// Each class lights up its own block of dimensions (dim % 3 == class
    /// index), so every one-vs-rest subproblem is comfortably separable.
    fn block_dataset(per_class: usize, seed: u64) -> LabeledDataset {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = ["a", "b", "c"];
        let mut vectors = Vec::new();
        for (ci, label) in classes.iter().enumerate() {
            for _ in 0..per_class {
                let mut values = [0.0f64; FEATURE_DIM];
                for (d, v) in values.iter_mut().enumerate() {
                    *v = if d % classes.len() == ci {
                        rng.gen_range(1.5..2.5)
                    } else {
                        rng.gen_range(-0.5..0.5)
                    };
                }
                vectors.push(FeatureVector {
                    values,
                    label: Some((*label).into()),
                });
            }
        }
        LabeledDataset::from_vectors(vectors, "raw").unwrap()
    }

    #[test]
    fn block_multiclass_training_accuracy() {
        let ds = block_dataset(40, 50);
        let model = train_linear_svm_ovr(&ds, 1.0, 20, 3).unwrap();
        let correct = (0..ds.len())
            .filter(|&i| {
                let q = FeatureVector {
                    values: *ds.values(i),
                    label: None,
                };
                predict(&model, &q).unwrap() == ds.label(i)
            })
            .count();
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn equal_decision_values_pick_earliest_class() {
        let model = ClassifierModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: ModelKind::LinearSvmOvr,
            classes: vec!["alpha".into(), "beta".into()],
            scaler_id: "raw".into(),
            state: ModelState::Svm {
                c: 1.0,
                epochs: 1,
                seed: 0,
                weights: vec![vec![0.0; FEATURE_DIM]; 2],
                biases: vec![0.0; 2],
            },
        };
        let q = FeatureVector {
            values: [5.0; FEATURE_DIM],
            label: None,
        };
        assert_eq!(predict(&model, &q).unwrap(), "alpha");
    }

    #[test]
    fn same_seed_reproduces_weights() {
        let ds = blob_dataset(15, &["a", "b"], 4);
        let one = train_linear_svm_ovr(&ds, 1.0, 5, 99).unwrap();
        let two = train_linear_svm_ovr(&ds, 1.0, 5, 99).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn parameter_validation() {
        let ds = blob_dataset(5, &["a", "b"], 1);
        assert!(matches!(
            train_linear_svm_ovr(&ds, 0.0, 5, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            train_linear_svm_ovr(&ds, -1.0, 5, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            train_linear_svm_ovr(&ds, 1.0, 0, 0),
            Err(Error::InvalidParameter(_))
        ));

        let single = blob_dataset(5, &["only"], 1);
        assert!(matches!(
            train_linear_svm_ovr(&single, 1.0, 5, 0),
            Err(Error::SingleClass)
        ));
    }
}
