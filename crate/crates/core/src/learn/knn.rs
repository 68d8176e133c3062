//! k-nearest-neighbors classification with fully specified tie handling.
//!
//! Distances are Euclidean (compared in squared form, which ranks
//! identically). Equal distances are broken by the lower training index;
//! equal vote counts are broken by the class of the nearest neighbor among
//! the tied classes.

use super::{
    plurality, squared_distance, ClassifierModel, LabeledDataset, ModelKind, ModelState,
    MODEL_FORMAT_VERSION,
};
use crate::{Error, Result};

/// Builds a k-NN model by storing the training vectors verbatim.
pub fn train_knn(dataset: &LabeledDataset, k: usize) -> Result<ClassifierModel> {
    if k < 1 || k > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "k-NN requires 1 <= k <= {} training vectors, got k={k}",
            dataset.len()
        )));
    }
    let vectors = (0..dataset.len())
        .map(|i| dataset.values(i).to_vec())
        .collect();
    let labels = (0..dataset.len())
        .map(|i| dataset.label_index(i) as u32)
        .collect();
    Ok(ClassifierModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Knn,
        classes: dataset.classes().to_vec(),
        scaler_id: dataset.scaler_id().to_string(),
        state: ModelState::Knn { k, vectors, labels },
    })
}

/// Predicts the class index for `query`. See the module docs for tie rules.
pub(crate) fn predict_index(
    vectors: &[Vec<f64>],
    labels: &[u32],
    k: usize,
    n_classes: usize,
    query: &[f64],
) -> Result<usize> {
    if let Some(bad) = vectors.iter().find(|v| v.len() != query.len()) {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            found: bad.len(),
        });
    }
    let mut ranked: Vec<(f64, usize)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (squared_distance(v, query), i))
        .collect();
    ranked.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    ranked.truncate(k);

    let mut votes = vec![0u64; n_classes];
    for &(_, i) in &ranked {
        votes[labels[i] as usize] += 1;
    }
    let top = votes[plurality(&votes)];
    // The nearest neighbor whose class reached the top vote count decides.
    let winner = ranked
        .iter()
        .map(|&(_, i)| labels[i] as usize)
        .find(|&c| votes[c] == top)
        .expect("k >= 1 guarantees at least one neighbor");
    Ok(winner)
}
