//! Random forest of Gini-split decision trees.
//!
//! Each tree sees a seeded bootstrap sample (n draws with replacement). At
//! every node, √68 (rounded down, i.e. 8) randomly chosen dimensions are
//! evaluated; candidate thresholds are the midpoints between consecutive
//! distinct values, and the split minimizing weighted Gini impurity wins. A
//! node becomes a leaf when it is pure, holds fewer than two samples, or
//! sits at the depth limit. The forest predicts by plurality vote over
//! trees, ties going to the earliest class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    plurality, ClassifierModel, LabeledDataset, ModelKind, ModelState, MODEL_FORMAT_VERSION,
};
use crate::features::FEATURE_DIM;
use crate::{derive_seed, Error, Result};

/// A decision tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        class: u32,
    },
    Split {
        dim: u16,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

impl Tree {
    /// Walks the tree for one query; `x[dim] <= threshold` goes left.
    pub fn decide(&self, x: &[f64]) -> u32 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*dim as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Structural sanity for loaded model files.
    pub(crate) fn validate(&self, n_classes: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree with no nodes".into()));
        }
        for node in &self.nodes {
            match node {
                TreeNode::Leaf { class } => {
                    if *class as usize >= n_classes {
                        return Err(Error::Format("tree leaf class out of range".into()));
                    }
                }
                TreeNode::Split {
                    dim, left, right, ..
                } => {
                    if *dim as usize >= FEATURE_DIM
                        || *left as usize >= self.nodes.len()
                        || *right as usize >= self.nodes.len()
                    {
                        return Err(Error::Format("tree split reference out of range".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Trains `trees` Gini-split trees on seeded bootstrap samples.
pub fn train_random_forest(
    dataset: &LabeledDataset,
    trees: usize,
    max_depth: Option<usize>,
    seed: u64,
) -> Result<ClassifierModel> {
    if trees < 1 {
        return Err(Error::InvalidParameter(
            "random forest requires at least one tree".into(),
        ));
    }
    let n_classes = dataset.classes().len();
    let built: Vec<Tree> = (0..trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let sample = bootstrap_indices(dataset.len(), &mut rng);
            build_tree(dataset, sample, n_classes, max_depth, &mut rng)
        })
        .collect();
    Ok(ClassifierModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::RandomForest,
        classes: dataset.classes().to_vec(),
        scaler_id: dataset.scaler_id().to_string(),
        state: ModelState::Forest {
            max_depth,
            seed,
            trees: built,
        },
    })
}

/// Plurality vote over trees; ties resolve to the earliest class.
pub(crate) fn predict_index(trees: &[Tree], n_classes: usize, query: &[f64]) -> usize {
    plurality(&vote_counts(trees, n_classes, query))
}

/// Per-class vote tally across all trees; sums to the tree count.
pub(crate) fn vote_counts(trees: &[Tree], n_classes: usize, query: &[f64]) -> Vec<u64> {
    let mut votes = vec![0u64; n_classes];
    for tree in trees {
        votes[tree.decide(query) as usize] += 1;
    }
    votes
}

pub(crate) fn bootstrap_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(0..n) as u32).collect()
}

/// Number of random dimensions evaluated per node: ⌊√68⌋.
fn mtry() -> usize {
    (FEATURE_DIM as f64).sqrt() as usize
}

struct WorkItem {
    slot: usize,
    rows: Vec<u32>,
    depth: usize,
}

/// Builds one tree with an explicit worklist (no recursion, so deep trees
/// cannot exhaust test-thread stacks).
fn build_tree(
    dataset: &LabeledDataset,
    sample: Vec<u32>,
    n_classes: usize,
    max_depth: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut nodes = vec![TreeNode::Leaf { class: 0 }];
    let mut work = vec![WorkItem {
        slot: 0,
        rows: sample,
        depth: 0,
    }];
    while let Some(item) = work.pop() {
        let counts = class_counts(dataset, &item.rows, n_classes);
        let majority = plurality(&counts) as u32;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = max_depth.is_some_and(|limit| item.depth >= limit);
        if pure || depth_reached || item.rows.len() < 2 {
            nodes[item.slot] = TreeNode::Leaf { class: majority };
            continue;
        }
        match best_split(dataset, &item.rows, n_classes, rng) {
            None => nodes[item.slot] = TreeNode::Leaf { class: majority },
            Some((dim, threshold)) => {
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = item
                    .rows
                    .iter()
                    .partition(|&&r| dataset.values(r as usize)[dim] <= threshold);
                let left = nodes.len() as u32;
                nodes.push(TreeNode::Leaf { class: 0 });
                let right = nodes.len() as u32;
                nodes.push(TreeNode::Leaf { class: 0 });
                nodes[item.slot] = TreeNode::Split {
                    dim: dim as u16,
                    threshold,
                    left,
                    right,
                };
                work.push(WorkItem {
                    slot: left as usize,
                    rows: left_rows,
                    depth: item.depth + 1,
                });
                work.push(WorkItem {
                    slot: right as usize,
                    rows: right_rows,
                    depth: item.depth + 1,
                });
            }
        }
    }
    Tree { nodes }
}

fn class_counts(dataset: &LabeledDataset, rows: &[u32], n_classes: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_classes];
    for &r in rows {
        counts[dataset.label_index(r as usize)] += 1;
    }
    counts
}

/// Picks the `(dimension, threshold)` minimizing weighted Gini impurity over
/// ⌊√68⌋ sampled dimensions; `None` when every sampled dimension is constant
/// across the rows.
fn best_split(
    dataset: &LabeledDataset,
    rows: &[u32],
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, f64)> {
    let mut best: Option<(f64, usize, f64)> = None;
    for dim in rand::seq::index::sample(rng, FEATURE_DIM, mtry()) {
        let mut column: Vec<(f64, usize)> = rows
            .iter()
            .map(|&r| {
                (
                    dataset.values(r as usize)[dim],
                    dataset.label_index(r as usize),
                )
            })
            .collect();
        column.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = column.len() as f64;
        let mut left_counts = vec![0u64; n_classes];
        let mut right_counts = class_counts(dataset, rows, n_classes);
        for p in 1..column.len() {
            let (prev_value, prev_class) = column[p - 1];
            left_counts[prev_class] += 1;
            right_counts[prev_class] -= 1;
            let value = column[p].0;
            if prev_value == value {
                continue;
            }
            let n_left = p as f64;
            let n_right = n - n_left;
            let weighted =
                (n_left * gini(&left_counts, n_left) + n_right * gini(&right_counts, n_right)) / n;
            if best.is_none_or(|(g, _, _)| weighted < g) {
                // Midpoint between the distinct neighbors; if rounding pulls
                // it up to the right value, fall back to the left value so
                // `x <= threshold` reproduces the swept partition.
                let mut threshold = prev_value + (value - prev_value) / 2.0;
                if threshold >= value {
                    threshold = prev_value;
                }
                best = Some((weighted, dim, threshold));
            }
        }
    }
    best.map(|(_, dim, threshold)| (dim, threshold))
}

fn gini(counts: &[u64], n: f64) -> f64 {
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    1.0 - sum_sq / (n * n)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::blob_dataset;
    use super::super::{predict, LabeledDataset, ModelState};
    use super::*;
    use crate::features::FeatureVector;

    #[test]
    fn separable_blobs_reach_perfect_training_accuracy() {
        let ds = blob_dataset(100, &["a", "b"], 21);
        let model = train_random_forest(&ds, 25, None, 5).unwrap();
        for i in 0..ds.len() {
            let q = FeatureVector {
                values: *ds.values(i),
                label: None,
            };
            assert_eq!(predict(&model, &q).unwrap(), ds.label(i));
        }
    }

    #[test]
    fn depth_zero_stump_predicts_bootstrap_majority() {
        let ds = blob_dataset(10, &["a", "b", "c"], 33);
        let seed = 17u64;
        let model = train_random_forest(&ds, 1, Some(0), seed).unwrap();

        // Re-derive the bootstrap sample exactly as training did and compute
        // its majority class independently.
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let sample = bootstrap_indices(ds.len(), &mut rng);
        let counts = class_counts(&ds, &sample, ds.classes().len());
        let expected = &ds.classes()[plurality(&counts)];

        for fill in [-5.0, 0.5, 3.5, 6.5, 100.0] {
            let q = FeatureVector {
                values: [fill; FEATURE_DIM],
                label: None,
            };
            assert_eq!(&predict(&model, &q).unwrap(), expected);
        }
    }

    #[test]
    fn same_seed_reproduces_predictions() {
        let ds = blob_dataset(30, &["a", "b", "c"], 8);
        let one = train_random_forest(&ds, 10, None, 42).unwrap();
        let two = train_random_forest(&ds, 10, None, 42).unwrap();
        assert_eq!(one, two);
        let other = train_random_forest(&ds, 10, None, 43).unwrap();
        // Different seed, different bootstraps — the models must differ even
        // if most predictions agree.
        assert_ne!(one, other);
    }

    #[test]
    fn votes_sum_to_tree_count() {
        let ds = blob_dataset(20, &["a", "b", "c"], 14);
        let model = train_random_forest(&ds, 31, Some(6), 2).unwrap();
        let ModelState::Forest { trees, .. } = &model.state else {
            panic!("wrong state kind");
        };
        for fill in [0.2, 3.3, 6.9, -2.0] {
            let votes = vote_counts(trees, ds.classes().len(), &[fill; FEATURE_DIM]);
            assert_eq!(votes.iter().sum::<u64>(), 31);
        }
    }

    #[test]
    fn rejects_zero_trees() {
        let ds = blob_dataset(5, &["a", "b"], 1);
        assert!(matches!(
            train_random_forest(&ds, 0, None, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn threshold_splits_match_swept_partition() {
        // Adjacent f64 values whose midpoint rounds to the larger value
        // (round-half-to-even needs the smaller significand to be odd): the
        // guard must fall back to the smaller one so both children are
        // non-empty.
        let a = f64::from_bits(1.0f64.to_bits() + 1);
        let b = f64::from_bits(a.to_bits() + 1);
        let mid = a + (b - a) / 2.0;
        assert!(mid >= b, "test premise: midpoint rounds up");
        let mut vectors = Vec::new();
        for (value, label) in [(a, "low"), (a, "low"), (b, "high"), (b, "high")] {
            let mut values = [0.0f64; FEATURE_DIM];
            values[0] = value;
            vectors.push(FeatureVector {
                values,
                label: Some(label.into()),
            });
        }
        let ds = LabeledDataset::from_vectors(vectors, "raw").unwrap();
        // Enough trees that some tree splits on dimension 0.
        let model = train_random_forest(&ds, 40, None, 3).unwrap();
        let ModelState::Forest { trees, .. } = &model.state else {
            panic!("wrong state kind");
        };
        let saw_split = trees
            .iter()
            .any(|t| t.nodes.iter().any(|n| matches!(n, TreeNode::Split { .. })));
        assert!(
            saw_split,
            "expected at least one split on the only useful dim"
        );
        for tree in trees {
            for node in &tree.nodes {
                if let TreeNode::Split { threshold, .. } = node {
                    // A threshold equal to b would send everything left.
                    assert!(*threshold < b);
                }
            }
        }
    }
}
