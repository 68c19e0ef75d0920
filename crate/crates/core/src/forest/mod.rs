//! Bagged random-forest classifier over sparse count features.
//!
//! Defaults follow the misinformation classifiers this crate was built to
//! reproduce: 150 trees, at most 25 terminal nodes, terminal nodes of at least
//! 3 cases, 25 candidate features per split and bootstrap case sampling.

mod metrics;
mod split;
mod tree;

pub use metrics::{f1_score, metrics_from_confusion, Confusion, Metrics};
pub use split::{stratified_split, Split};
pub use tree::{Node, Tree};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::SparseRow;
use tree::{grow_tree, GrowParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("training data needs both classes with at least {min} cases each (got {pos} positive, {neg} negative)")]
    Degenerate { pos: usize, neg: usize, min: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("feature vector has width {got}, model expects at most {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("model format version {0} is not supported")]
    Version(u32),
    #[error("cannot evaluate on an empty test set")]
    EmptyTestSet,
    #[error("split fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("stratified split needs both classes present")]
    MissingClass,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How `min_leaf_size` is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafSizeRule {
    /// Every terminal node holds at least `min_leaf_size` training cases.
    #[default]
    MinCasesPerLeaf,
    /// Each tree is grown to at least `min_leaf_size` terminal nodes when the
    /// data allow it; terminal nodes may hold a single case.
    MinLeafCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    pub max_terminal_nodes: usize,
    pub min_leaf_size: usize,
    pub features_per_split: usize,
    pub bootstrap_with_replacement: bool,
    pub seed: u64,
    pub leaf_rule: LeafSizeRule,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 150,
            max_terminal_nodes: 25,
            min_leaf_size: 3,
            features_per_split: 25,
            bootstrap_with_replacement: true,
            seed: 0,
            leaf_rule: LeafSizeRule::MinCasesPerLeaf,
        }
    }
}

impl ForestHyperparams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: &str| Err(ForestError::Hyperparams(m.into()));
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1");
        }
        if self.max_terminal_nodes < 2 {
            return bad("max_terminal_nodes must be at least 2");
        }
        if self.min_leaf_size < 1 {
            return bad("min_leaf_size must be at least 1");
        }
        if self.features_per_split < 1 {
            return bad("features_per_split must be at least 1");
        }
        Ok(())
    }

    fn min_cases_per_leaf(&self) -> usize {
        match self.leaf_rule {
            LeafSizeRule::MinCasesPerLeaf => self.min_leaf_size,
            LeafSizeRule::MinLeafCount => 1,
        }
    }
}

/// Rows with their ids and binary labels (true = misinformation).
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub ids: Vec<String>,
    pub rows: Vec<SparseRow>,
    pub labels: Vec<bool>,
    pub n_features: usize,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, id: String, row: SparseRow, label: bool) {
        self.ids.push(id);
        self.rows.push(row);
        self.labels.push(label);
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y).count();
        (pos, self.labels.len() - pos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Caller-supplied; training itself never reads the clock.
    pub trained_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub hyperparams: ForestHyperparams,
    pub vocab_hash: String,
    pub n_features: usize,
    pub meta: TrainingMeta,
    pub trees: Vec<Tree>,
}

/// Seed for tree `index`, decorrelated from neighbouring indices.
fn tree_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn train_forest(
    data: &TrainingSet,
    vocab_hash: &str,
    hp: &ForestHyperparams,
) -> Result<ForestModel, ForestError> {
    hp.validate()?;
    if data.rows.len() != data.labels.len() || data.ids.len() != data.rows.len() {
        return Err(ForestError::LengthMismatch {
            rows: data.rows.len(),
            labels: data.labels.len(),
        });
    }
    let (pos, neg) = data.class_counts();
    let min = hp.min_cases_per_leaf();
    if pos < min.max(1) || neg < min.max(1) {
        return Err(ForestError::Degenerate { pos, neg, min });
    }
    if data.n_features == 0 {
        return Err(ForestError::Hyperparams(
            "at least one feature is required".into(),
        ));
    }
    if let Some(w) = data.rows.iter().map(SparseRow::min_width).max() {
        if w > data.n_features {
            return Err(ForestError::DimensionMismatch {
                got: w,
                expected: data.n_features,
            });
        }
    }

    // Sampling indexes a canonical id order so results do not depend on input order.
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.ids[a].cmp(&data.ids[b]).then(a.cmp(&b)));
    let rows: Vec<SparseRow> = order.iter().map(|&i| data.rows[i].clone()).collect();
    let labels: Vec<bool> = order.iter().map(|&i| data.labels[i]).collect();

    let params = GrowParams {
        max_leaves: hp.max_terminal_nodes,
        min_leaf_cases: min,
        min_leaves: match hp.leaf_rule {
            LeafSizeRule::MinCasesPerLeaf => 1,
            LeafSizeRule::MinLeafCount => hp.min_leaf_size,
        },
        features_per_split: hp.features_per_split,
        n_features: data.n_features,
    };
    let n = rows.len();
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(hp.seed, t));
            let samples: Vec<usize> = if hp.bootstrap_with_replacement {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(&rows, &labels, samples, &params, &mut rng)
        })
        .collect();

    Ok(ForestModel {
        format_version: MODEL_FORMAT_VERSION,
        hyperparams: *hp,
        vocab_hash: vocab_hash.to_owned(),
        n_features: data.n_features,
        meta: TrainingMeta {
            n_pos: pos,
            n_neg: neg,
            trained_at: None,
        },
        trees,
    })
}

impl ForestModel {
    /// Mean over trees of the positive fraction in the reached leaf.
    pub fn predict_proba(&self, row: &SparseRow) -> Result<f64, ForestError> {
        let w = row.min_width();
        if w > self.n_features {
            return Err(ForestError::DimensionMismatch {
                got: w,
                expected: self.n_features,
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_fraction(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Positive when the vote fraction is at least one half.
    pub fn predict(&self, row: &SparseRow) -> Result<bool, ForestError> {
        Ok(self.predict_proba(row)? >= 0.5)
    }

    pub fn predict_proba_many(&self, rows: &[SparseRow]) -> Result<Vec<f64>, ForestError> {
        rows.par_iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>, ForestError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, ForestError> {
        let model: ForestModel = serde_json::from_slice(bytes)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ForestError::Version(model.format_version));
        }
        Ok(model)
    }
}

pub fn evaluate(
    model: &ForestModel,
    rows: &[SparseRow],
    labels: &[bool],
) -> Result<Metrics, ForestError> {
    if rows.is_empty() {
        return Err(ForestError::EmptyTestSet);
    }
    if rows.len() != labels.len() {
        return Err(ForestError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let probs = model.predict_proba_many(rows)?;
    let mut confusion = Confusion::default();
    for (p, &y) in probs.iter().zip(labels) {
        confusion.record(*p >= 0.5, y);
    }
    Ok(metrics_from_confusion(confusion))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(pos: u32, neg: u32) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { neg, pos }],
        }
    }

    fn model(trees: Vec<Tree>) -> ForestModel {
        ForestModel {
            format_version: MODEL_FORMAT_VERSION,
            hyperparams: ForestHyperparams::default(),
            vocab_hash: String::new(),
            n_features: 3,
            meta: TrainingMeta {
                n_pos: 1,
                n_neg: 1,
                trained_at: None,
            },
            trees,
        }
    }

    #[test]
    fn vote_fraction_is_mean_of_leaves() {
        let row = SparseRow::new();
        assert_eq!(
            model(vec![leaf(3, 0); 150]).predict_proba(&row).unwrap(),
            1.0
        );
        let mut half = vec![leaf(3, 0); 75];
        half.extend(vec![leaf(0, 3); 75]);
        let m = model(half);
        assert_eq!(m.predict_proba(&row).unwrap(), 0.5);
        assert!(m.predict(&row).unwrap(), "ties go positive");
        let m = model(vec![leaf(4, 0), leaf(2, 2), leaf(0, 4)]);
        assert_eq!(m.predict_proba(&row).unwrap(), 0.5);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = model(vec![leaf(1, 1)]);
        let wide = SparseRow::from_pairs(vec![(7, 1.0)]);
        assert!(matches!(
            m.predict_proba(&wide),
            Err(ForestError::DimensionMismatch { .. })
        ));
    }

    fn separable(n: usize) -> TrainingSet {
        let mut ts = TrainingSet {
            n_features: 10,
            ..Default::default()
        };
        for i in 0..n {
            let y = i % 2 == 0;
            let mut pairs = vec![((i % 7) as u32 + 1, 1.0)];
            if y {
                pairs.push((0, 1.0));
            }
            ts.push(format!("d{i:04}"), SparseRow::from_pairs(pairs), y);
        }
        ts
    }

    #[test]
    fn separable_data_fits_perfectly() {
        let ts = separable(200);
        let hp = ForestHyperparams {
            n_trees: 30,
            features_per_split: 10,
            ..Default::default()
        };
        let m = train_forest(&ts, "h", &hp).unwrap();
        let metrics = evaluate(&m, &ts.rows, &ts.labels).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert_eq!(metrics.f1, 1.0);
    }

    #[test]
    fn constant_features_give_coin_flip() {
        let mut ts = TrainingSet {
            n_features: 5,
            ..Default::default()
        };
        for i in 0..200 {
            ts.push(
                format!("{i}"),
                SparseRow::from_pairs(vec![(1, 2.0)]),
                i % 2 == 0,
            );
        }
        let m = train_forest(&ts, "h", &ForestHyperparams::default()).unwrap();
        let p = m.predict_proba(&ts.rows[0]).unwrap();
        assert!((p - 0.5).abs() <= 0.1, "{p}");
        assert!(m.trees.iter().all(|t| t.n_leaves() == 1));
    }

    #[test]
    fn one_class_is_rejected() {
        let mut ts = separable(20);
        ts.labels.iter_mut().for_each(|y| *y = true);
        assert!(matches!(
            train_forest(&ts, "h", &ForestHyperparams::default()),
            Err(ForestError::Degenerate { .. })
        ));
    }

    #[test]
    fn hyperparam_validation() {
        let bad = ForestHyperparams {
            max_terminal_nodes: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ForestHyperparams {
            n_trees: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn seeded_training_is_byte_identical_and_order_free() {
        let ts = separable(120);
        let hp = ForestHyperparams {
            n_trees: 20,
            seed: 9,
            ..Default::default()
        };
        let a = train_forest(&ts, "h", &hp)
            .unwrap()
            .to_json_bytes()
            .unwrap();
        let b = train_forest(&ts, "h", &hp)
            .unwrap()
            .to_json_bytes()
            .unwrap();
        assert_eq!(a, b);

        let mut rev = ts.clone();
        rev.ids.reverse();
        rev.rows.reverse();
        rev.labels.reverse();
        let c = train_forest(&rev, "h", &hp)
            .unwrap()
            .to_json_bytes()
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let m = train_forest(
            &separable(40),
            "abc",
            &ForestHyperparams {
                n_trees: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let bytes = m.to_json_bytes().unwrap();
        assert_eq!(ForestModel::from_json_slice(&bytes).unwrap(), m);
        let mut v2 = m.clone();
        v2.format_version = 2;
        let bytes = serde_json::to_vec(&v2).unwrap();
        assert!(matches!(
            ForestModel::from_json_slice(&bytes),
            Err(ForestError::Version(2))
        ));
    }

    #[test]
    fn min_leaf_count_rule_grows_at_least_that_many_leaves() {
        let ts = separable(60);
        let hp = ForestHyperparams {
            n_trees: 10,
            min_leaf_size: 3,
            leaf_rule: LeafSizeRule::MinLeafCount,
            features_per_split: 10,
            ..Default::default()
        };
        let m = train_forest(&ts, "h", &hp).unwrap();
        assert!(
            m.trees.iter().all(|t| t.n_leaves() >= 3),
            "{:?}",
            m.trees.iter().map(Tree::n_leaves).collect::<Vec<_>>()
        );
    }

    #[test]
    fn evaluate_matches_item_loop() {
        let ts = separable(80);
        let m = train_forest(
            &ts,
            "h",
            &ForestHyperparams {
                n_trees: 5,
                features_per_split: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let mut c = Confusion::default();
        for (r, &y) in ts.rows.iter().zip(&ts.labels) {
            c.record(m.predict(r).unwrap(), y);
        }
        assert_eq!(evaluate(&m, &ts.rows, &ts.labels).unwrap().confusion, c);
        assert!(matches!(
            evaluate(&m, &[], &[]),
            Err(ForestError::EmptyTestSet)
        ));
    }
}
