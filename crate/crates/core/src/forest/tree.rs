//! A single classification tree grown best-first under a global leaf cap.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sparse::SparseRow;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `value <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        neg: u32,
        pos: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Positive-class fraction of the leaf `row` lands in.
    pub fn leaf_fraction(&self, row: &SparseRow) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row.get(*feature) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { neg, pos } => return *pos as f64 / (*neg + *pos) as f64,
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { neg, pos } => Some((*neg, *pos)),
            Node::Split { .. } => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }
}

pub(crate) struct GrowParams {
    pub max_leaves: usize,
    pub min_leaf_cases: usize,
    /// Zero-gain splits are allowed while the tree has fewer leaves than this.
    pub min_leaves: usize,
    pub features_per_split: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: u32,
    threshold: f64,
    gain: f64,
}

/// Sum over the node of (1 - Gini) weighted by size: n - (pos^2 + neg^2)/n.
fn weighted_gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (p, q) = (pos as f64, (n - pos) as f64);
    n as f64 - (p * p + q * q) / n as f64
}

fn best_split_for_feature(
    feature: u32,
    samples: &[usize],
    rows: &[SparseRow],
    labels: &[bool],
    min_leaf: usize,
    scratch: &mut Vec<(f64, bool)>,
) -> Option<SplitChoice> {
    scratch.clear();
    scratch.extend(samples.iter().map(|&s| (rows[s].get(feature), labels[s])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scratch.len();
    let total_pos = scratch.iter().filter(|(_, y)| *y).count();
    let parent = weighted_gini(total_pos, n);
    let mut left_pos = 0;
    let mut best: Option<SplitChoice> = None;
    for i in 1..n {
        if scratch[i - 1].1 {
            left_pos += 1;
        }
        if scratch[i - 1].0 == scratch[i].0 || i < min_leaf || n - i < min_leaf {
            continue;
        }
        let gain = parent - weighted_gini(left_pos, i) - weighted_gini(total_pos - left_pos, n - i);
        if best.is_none_or(|b| gain > b.gain) {
            best = Some(SplitChoice {
                feature,
                threshold: 0.5 * (scratch[i - 1].0 + scratch[i].0),
                gain,
            });
        }
    }
    best
}

struct Pending {
    node: usize,
    samples: Vec<usize>,
    split: SplitChoice,
    order: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // max-heap: larger gain first, then earlier-created node
    fn cmp(&self, other: &Self) -> Ordering {
        self.split
            .gain
            .total_cmp(&other.split.gain)
            .then_with(|| other.order.cmp(&self.order))
    }
}

fn leaf_of(samples: &[usize], labels: &[bool]) -> Node {
    let pos = samples.iter().filter(|&&s| labels[s]).count() as u32;
    Node::Leaf {
        neg: samples.len() as u32 - pos,
        pos,
    }
}

/// Grows one tree over `samples` (indices into `rows`, repeats allowed).
pub(crate) fn grow_tree<R: Rng>(
    rows: &[SparseRow],
    labels: &[bool],
    samples: Vec<usize>,
    params: &GrowParams,
    rng: &mut R,
) -> Tree {
    let mut nodes: Vec<Node> = vec![leaf_of(&samples, labels)];
    let mut heap = BinaryHeap::new();
    let mut scratch = Vec::new();
    let mut created = 0usize;
    let mut n_leaves = 1usize;

    let mut consider = |node: usize,
                        samples: Vec<usize>,
                        n_leaves: usize,
                        heap: &mut BinaryHeap<Pending>,
                        created: &mut usize,
                        rng: &mut R| {
        let order = *created;
        *created += 1;
        let pos = samples.iter().filter(|&&s| labels[s]).count();
        let allow_flat = n_leaves < params.min_leaves;
        let pure = pos == 0 || pos == samples.len();
        if (pure && !allow_flat) || samples.len() < 2 * params.min_leaf_cases {
            return;
        }
        let k = params.features_per_split.min(params.n_features);
        let mut features: Vec<usize> = sample(rng, params.n_features, k).into_vec();
        features.sort_unstable();
        let mut best: Option<SplitChoice> = None;
        for f in features {
            if let Some(c) = best_split_for_feature(
                f as u32,
                &samples,
                rows,
                labels,
                params.min_leaf_cases,
                &mut scratch,
            ) {
                // strict improvement keeps the lowest feature index on ties
                if best.is_none_or(|b| c.gain > b.gain + MIN_GAIN) {
                    best = Some(c);
                }
            }
        }
        if let Some(split) = best.filter(|b| b.gain > MIN_GAIN || allow_flat) {
            heap.push(Pending {
                node,
                samples,
                split,
                order,
            });
        }
    };

    consider(0, samples, n_leaves, &mut heap, &mut created, rng);
    while n_leaves < params.max_leaves {
        let Some(Pending {
            node,
            samples,
            split,
            ..
        }) = heap.pop()
        else {
            break;
        };
        if split.gain <= MIN_GAIN && n_leaves >= params.min_leaves {
            continue;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&s| rows[s].get(split.feature) <= split.threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(leaf_of(&left, labels));
        nodes.push(leaf_of(&right, labels));
        nodes[node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l as u32,
            right: r as u32,
        };
        n_leaves += 1;
        consider(l, left, n_leaves, &mut heap, &mut created, rng);
        consider(r, right, n_leaves, &mut heap, &mut created, rng);
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(max_leaves: usize, min_leaf: usize) -> GrowParams {
        GrowParams {
            max_leaves,
            min_leaf_cases: min_leaf,
            min_leaves: 1,
            features_per_split: 1,
            n_features: 1,
        }
    }

    #[test]
    fn gini_split_on_single_feature() {
        let rows: Vec<SparseRow> = [0.0, 0.0, 0.0, 1.0, 2.0, 3.0]
            .iter()
            .map(|&v| SparseRow::from_pairs(vec![(0, v)]))
            .collect();
        let labels = [false, false, false, true, true, true];
        let tree = grow_tree(
            &rows,
            &labels,
            (0..6).collect(),
            &params(25, 1),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(tree.n_leaves(), 2);
        match tree.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.5);
            }
            _ => panic!("root should split"),
        }
        assert_eq!(tree.leaf_fraction(&rows[0]), 0.0);
        assert_eq!(tree.leaf_fraction(&rows[5]), 1.0);
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        // the only pure split isolates one case; with min leaf 2 the best
        // admissible split is 2 | 4
        let rows: Vec<SparseRow> = (0..6)
            .map(|v| SparseRow::from_pairs(vec![(0, v as f64)]))
            .collect();
        let labels = [true, false, false, false, false, false];
        let tree = grow_tree(
            &rows,
            &labels,
            (0..6).collect(),
            &params(25, 2),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        for (neg, pos) in tree.leaves() {
            assert!(neg + pos >= 2);
        }
    }

    #[test]
    fn leaf_cap_respected() {
        let rows: Vec<SparseRow> = (0..40)
            .map(|v| SparseRow::from_pairs(vec![(0, v as f64)]))
            .collect();
        let labels: Vec<bool> = (0..40).map(|v| v % 2 == 0).collect();
        let tree = grow_tree(
            &rows,
            &labels,
            (0..40).collect(),
            &params(5, 1),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(tree.n_leaves(), 5);
    }
}
