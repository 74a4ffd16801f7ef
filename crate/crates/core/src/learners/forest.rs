//! Random forest of Gini-impurity decision trees grown on bootstrap resamples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::FeatureTable;
use crate::ingest::EmotionLabel;

const N_CLASSES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Candidate features per split; `None` means `ceil(sqrt(p))`.
    pub features_per_split: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            features_per_split: None,
            min_samples_leaf: 1,
            seed: 42,
        }
    }
}

impl RfConfig {
    pub fn resolved_features_per_split(&self, p: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Param("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Param("min_samples_leaf must be at least 1".into()));
        }
        let m = self.resolved_features_per_split(p);
        if m == 0 || m > p {
            return Err(Error::Param(format!("features_per_split {m} outside [1, {p}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Class index into [`EmotionLabel::ALL`].
    Leaf { class: u8 },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u16,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class as usize,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub p: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Per-class vote counts for one row.
    pub fn votes(&self, row: &[f64]) -> [f64; N_CLASSES] {
        let mut v = [0.0; N_CLASSES];
        for t in &self.trees {
            v[t.predict(row)] += 1.0;
        }
        v
    }
}

/// Column-major view of the training data shared by all trees.
struct TrainData {
    columns: Vec<Vec<f64>>,
    classes: Vec<u8>,
}

struct Builder<'a> {
    data: &'a TrainData,
    cfg: &'a RfConfig,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    pairs: Vec<(f64, u8)>,
    features: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn class_counts(data: &TrainData, samples: &[u32]) -> [u32; N_CLASSES] {
    let mut c = [0; N_CLASSES];
    for &s in samples {
        c[data.classes[s as usize] as usize] += 1;
    }
    c
}

fn majority(counts: &[u32; N_CLASSES]) -> u8 {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best as u8
}

/// `n * gini` for a class histogram with `n` members.
fn weighted_gini(counts: &[u32; N_CLASSES], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    n as f64 - sq / n as f64
}

impl Builder<'_> {
    fn best_split(&mut self, samples: &[u32]) -> Option<BestSplit> {
        let n = samples.len() as u32;
        let min_leaf = self.cfg.min_samples_leaf as u32;
        let total = class_counts(self.data, samples);
        self.features.shuffle(&mut self.rng);

        let mut best: Option<BestSplit> = None;
        let mut evaluated = 0;
        for fi in 0..self.features.len() {
            if evaluated >= self.mtry && best.is_some() {
                break;
            }
            let feature = self.features[fi];
            let column = &self.data.columns[feature];
            self.pairs.clear();
            self.pairs.extend(
                samples
                    .iter()
                    .map(|&s| (column[s as usize], self.data.classes[s as usize])),
            );
            self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.pairs[0].0 == self.pairs[self.pairs.len() - 1].0 {
                continue;
            }
            evaluated += 1;

            let mut left = [0u32; N_CLASSES];
            for i in 1..self.pairs.len() {
                left[self.pairs[i - 1].1 as usize] += 1;
                let (prev, cur) = (self.pairs[i - 1].0, self.pairs[i].0);
                let n_left = i as u32;
                if prev == cur || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let mut right = total;
                for (r, l) in right.iter_mut().zip(&left) {
                    *r -= l;
                }
                let score = weighted_gini(&left, n_left) + weighted_gini(&right, n - n_left);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(BestSplit {
                        feature,
                        threshold: prev,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(mut self, samples: &mut [u32]) -> DecisionTree {
        self.nodes.push(Node::Leaf { class: 0 });
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        while let Some((id, start, end, depth)) = stack.pop() {
            let slice = &mut samples[start..end];
            let counts = class_counts(self.data, slice);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = self.cfg.max_depth.is_some_and(|d| depth >= d);
            let too_small = slice.len() < 2 * self.cfg.min_samples_leaf;
            let split = if pure || depth_capped || too_small {
                None
            } else {
                self.best_split(slice)
            };
            let Some(split) = split else {
                self.nodes[id] = Node::Leaf {
                    class: majority(&counts),
                };
                continue;
            };

            let column = &self.data.columns[split.feature];
            let mut mid = 0;
            for i in 0..slice.len() {
                if column[slice[i] as usize] <= split.threshold {
                    slice.swap(i, mid);
                    mid += 1;
                }
            }
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf { class: 0 });
            self.nodes.push(Node::Leaf { class: 0 });
            self.nodes[id] = Node::Split {
                feature: split.feature as u16,
                threshold: split.threshold,
                left: left as u32,
                right: left as u32 + 1,
            };
            stack.push((left + 1, start + mid, end, depth + 1));
            stack.push((left, start, start + mid, depth + 1));
        }
        DecisionTree { nodes: self.nodes }
    }
}

fn grow_tree(data: &TrainData, cfg: &RfConfig, p: usize, tree_index: usize) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(tree_index as u64));
    let n = data.classes.len();
    let mut samples: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
    let builder = Builder {
        data,
        cfg,
        mtry: cfg.resolved_features_per_split(p),
        rng,
        nodes: Vec::new(),
        pairs: Vec::with_capacity(n),
        features: (0..p).collect(),
    };
    builder.grow(&mut samples)
}

/// Grows `cfg.n_trees` trees; tree `i` uses the generator seeded with
/// `cfg.seed + i`, so the result does not depend on thread scheduling.
pub fn fit_forest(train: &FeatureTable, cfg: &RfConfig) -> Result<RandomForest> {
    if train.is_empty() {
        return Err(Error::DegenerateTraining("training table is empty".into()));
    }
    let p = train.p();
    cfg.validate(p)?;
    if p > u16::MAX as usize {
        return Err(Error::Param("too many features".into()));
    }
    let distinct = train.label_counts().iter().filter(|&&c| c > 0).count();
    if distinct < 2 {
        return Err(Error::DegenerateTraining(
            "training table holds a single label".into(),
        ));
    }
    let data = TrainData {
        columns: (0..p).map(|j| train.column(j)).collect(),
        classes: train.labels().iter().map(|l| l.index() as u8).collect(),
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| grow_tree(&data, cfg, p, i))
        .collect();
    Ok(RandomForest { p, trees })
}

/// Label with the most votes; ties go to the smaller label id.
pub fn vote_winner(votes: &[f64; N_CLASSES]) -> EmotionLabel {
    let mut best = 0;
    for (i, v) in votes.iter().enumerate() {
        if *v > votes[best] {
            best = i;
        }
    }
    EmotionLabel::ALL[best]
}
