//! Random-forest scoring of land-use plans.
//!
//! Plans are summarised as `m + 2` features: per-category totals, category
//! diversity and the fraction of occupied cells. A forest of Gini trees
//! trained on excellent vs terrible plans scores a plan by the mean leaf
//! probability of "excellent".

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landuse::{diversity, LandUseConfig};
use crate::numerics::SeededRng;

/// A cell counts as occupied once its total reaches this value, i.e. when
/// rounding would leave at least one POI.
pub const OCCUPIED_CELL_MIN: f64 = 0.5;

/// `[totals…, diversity, occupancy]`.
pub fn scoring_features(cfg: &LandUseConfig) -> Vec<f64> {
    let mut f = cfg.totals();
    f.push(diversity(cfg));
    let cells = cfg.cell_totals();
    let occupied = cells.iter().filter(|&&v| v >= OCCUPIED_CELL_MIN).count();
    f.push(occupied as f64 / cells.len() as f64);
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `⌈√p⌉`.
    pub features_per_split: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: 8,
            min_leaf: 2,
            features_per_split: None,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.min_leaf == 0 || self.features_per_split == Some(0) {
            return Err(Error::Config(
                "forest needs trees ≥ 1, min_leaf ≥ 1 and features_per_split ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class probabilities `[excellent, terrible]`.
    Leaf { probs: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(&self, x: &[f64]) -> [f64; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probs } => return *probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn p_excellent(&self, x: &[f64]) -> f64 {
        self.leaf(x)[0]
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub config: ForestConfig,
    pub seed: u64,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
    /// Out-of-bag accuracy, if any sample was left out of some tree.
    pub oob_accuracy: Option<f64>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let p = if idx.is_empty() {
            0.0
        } else {
            pos as f64 / idx.len() as f64
        };
        self.nodes.push(Node::Leaf {
            probs: [p, 1.0 - p],
        });
        self.nodes.len() - 1
    }

    /// Best split on one feature: `(weighted gini, threshold)`.
    fn best_on(&self, idx: &[usize], f: usize) -> Option<(f64, f64)> {
        let mut sorted: Vec<(f64, bool)> = idx.iter().map(|&i| (self.x[i][f], self.y[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let total_pos = sorted.iter().filter(|s| s.1).count();
        let mut left_pos = 0;
        let mut best: Option<(f64, f64)> = None;
        for k in 1..n {
            left_pos += sorted[k - 1].1 as usize;
            if sorted[k - 1].0 == sorted[k].0 || k < self.cfg.min_leaf || n - k < self.cfg.min_leaf
            {
                continue;
            }
            let w = (k as f64 * gini(left_pos, k)
                + (n - k) as f64 * gini(total_pos - left_pos, n - k))
                / n as f64;
            if best.is_none_or(|(b, _)| w < b) {
                best = Some((w, midpoint(sorted[k - 1].0, sorted[k].0)));
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut SeededRng) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        if depth >= self.cfg.max_depth
            || pos == 0
            || pos == idx.len()
            || idx.len() < 2 * self.cfg.min_leaf
        {
            return self.leaf(&idx);
        }
        let p = self.x[0].len();
        let mut features: Vec<usize> = (0..p).collect();
        rng.shuffle(&mut features);
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some((w, t)) = self.best_on(&idx, f) {
                if best.is_none_or(|(b, _, _)| w < b) {
                    best = Some((w, f, t));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: [0.0, 0.0] });
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Trains one tree on the given (possibly repeated) sample indices.
pub fn train_tree(
    x: &[Vec<f64>],
    y: &[bool],
    sample: Vec<usize>,
    cfg: &ForestConfig,
    rng: &mut SeededRng,
) -> DecisionTree {
    let p = x[0].len();
    let mtry = cfg
        .features_per_split
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p);
    let mut b = Builder {
        x,
        y,
        cfg,
        mtry,
        nodes: Vec::new(),
    };
    b.grow(sample, 0, rng);
    DecisionTree { nodes: b.nodes }
}

/// Bootstrap-aggregated Gini trees; `labels[i]` is true for excellent.
pub fn rf_train(
    samples: &[Vec<f64>],
    labels: &[bool],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<RandomForestModel> {
    cfg.validate()?;
    if samples.len() != labels.len() || samples.is_empty() {
        return Err(Error::Precondition(
            "rf_train needs one label per sample".into(),
        ));
    }
    let p = samples[0].len();
    if p == 0
        || samples
            .iter()
            .any(|s| s.len() != p || s.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Precondition(
            "rf_train needs finite samples of equal width".into(),
        ));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::Precondition("rf_train needs both classes".into()));
    }
    let n = samples.len();
    let root = SeededRng::derive(seed, "forest");
    let grown: Vec<(DecisionTree, Vec<bool>)> = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = root.substream(&format!("tree/{t}"));
            let sample: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &sample {
                in_bag[i] = true;
            }
            (train_tree(samples, labels, sample, cfg, &mut rng), in_bag)
        })
        .collect();

    let mut votes = vec![(0.0, 0usize); n];
    for (tree, in_bag) in &grown {
        for i in 0..n {
            if !in_bag[i] {
                votes[i].0 += tree.p_excellent(&samples[i]);
                votes[i].1 += 1;
            }
        }
    }
    let scored: Vec<bool> = votes
        .iter()
        .zip(labels)
        .filter(|((_, c), _)| *c > 0)
        .map(|((s, c), &l)| (s / *c as f64 > 0.5) == l)
        .collect();
    let oob_accuracy = (!scored.is_empty())
        .then(|| scored.iter().filter(|&&ok| ok).count() as f64 / scored.len() as f64);
    Ok(RandomForestModel {
        config: cfg.clone(),
        seed,
        n_features: p,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        oob_accuracy,
    })
}

impl RandomForestModel {
    /// Mean over trees of the leaf probability of "excellent".
    pub fn score_features(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                op: "rf_score",
                left: vec![self.n_features],
                right: vec![x.len()],
            });
        }
        Ok(self.trees.iter().map(|t| t.p_excellent(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Score of a plan in `[0, 1]`.
pub fn rf_score(model: &RandomForestModel, cfg: &LandUseConfig) -> Result<f64> {
    model.score_features(&scoring_features(cfg))
}
