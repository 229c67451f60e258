//! CART decision trees and bagged random forests over FG count vectors.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Task;
use crate::numeric::{canonical_mean, round_decimal4, round_sig4, stream_rng};
use crate::pattern::FeatureVector;

/// Library version written into model files.
pub const MODEL_FORMAT: &str = "treekd-model-1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("no training samples")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("sample {index}: label {value} is not valid for {task:?}")]
    InvalidLabel { index: usize, value: f64, task: Task },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model was built with library {found:?}, expected {expected:?}")]
    VersionMismatch { expected: String, found: String },
    #[error("model format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, dimension: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((dimension as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => dimension.max(1),
            MaxFeatures::Count(k) => k.clamp(1, dimension.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub task: Task,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Per-node feature sampling inside a forest. Standalone trees see
    /// every feature.
    pub max_features: MaxFeatures,
}

impl TreeParams {
    pub fn new(task: Task) -> TreeParams {
        TreeParams {
            task,
            max_depth: 6,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: match task {
                Task::Classification => MaxFeatures::Sqrt,
                Task::Regression => MaxFeatures::All,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        if self.max_depth < 1 {
            return Err(ForestError::InvalidParams("max_depth must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ForestError::InvalidParams("min_samples_split must be >= 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(ForestError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
    },
    Leaf {
        /// Positive-class fraction (classification) or mean label.
        value: f64,
        samples: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class_counts: Option<[usize; 2]>,
    },
}

impl Node {
    pub fn samples(&self) -> usize {
        match self {
            Node::Split { samples, .. } | Node::Leaf { samples, .. } => *samples,
        }
    }
}

/// Nodes are stored in pre-order; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub task: Task,
    pub dimension: usize,
    pub depth: usize,
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn split_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    /// Depth of every node, indexed like `nodes`.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depths = vec![0; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = node {
                depths[*left] = depths[i] + 1;
                depths[*right] = depths[i] + 1;
            }
        }
        depths
    }
}

/// Root-to-leaf descent; `x[feature] <= threshold` goes left.
pub fn predict_tree(tree: &DecisionTree, x: &FeatureVector) -> Result<f64, ForestError> {
    if x.dimension() != tree.dimension {
        return Err(ForestError::DimensionMismatch {
            expected: tree.dimension,
            found: x.dimension(),
        });
    }
    let mut i = 0;
    loop {
        match &tree.nodes[i] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => i = if x.get(*feature) as f64 <= *threshold { *left } else { *right },
            Node::Leaf { value, .. } => return Ok(*value),
        }
    }
}

/// Fits a single tree on every sample with every feature considered at
/// each node.
pub fn fit_tree(x: &[FeatureVector], y: &[f64], params: &TreeParams) -> Result<DecisionTree, ForestError> {
    let dimension = check_inputs(x, y, params)?;
    let rows: Vec<usize> = (0..x.len()).collect();
    Ok(grow_tree(x, y, dimension, params, rows, None))
}

fn check_inputs(x: &[FeatureVector], y: &[f64], params: &TreeParams) -> Result<usize, ForestError> {
    params.validate()?;
    if x.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(ForestError::LengthMismatch {
            features: x.len(),
            labels: y.len(),
        });
    }
    let dimension = x[0].dimension();
    if let Some(v) = x.iter().find(|v| v.dimension() != dimension) {
        return Err(ForestError::DimensionMismatch {
            expected: dimension,
            found: v.dimension(),
        });
    }
    for (index, &value) in y.iter().enumerate() {
        let ok = match params.task {
            Task::Classification => value == 0.0 || value == 1.0,
            Task::Regression => value.is_finite(),
        };
        if !ok {
            return Err(ForestError::InvalidLabel {
                index,
                value,
                task: params.task,
            });
        }
    }
    Ok(dimension)
}

/// Dense columns for the features that are non-zero somewhere in `x`.
struct Columns {
    features: Vec<usize>,
    values: Vec<Vec<u32>>,
}

impl Columns {
    fn build(x: &[FeatureVector]) -> Columns {
        let mut features: Vec<usize> = x.iter().flat_map(|v| v.iter().map(|(i, _)| i)).collect();
        features.sort_unstable();
        features.dedup();
        let mut values = vec![vec![0u32; x.len()]; features.len()];
        for (row, v) in x.iter().enumerate() {
            for (f, c) in v.iter() {
                let col = features.binary_search(&f).expect("feature collected above");
                values[col][row] = c;
            }
        }
        Columns { features, values }
    }
}

#[derive(Clone, Copy)]
enum Score {
    /// Exact `num / den` for classification.
    Ratio(u128, u128),
    Real(f64),
}

impl Score {
    fn cmp(&self, other: &Score) -> Ordering {
        match (self, other) {
            (Score::Ratio(a, b), Score::Ratio(c, d)) => (a * d).cmp(&(c * b)),
            // Equal up to rounding: prefix-sum scores of mathematically tied
            // splits can differ in the last bits.
            (Score::Real(a), Score::Real(b)) if (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0) => Ordering::Equal,
            (Score::Real(a), Score::Real(b)) => a.total_cmp(b),
            _ => unreachable!("scores of one tree share a task"),
        }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: Score,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        match self.score.cmp(&other.score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (self.feature, self.threshold.to_bits()) < (other.feature, other.threshold.to_bits()),
        }
    }
}

struct Builder<'a> {
    y: &'a [f64],
    columns: Columns,
    params: &'a TreeParams,
    rng: Option<&'a mut Xoshiro256StarStar>,
    sample_features: usize,
    nodes: Vec<Node>,
    depth: usize,
}

fn grow_tree(
    x: &[FeatureVector],
    y: &[f64],
    dimension: usize,
    params: &TreeParams,
    rows: Vec<usize>,
    rng: Option<&mut Xoshiro256StarStar>,
) -> DecisionTree {
    let columns = Columns::build(x);
    let mut builder = Builder {
        y,
        sample_features: params.max_features.resolve(dimension),
        columns,
        params,
        rng,
        nodes: Vec::new(),
        depth: 0,
    };
    builder.grow(rows, 0);
    DecisionTree {
        task: params.task,
        dimension,
        depth: builder.depth,
        nodes: builder.nodes,
    }
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        self.depth = self.depth.max(depth);
        let index = self.nodes.len();
        self.nodes.push(self.leaf(&rows));
        let pure = rows.iter().all(|&r| self.y[r] == self.y[rows[0]]);
        if depth >= self.params.max_depth || pure || rows.len() < self.params.min_samples_split {
            return index;
        }
        let Some(best) = self.best_split(&rows) else {
            return index;
        };
        let col = &self.columns.values[best.feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| col[r] as f64 <= best.threshold);
        let samples = rows.len();
        drop(rows);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[index] = Node::Split {
            feature: self.columns.features[best.feature],
            threshold: best.threshold,
            left,
            right,
            samples,
        };
        index
    }

    fn leaf(&self, rows: &[usize]) -> Node {
        match self.params.task {
            Task::Classification => {
                let pos = rows.iter().filter(|&&r| self.y[r] == 1.0).count();
                Node::Leaf {
                    value: round_decimal4(pos as f64 / rows.len() as f64),
                    samples: rows.len(),
                    class_counts: Some([rows.len() - pos, pos]),
                }
            }
            Task::Regression => {
                let labels: Vec<f64> = rows.iter().map(|&r| self.y[r]).collect();
                Node::Leaf {
                    value: round_sig4(canonical_mean(&labels)),
                    samples: rows.len(),
                    class_counts: None,
                }
            }
        }
    }

    /// Best split over the candidate columns. `feature` in the result is a
    /// column index; columns are sorted by library index, so tie-breaks on
    /// either agree.
    fn best_split(&mut self, rows: &[usize]) -> Option<Candidate> {
        let n_cols = self.columns.features.len();
        let mut order: Vec<usize> = (0..n_cols).collect();
        let limit = match self.rng.as_deref_mut() {
            Some(rng) if self.sample_features < n_cols => {
                order.shuffle(rng);
                self.sample_features
            }
            _ => n_cols,
        };
        let mut best: Option<Candidate> = None;
        let mut evaluated = 0;
        for col in order {
            if evaluated == limit {
                break;
            }
            let mut pairs: Vec<(u32, f64)> = rows.iter().map(|&r| (self.columns.values[col][r], self.y[r])).collect();
            pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            evaluated += 1;
            let found = match self.params.task {
                Task::Classification => self.scan_gini(col, &pairs),
                Task::Regression => self.scan_variance(col, &pairs),
            };
            if let Some(c) = found {
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn boundaries<'p>(&self, pairs: &'p [(u32, f64)]) -> impl Iterator<Item = (usize, f64)> + 'p {
        let min_leaf = self.params.min_samples_leaf;
        let n = pairs.len();
        (min_leaf..=n.saturating_sub(min_leaf))
            .filter(move |&left_n| left_n > 0 && left_n < n && pairs[left_n - 1].0 != pairs[left_n].0)
            .map(move |left_n| {
                let mid = (pairs[left_n - 1].0 as f64 + pairs[left_n].0 as f64) / 2.0;
                (left_n, round_decimal4(mid))
            })
    }

    /// Maximizes `S_L / n_L + S_R / n_R` with `S = Σ c_k²`, which is the
    /// Gini decrease up to terms fixed by the node.
    fn scan_gini(&self, col: usize, pairs: &[(u32, f64)]) -> Option<Candidate> {
        let n = pairs.len();
        let total_pos = pairs.iter().filter(|p| p.1 == 1.0).count();
        let mut prefix_pos = vec![0usize; n + 1];
        for (i, p) in pairs.iter().enumerate() {
            prefix_pos[i + 1] = prefix_pos[i] + (p.1 == 1.0) as usize;
        }
        let mut best: Option<Candidate> = None;
        for (left_n, threshold) in self.boundaries(pairs) {
            let right_n = n - left_n;
            let lp = prefix_pos[left_n];
            let rp = total_pos - lp;
            let sq = |pos: usize, tot: usize| (pos * pos + (tot - pos) * (tot - pos)) as u128;
            let (sl, sr) = (sq(lp, left_n), sq(rp, right_n));
            let score = Score::Ratio(sl * right_n as u128 + sr * left_n as u128, (left_n * right_n) as u128);
            let c = Candidate {
                feature: col,
                threshold,
                score,
            };
            if best.as_ref().is_none_or(|b| c.beats(b)) {
                best = Some(c);
            }
        }
        best
    }

    /// Maximizes `sum_L² / n_L + sum_R² / n_R`, the variance reduction up
    /// to node constants.
    fn scan_variance(&self, col: usize, pairs: &[(u32, f64)]) -> Option<Candidate> {
        let n = pairs.len();
        let mut prefix = vec![0.0f64; n + 1];
        for (i, p) in pairs.iter().enumerate() {
            prefix[i + 1] = prefix[i] + p.1;
        }
        let total = prefix[n];
        let mut best: Option<Candidate> = None;
        for (left_n, threshold) in self.boundaries(pairs) {
            let sl = prefix[left_n];
            let sr = total - sl;
            let score = Score::Real(sl * sl / left_n as f64 + sr * sr / (n - left_n) as f64);
            let c = Candidate {
                feature: col,
                threshold,
                score,
            };
            if best.as_ref().is_none_or(|b| c.beats(b)) {
                best = Some(c);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub seed: u64,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl ForestParams {
    pub fn new(task: Task, n_trees: usize, seed: u64) -> ForestParams {
        ForestParams {
            n_trees,
            seed,
            bootstrap: true,
            tree: TreeParams::new(task),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.trees.first().map_or(0, |t| t.dimension)
    }
}

/// Fits `params.n_trees` trees. Tree `k` draws its bootstrap sample and
/// per-node feature subsets from `stream_rng(seed, k)` only, so it does not
/// depend on how many other trees are grown.
pub fn fit_forest(x: &[FeatureVector], y: &[f64], params: &ForestParams) -> Result<RandomForest, ForestError> {
    let dimension = check_inputs(x, y, &params.tree)?;
    if params.n_trees == 0 {
        return Err(ForestError::InvalidParams("forest needs at least one tree".into()));
    }
    let fit_one = |k: usize| {
        let mut rng = stream_rng(params.seed, k as u64);
        let rows: Vec<usize> = if params.bootstrap {
            (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
        } else {
            (0..x.len()).collect()
        };
        grow_tree(x, y, dimension, &params.tree, rows, Some(&mut rng))
    };
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(params.n_trees);
    let trees = if workers <= 1 {
        (0..params.n_trees).map(fit_one).collect()
    } else {
        let fit_one = &fit_one;
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| s.spawn(move || (w..params.n_trees).step_by(workers).map(|k| (k, fit_one(k))).collect::<Vec<_>>()))
                .collect();
            let mut out: Vec<(usize, DecisionTree)> =
                handles.into_iter().flat_map(|h| h.join().expect("tree worker panicked")).collect();
            out.sort_by_key(|(k, _)| *k);
            out.into_iter().map(|(_, t)| t).collect()
        })
    };
    Ok(RandomForest { params: *params, trees })
}

/// Mean of the per-tree predictions, summed in sorted order so the result
/// does not depend on tree order.
pub fn predict_forest(forest: &RandomForest, x: &FeatureVector) -> Result<f64, ForestError> {
    let values = forest
        .trees
        .iter()
        .map(|t| predict_tree(t, x))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    Ok(canonical_mean(&values))
}

/// On-disk model: one tree or a forest, tagged with the FG library version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub kind: ModelKind,
    pub library_version: String,
    pub dimension: usize,
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tree,
    Forest,
}

impl ModelFile {
    pub fn from_tree(tree: &DecisionTree, params: &TreeParams, library_version: &str) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            kind: ModelKind::Tree,
            library_version: library_version.into(),
            dimension: tree.dimension,
            params: ForestParams {
                n_trees: 1,
                seed: 0,
                bootstrap: false,
                tree: *params,
            },
            trees: vec![tree.clone()],
        }
    }

    pub fn from_forest(forest: &RandomForest, library_version: &str) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            kind: ModelKind::Forest,
            library_version: library_version.into(),
            dimension: forest.dimension(),
            params: forest.params,
            trees: forest.trees.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Parses a model and checks it against the library it will be used with.
    pub fn from_json(text: &str, library_version: &str, dimension: usize) -> Result<ModelFile, ForestError> {
        let model: ModelFile = serde_json::from_str(text).map_err(|e| ForestError::Format(e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(ForestError::Format(format!("unsupported format {:?}", model.format)));
        }
        if model.library_version != library_version {
            return Err(ForestError::VersionMismatch {
                expected: library_version.into(),
                found: model.library_version,
            });
        }
        if model.dimension != dimension || model.trees.iter().any(|t| t.dimension != dimension) {
            return Err(ForestError::DimensionMismatch {
                expected: dimension,
                found: model.dimension,
            });
        }
        if model.trees.is_empty() {
            return Err(ForestError::Format("model has no trees".into()));
        }
        Ok(model)
    }

    pub fn into_forest(self) -> RandomForest {
        RandomForest {
            params: self.params,
            trees: self.trees,
        }
    }
}
