//! Isolation forests with signed anomaly scores.
//!
//! An isolation forest isolates points by recursive random splits: at each
//! node a feature with nonzero range is chosen uniformly and a split value
//! is drawn uniformly strictly inside that range, so anomalous points (far
//! from the bulk) reach a leaf in few splits. The anomaly score of a point
//! is the Liu normalization `s = 2^(−E(h)/c(ψ))` of its mean root-to-leaf
//! path length `E(h)` over the forest, where `c(ψ)` is the expected path
//! length of an unsuccessful binary-search-tree lookup over the subsample
//! size ψ — so `s` near 1 means quickly isolated (anomalous) and `s` well
//! below ½ means deeply buried (normal).
//!
//! Fitting needs only normal-condition data. A decision threshold is
//! placed at the contamination quantile of the training scores; reported
//! scores carry a `signed` form that is positive for normal points and
//! negative for anomalies, so callers can compare against zero.
//!
//! Trees are built from per-tree seeds derived from the fit seed, and
//! every split decision depends only on set-level statistics of the node
//! (per-feature ranges), so a fitted forest is reproducible bit for bit
//! and independent of training-row order when ψ equals the training size.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::write_atomic;
use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// Default number of trees in a forest.
pub const DEFAULT_TREES: usize = 100;

/// Default contamination: the assumed fraction of anomalies in training
/// data. Below `1/n` it places the decision threshold under the minimum
/// training score, so no training point is flagged.
pub const DEFAULT_CONTAMINATION: f64 = 1e-4;

/// Default subsample ceiling used by [`Subsample::Auto`].
pub const DEFAULT_SUBSAMPLE: usize = 256;

/// Euler–Mascheroni constant used by the harmonic-number approximation
/// inside [`c_factor`].
pub const EULER_GAMMA: f64 = 0.5772156649;

/// File identifier of a persisted forest.
const KIND_FOREST: &str = "gearvib/forest";

/// Version of the forest checkpoint layout.
const FOREST_VERSION: u32 = 1;

/// Per-tree subsample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsample {
    /// `min(256, n)` for `n` training rows.
    Auto,
    /// A fixed size; larger than the training set means sampling with
    /// replacement.
    Fixed(usize),
}

impl Default for Subsample {
    fn default() -> Self {
        Subsample::Auto
    }
}

/// Maximum tree depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeightLimit {
    /// `ceil(log₂ ψ)`: deep enough to isolate the bulk, shallow enough
    /// that anomalies stand out.
    Auto,
    /// Grow until every leaf is a singleton or all-duplicate node.
    Unlimited,
    /// An explicit depth cap in edges from the root.
    Fixed(u32),
}

impl Default for HeightLimit {
    fn default() -> Self {
        HeightLimit::Auto
    }
}

/// Fit-time settings for [`IsolationForest::fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    /// Number of trees.
    pub trees: usize,
    /// Per-tree subsample size.
    pub subsample: Subsample,
    /// Assumed anomaly fraction of the training data, in (0, 0.5).
    pub contamination: f64,
    /// Tree depth cap.
    pub height_limit: HeightLimit,
    /// Master seed; per-tree seeds are derived from it.
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: DEFAULT_TREES,
            subsample: Subsample::Auto,
            contamination: DEFAULT_CONTAMINATION,
            height_limit: HeightLimit::Auto,
            seed: 0,
        }
    }
}

/// One node of an isolation tree, stored in an arena indexed from the
/// root at 0.
#[derive(Debug, Clone, PartialEq)]
enum Node {
    /// Internal split: `x[feature] < value` descends left, otherwise
    /// right. `size` is the number of subsample rows that reached it.
    Internal { feature: usize, value: f64, left: usize, right: usize, size: usize },
    /// Terminal node holding `size` rows (singleton, all-duplicate, or
    /// depth-capped).
    Leaf { size: usize },
}

/// A single isolation tree over one subsample.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

/// A fitted forest plus the scoring conventions derived at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    /// Feature dimension the forest was fitted on.
    pub dim: usize,
    /// Rows drawn per tree.
    pub subsample_size: usize,
    /// Assumed training anomaly fraction the threshold was derived from.
    pub contamination: f64,
    /// Depth cap the trees were grown under; `None` means unlimited.
    pub height_limit: Option<u32>,
    /// Decision threshold in negated-score space: a point with
    /// `−s < decision_threshold` is anomalous.
    pub decision_threshold: f64,
    /// Master seed the forest was fitted from.
    pub seed: u64,
}

/// Anomaly verdict for one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    /// Liu-normalized score in (0, 1]: larger means more anomalous.
    pub s: f64,
    /// Thresholded form `(−decision_threshold) − s`: positive for normal
    /// points, negative for anomalies.
    pub signed: f64,
    /// Mean root-to-leaf path length over the forest, in edges plus the
    /// `c(leaf size)` adjustment for non-singleton leaves.
    pub mean_path_length: f64,
}

/// Expected path length of an unsuccessful search in a binary search tree
/// over `n` points: `c(n) = 2·H(n−1) − 2(n−1)/n` with
/// `H(i) ≈ ln(i) + γ`. Defined as 0 for `n ≤ 1`.
pub fn c_factor(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
}

/// Liu normalization of a mean path length: `s = 2^(−e_h/c(ψ))`.
pub(crate) fn normalize_path_length(e_h: f64, subsample_size: usize) -> f64 {
    2f64.powf(-e_h / c_factor(subsample_size))
}

/// Smallest representable value strictly above `v` (toward +∞).
fn next_up(v: f64) -> f64 {
    f64::from_bits(v.to_bits() + 1)
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    dim: usize,
    height_limit: Option<u32>,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Range of `feature` over the rows at `indices`.
    fn range(&self, indices: &[usize], feature: usize) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &i in indices {
            let v = self.rows[i][feature];
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }

    /// Picks a feature uniformly among those splittable at this node
    /// (nonzero range with a representable interior point) and a split
    /// value strictly inside its range. Features are first tried by
    /// rejection sampling — almost always the first draw works — and only
    /// if several draws land on unsplittable features is the exact
    /// candidate set materialized. Both stages draw uniformly over the
    /// splittable features. Returns `None` when no feature is splittable
    /// (an all-duplicate node).
    fn pick_split(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let try_feature = |feature: usize, rng: &mut ChaCha8Rng| -> Option<(usize, f64)> {
            let (min, max) = self.range(indices, feature);
            if !(min < max) {
                return None;
            }
            let mut value = rng.gen_range(min..max);
            if !(value > min) {
                value = next_up(min);
                if !(value < max) {
                    return None;
                }
            }
            Some((feature, value))
        };
        for _ in 0..16 {
            let feature = rng.gen_range(0..self.dim);
            if let Some(split) = try_feature(feature, rng) {
                return Some(split);
            }
        }
        let candidates: Vec<usize> = (0..self.dim)
            .filter(|&f| {
                let (min, max) = self.range(indices, f);
                min < max && (min < next_up(min).min(max) || next_up(min) < max)
            })
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let feature = candidates[rng.gen_range(0..candidates.len())];
        try_feature(feature, rng)
    }

    /// Builds the subtree over `indices` and returns its arena index.
    fn build(&mut self, indices: Vec<usize>, depth: u32, rng: &mut ChaCha8Rng) -> usize {
        let size = indices.len();
        let capped = self.height_limit.is_some_and(|h| depth >= h);
        if size <= 1 || capped {
            self.nodes.push(Node::Leaf { size });
            return self.nodes.len() - 1;
        }
        let Some((feature, value)) = self.pick_split(&indices, rng) else {
            self.nodes.push(Node::Leaf { size });
            return self.nodes.len() - 1;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            indices.into_iter().partition(|&i| self.rows[i][feature] < value);
        // A strictly interior split value leaves the minimum on the left
        // and the maximum on the right, so neither side can be empty.
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { size: 0 });
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[slot] = Node::Internal { feature, value, left, right, size };
        slot
    }
}

impl IsolationTree {
    /// Edges from the root to the leaf isolating `x`, plus `c(size)` of
    /// that leaf.
    pub fn path_length(&self, x: &[f64]) -> Result<f64> {
        let mut index = 0usize;
        let mut depth = 0u32;
        loop {
            match &self.nodes[index] {
                Node::Leaf { size } => return Ok(f64::from(depth) + c_factor(*size)),
                Node::Internal { feature, value, left, right, .. } => {
                    let Some(&coordinate) = x.get(*feature) else {
                        return Err(Error::Shape(format!(
                            "feature vector has {} entries but the tree splits on feature {}",
                            x.len(),
                            feature
                        )));
                    };
                    index = if coordinate < *value { *left } else { *right };
                    depth += 1;
                }
            }
        }
    }

    /// Number of nodes, internal and leaf.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Rows the root was built over.
    pub fn root_size(&self) -> usize {
        match self.nodes[0] {
            Node::Leaf { size } => size,
            Node::Internal { size, .. } => size,
        }
    }
}

impl IsolationForest {
    /// Fits a forest on normal-condition feature rows.
    ///
    /// Each tree draws its subsample with a seed derived from
    /// `config.seed` and the tree index (without replacement, unless the
    /// fixed subsample size exceeds the training size) and splits
    /// recursively until nodes are singletons, all duplicates, or at the
    /// height limit. The decision threshold is then placed so that a
    /// `contamination` fraction of the training rows scores negative:
    /// `k = floor(contamination·n)` rows when that is at least one, and
    /// just below the minimum training score (no rows) otherwise.
    pub fn fit(rows: &[Vec<f64>], config: &ForestConfig) -> Result<IsolationForest> {
        if config.trees == 0 {
            return Err(Error::Config("a forest needs at least one tree".to_string()));
        }
        if !(config.contamination > 0.0 && config.contamination < 0.5) {
            return Err(Error::Config(format!(
                "contamination must be in (0, 0.5), got {}",
                config.contamination
            )));
        }
        let n = rows.len();
        if n < 2 {
            return Err(Error::Data(format!(
                "fitting needs at least 2 training vectors, got {n}"
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::Data("training vectors are zero-dimensional".to_string()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape(format!(
                    "training vector {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "training vector {i} feature {j} is not finite"
                )));
            }
        }
        if (0..dim).all(|f| {
            let first = rows[0][f];
            rows.iter().all(|row| row[f] == first)
        }) {
            return Err(Error::Data(
                "training features are constant in every dimension; no split is possible"
                    .to_string(),
            ));
        }
        let subsample_size = match config.subsample {
            Subsample::Auto => n.min(DEFAULT_SUBSAMPLE),
            Subsample::Fixed(psi) => {
                if psi < 2 {
                    return Err(Error::Config(format!(
                        "subsample size must be at least 2, got {psi}"
                    )));
                }
                psi
            }
        };
        let height_limit = match config.height_limit {
            HeightLimit::Auto => Some((subsample_size as f64).log2().ceil() as u32),
            HeightLimit::Unlimited => None,
            HeightLimit::Fixed(h) => Some(h),
        };

        let mut trees = Vec::with_capacity(config.trees);
        for t in 0..config.trees {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("forest/tree/{t}")));
            let indices: Vec<usize> = if subsample_size <= n {
                rand::seq::index::sample(&mut rng, n, subsample_size).into_vec()
            } else {
                (0..subsample_size).map(|_| rng.gen_range(0..n)).collect()
            };
            let mut builder = TreeBuilder { rows, dim, height_limit, nodes: Vec::new() };
            builder.build(indices, 0, &mut rng);
            trees.push(IsolationTree { nodes: builder.nodes });
        }

        let mut forest = IsolationForest {
            trees,
            dim,
            subsample_size,
            contamination: config.contamination,
            height_limit,
            decision_threshold: f64::NEG_INFINITY,
            seed: config.seed,
        };

        // Negated scores: higher is more normal, so the k lowest are the
        // flagged fraction.
        let mut negated: Vec<f64> = rows
            .iter()
            .map(|row| forest.raw_score(row).map(|s| -s))
            .collect::<Result<_>>()?;
        negated.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
        let k = (config.contamination * n as f64).floor() as usize;
        forest.decision_threshold = if k == 0 {
            let spread = negated[n - 1] - negated[0];
            let margin = (spread / (2.0 * n as f64)).max(1e-12 * (1.0 + negated[0].abs()));
            negated[0] - margin
        } else {
            0.5 * (negated[k - 1] + negated[k])
        };
        Ok(forest)
    }

    /// Liu-normalized score of one row (without the signed form).
    fn raw_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "feature vector has {} entries but the forest was fitted on {}",
                x.len(),
                self.dim
            )));
        }
        let total: f64 = self
            .trees
            .iter()
            .map(|tree| tree.path_length(x))
            .sum::<Result<f64>>()?;
        Ok(normalize_path_length(total / self.trees.len() as f64, self.subsample_size))
    }

    /// Scores one feature vector.
    pub fn score(&self, x: &[f64]) -> Result<AnomalyScore> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "feature vector has {} entries but the forest was fitted on {}",
                x.len(),
                self.dim
            )));
        }
        let total: f64 = self
            .trees
            .iter()
            .map(|tree| tree.path_length(x))
            .sum::<Result<f64>>()?;
        let mean_path_length = total / self.trees.len() as f64;
        let s = normalize_path_length(mean_path_length, self.subsample_size);
        Ok(AnomalyScore {
            s,
            signed: -self.decision_threshold - s,
            mean_path_length,
        })
    }

    /// Scores a batch; entry `i` equals `score(&xs[i])`.
    pub fn score_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<AnomalyScore>> {
        xs.iter().map(|x| self.score(x)).collect()
    }

    /// Number of trees.
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// The fitted trees.
    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    /// Writes the forest as a versioned JSON checkpoint (atomic).
    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = ForestDoc::from(self);
        let mut bytes = serde_json::to_vec(&doc)
            .map_err(|e| Error::Data(format!("forest serialization failed: {e}")))?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    /// Reads a forest checkpoint, validating kind, version, and tree
    /// structure.
    pub fn load(path: &Path) -> Result<IsolationForest> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let doc: ForestDoc = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: "forest checkpoint".to_string(),
            message: e.to_string(),
        })?;
        if doc.kind != KIND_FOREST {
            return Err(Error::Data(format!(
                "{}: checkpoint holds '{}', expected '{KIND_FOREST}'",
                path.display(),
                doc.kind
            )));
        }
        if doc.version != FOREST_VERSION {
            return Err(Error::Data(format!(
                "{}: checkpoint version {} is not the supported version {FOREST_VERSION}",
                path.display(),
                doc.version
            )));
        }
        doc.into_forest()
            .map_err(|msg| Error::Integrity(format!("{}: {msg}", path.display())))
    }
}

/// Serialized forest: one JSON document with per-tree parallel node
/// arrays. Node 0 is the root; leaves have null split fields and children.
#[derive(Debug, Serialize, Deserialize)]
struct ForestDoc {
    kind: String,
    version: u32,
    dim: usize,
    subsample_size: usize,
    contamination: f64,
    height_limit: Option<u32>,
    decision_threshold: f64,
    seed: u64,
    trees: Vec<TreeDoc>,
}

/// Flattened node arrays of one tree; index `i` describes node `i`.
#[derive(Debug, Serialize, Deserialize)]
struct TreeDoc {
    features: Vec<Option<usize>>,
    values: Vec<Option<f64>>,
    lefts: Vec<Option<usize>>,
    rights: Vec<Option<usize>>,
    sizes: Vec<usize>,
}

impl From<&IsolationForest> for ForestDoc {
    fn from(forest: &IsolationForest) -> ForestDoc {
        let trees = forest
            .trees
            .iter()
            .map(|tree| {
                let mut doc = TreeDoc {
                    features: Vec::with_capacity(tree.nodes.len()),
                    values: Vec::with_capacity(tree.nodes.len()),
                    lefts: Vec::with_capacity(tree.nodes.len()),
                    rights: Vec::with_capacity(tree.nodes.len()),
                    sizes: Vec::with_capacity(tree.nodes.len()),
                };
                for node in &tree.nodes {
                    match node {
                        Node::Leaf { size } => {
                            doc.features.push(None);
                            doc.values.push(None);
                            doc.lefts.push(None);
                            doc.rights.push(None);
                            doc.sizes.push(*size);
                        }
                        Node::Internal { feature, value, left, right, size } => {
                            doc.features.push(Some(*feature));
                            doc.values.push(Some(*value));
                            doc.lefts.push(Some(*left));
                            doc.rights.push(Some(*right));
                            doc.sizes.push(*size);
                        }
                    }
                }
                doc
            })
            .collect();
        ForestDoc {
            kind: KIND_FOREST.to_string(),
            version: FOREST_VERSION,
            dim: forest.dim,
            subsample_size: forest.subsample_size,
            contamination: forest.contamination,
            height_limit: forest.height_limit,
            decision_threshold: forest.decision_threshold,
            seed: forest.seed,
            trees,
        }
    }
}

impl ForestDoc {
    /// Rebuilds the in-memory forest, rejecting structural corruption.
    fn into_forest(self) -> std::result::Result<IsolationForest, String> {
        if self.trees.is_empty() {
            return Err("checkpoint contains no trees".to_string());
        }
        if self.dim == 0 {
            return Err("checkpoint has zero feature dimension".to_string());
        }
        if self.subsample_size < 2 {
            return Err(format!("subsample size {} is below 2", self.subsample_size));
        }
        if !(self.contamination > 0.0 && self.contamination < 0.5) {
            return Err(format!("contamination {} is outside (0, 0.5)", self.contamination));
        }
        if !self.decision_threshold.is_finite() {
            return Err("decision threshold is not finite".to_string());
        }
        let mut trees = Vec::with_capacity(self.trees.len());
        for (t, doc) in self.trees.iter().enumerate() {
            let n = doc.sizes.len();
            if n == 0
                || doc.features.len() != n
                || doc.values.len() != n
                || doc.lefts.len() != n
                || doc.rights.len() != n
            {
                return Err(format!("tree {t}: node arrays are empty or differ in length"));
            }
            let mut nodes = Vec::with_capacity(n);
            for i in 0..n {
                let node = match (doc.features[i], doc.values[i], doc.lefts[i], doc.rights[i]) {
                    (None, None, None, None) => Node::Leaf { size: doc.sizes[i] },
                    (Some(feature), Some(value), Some(left), Some(right)) => {
                        if feature >= self.dim {
                            return Err(format!(
                                "tree {t} node {i}: split feature {feature} exceeds dimension {}",
                                self.dim
                            ));
                        }
                        if !value.is_finite() {
                            return Err(format!("tree {t} node {i}: split value is not finite"));
                        }
                        if left >= n || right >= n {
                            return Err(format!(
                                "tree {t} node {i}: child index out of range"
                            ));
                        }
                        Node::Internal { feature, value, left, right, size: doc.sizes[i] }
                    }
                    _ => {
                        return Err(format!(
                            "tree {t} node {i}: mixes split and leaf fields"
                        ));
                    }
                };
                nodes.push(node);
            }
            validate_tree_structure(&nodes, self.height_limit)
                .map_err(|msg| format!("tree {t}: {msg}"))?;
            trees.push(IsolationTree { nodes });
        }
        Ok(IsolationForest {
            trees,
            dim: self.dim,
            subsample_size: self.subsample_size,
            contamination: self.contamination,
            height_limit: self.height_limit,
            decision_threshold: self.decision_threshold,
            seed: self.seed,
        })
    }
}

/// Checks that the arena forms one tree rooted at node 0: every node
/// reached exactly once, sizes consistent down the tree, leaf depths
/// within the height limit, and internal sizes above 1.
fn validate_tree_structure(
    nodes: &[Node],
    height_limit: Option<u32>,
) -> std::result::Result<(), String> {
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![(0usize, 0u32)];
    while let Some((index, depth)) = stack.pop() {
        if seen[index] {
            return Err(format!("node {index} is reachable twice"));
        }
        seen[index] = true;
        match &nodes[index] {
            Node::Leaf { size } => {
                if *size == 0 && nodes.len() > 1 {
                    return Err(format!("leaf {index} has size 0"));
                }
                if let Some(h) = height_limit {
                    if depth > h {
                        return Err(format!(
                            "leaf {index} at depth {depth} exceeds the height limit {h}"
                        ));
                    }
                }
            }
            Node::Internal { left, right, size, .. } => {
                let child_size = |child: usize| match nodes[child] {
                    Node::Leaf { size } => size,
                    Node::Internal { size, .. } => size,
                };
                if child_size(*left) + child_size(*right) != *size {
                    return Err(format!(
                        "node {index} size {size} does not equal the sum of its children"
                    ));
                }
                if *size < 2 {
                    return Err(format!("internal node {index} has size {size} below 2"));
                }
                stack.push((*left, depth + 1));
                stack.push((*right, depth + 1));
            }
        }
    }
    if let Some(unreached) = seen.iter().position(|&s| !s) {
        return Err(format!("node {unreached} is not reachable from the root"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    /// Uniform points in `[-0.5, 0.5]^dim` around the origin.
    fn cluster(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect()
    }

    fn gaussian(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    // --- c_factor ---

    #[test]
    fn c_factor_base_cases_are_zero() {
        assert_eq!(c_factor(0), 0.0);
        assert_eq!(c_factor(1), 0.0);
    }

    #[test]
    fn c_factor_of_two_matches_the_closed_form() {
        // 2(ln 1 + γ) − 2·1/2 = 2γ − 1.
        let expected = 2.0 * EULER_GAMMA - 1.0;
        assert!((c_factor(2) - expected).abs() < 1e-15);
        assert!((c_factor(2) - 0.15443).abs() < 1e-5);
    }

    #[test]
    fn c_factor_of_256_matches_an_independent_evaluation() {
        let expected = 2.0 * ((255.0f64).ln() + 0.5772156649) - 2.0 * 255.0 / 256.0;
        assert!((c_factor(256) - expected).abs() < 1e-10);
    }

    #[test]
    fn c_factor_is_monotone_increasing_from_two() {
        for n in 2..2000usize {
            assert!(c_factor(n + 1) > c_factor(n), "c({}) !> c({n})", n + 1);
        }
    }

    #[test]
    fn normalization_maps_the_reference_path_length_to_one_half() {
        for psi in [2usize, 16, 256, 1000] {
            assert_eq!(normalize_path_length(c_factor(psi), psi), 0.5);
        }
    }

    // --- tree construction and path lengths ---

    #[test]
    fn single_leaf_tree_has_zero_path_length() {
        let tree = IsolationTree { nodes: vec![Node::Leaf { size: 1 }] };
        assert_eq!(tree.path_length(&[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn two_distinct_points_give_unit_path_lengths() {
        // The only possible tree over two distinct 1-D points splits once
        // into two singleton leaves: 1 edge + c(1) = 1.
        let rows = vec![vec![0.0], vec![1.0]];
        let config = ForestConfig {
            trees: 5,
            subsample: Subsample::Fixed(2),
            ..ForestConfig::default()
        };
        let forest = IsolationForest::fit(&rows, &config).unwrap();
        for tree in forest.trees() {
            assert_eq!(tree.path_length(&[0.0]).unwrap(), 1.0);
            assert_eq!(tree.path_length(&[1.0]).unwrap(), 1.0);
            assert_eq!(tree.node_count(), 3);
        }
    }

    #[test]
    fn split_values_lie_strictly_inside_node_ranges() {
        let rows = cluster(64, 3, 9);
        let config = ForestConfig {
            subsample: Subsample::Fixed(64),
            height_limit: HeightLimit::Unlimited,
            ..ForestConfig::default()
        };
        let forest = IsolationForest::fit(&rows, &config).unwrap();
        // Walk each tree re-deriving the per-node point sets; every split
        // value must be inside the open range of its node's points.
        for tree in forest.trees() {
            let all: Vec<usize> = (0..rows.len()).collect();
            let mut stack = vec![(0usize, all)];
            while let Some((index, members)) = stack.pop() {
                if let Node::Internal { feature, value, left, right, .. } = &tree.nodes[index] {
                    let min = members.iter().map(|&i| rows[i][*feature]).fold(f64::INFINITY, f64::min);
                    let max =
                        members.iter().map(|&i| rows[i][*feature]).fold(f64::NEG_INFINITY, f64::max);
                    assert!(min < *value && *value < max, "split {value} outside ({min}, {max})");
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        members.into_iter().partition(|&i| rows[i][*feature] < *value);
                    assert!(!l.is_empty() && !r.is_empty());
                    stack.push((*left, l));
                    stack.push((*right, r));
                }
            }
        }
    }

    /// Independent descent over the serialized parallel node arrays.
    fn oracle_path_length(doc: &TreeDoc, x: &[f64]) -> f64 {
        fn descend(doc: &TreeDoc, index: usize, depth: u32, x: &[f64]) -> f64 {
            match doc.features[index] {
                None => f64::from(depth) + c_factor(doc.sizes[index]),
                Some(feature) => {
                    let value = doc.values[index].expect("internal node has a split value");
                    let child = if x[feature] < value {
                        doc.lefts[index].expect("internal node has a left child")
                    } else {
                        doc.rights[index].expect("internal node has a right child")
                    };
                    descend(doc, child, depth + 1, x)
                }
            }
        }
        descend(doc, 0, 0, x)
    }

    #[test]
    fn path_lengths_match_an_independent_descent_for_tiny_forests() {
        for seed in 0..20u64 {
            let n = 2 + (seed as usize % 7); // 2..=8 points
            let rows = gaussian(n, 3, 1000 + seed);
            let config = ForestConfig {
                trees: 10,
                subsample: Subsample::Fixed(n),
                height_limit: HeightLimit::Unlimited,
                seed,
                ..ForestConfig::default()
            };
            let forest = IsolationForest::fit(&rows, &config).unwrap();
            let doc = ForestDoc::from(&forest);
            for (tree, tree_doc) in forest.trees().iter().zip(&doc.trees) {
                for row in &rows {
                    assert_eq!(
                        tree.path_length(row).unwrap(),
                        oracle_path_length(tree_doc, row),
                        "descent mismatch (seed {seed})"
                    );
                }
                // Depth-unlimited trees over distinct points isolate every
                // training point into a singleton leaf.
                for row in &rows {
                    let reached = tree.path_length(row).unwrap();
                    assert_eq!(reached.fract(), 0.0, "singleton leaves add c(1) = 0");
                }
            }
        }
    }

    #[test]
    fn forest_has_one_hundred_trees_by_default() {
        let rows = cluster(300, 4, 3);
        let forest = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap();
        assert_eq!(forest.tree_count(), 100);
        assert_eq!(forest.subsample_size, 256);
        assert_eq!(forest.height_limit, Some(8));
        for tree in forest.trees() {
            assert_eq!(tree.root_size(), 256);
        }
    }

    #[test]
    fn oversized_fixed_subsample_draws_with_replacement() {
        let rows = cluster(10, 2, 4);
        let config =
            ForestConfig { subsample: Subsample::Fixed(64), ..ForestConfig::default() };
        let forest = IsolationForest::fit(&rows, &config).unwrap();
        assert_eq!(forest.subsample_size, 64);
        for tree in forest.trees() {
            assert_eq!(tree.root_size(), 64);
        }
    }

    #[test]
    fn duplicate_points_become_leaves_without_recursing() {
        // Two point values only; every node below the first separating
        // split holds identical points and must terminate as a leaf.
        let mut rows = vec![vec![1.0, 2.0]; 50];
        rows.extend(vec![vec![3.0, 5.0]; 50]);
        let config = ForestConfig {
            subsample: Subsample::Fixed(100),
            height_limit: HeightLimit::Unlimited,
            ..ForestConfig::default()
        };
        let forest = IsolationForest::fit(&rows, &config).unwrap();
        for tree in forest.trees() {
            let depth_a = tree.path_length(&rows[0]).unwrap();
            let depth_b = tree.path_length(&rows[99]).unwrap();
            // Both clusters sit in an all-duplicate leaf after few splits.
            assert!(depth_a < 4.0 + c_factor(50) && depth_b < 4.0 + c_factor(50));
        }
    }

    // --- scoring ---

    #[test]
    fn scores_stay_in_range_and_decrease_in_path_length() {
        let rows = cluster(200, 3, 5);
        let forest = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap();
        let mut queries = cluster(50, 3, 6);
        queries.push(vec![25.0, -25.0, 25.0]);
        let mut scored: Vec<AnomalyScore> = forest.score_batch(&queries).unwrap();
        for score in &scored {
            assert!(score.s > 0.0 && score.s <= 1.0, "s = {}", score.s);
            assert_eq!(score.signed, -forest.decision_threshold - score.s);
        }
        scored.sort_by(|a, b| a.mean_path_length.partial_cmp(&b.mean_path_length).unwrap());
        for pair in scored.windows(2) {
            if pair[0].mean_path_length < pair[1].mean_path_length {
                assert!(pair[0].s > pair[1].s, "s must fall as path length grows");
            }
        }
    }

    #[test]
    fn training_scores_are_all_positive_at_default_contamination() {
        for (n, seed) in [(100usize, 7u64), (2000, 8)] {
            let rows = cluster(n, 4, seed);
            let forest = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap();
            let scores = forest.score_batch(&rows).unwrap();
            let negatives = scores.iter().filter(|s| s.signed <= 0.0).count();
            assert_eq!(negatives, 0, "contamination {DEFAULT_CONTAMINATION} with n = {n}");
        }
    }

    #[test]
    fn contamination_flags_the_requested_training_fraction() {
        let rows = gaussian(1000, 2, 11);
        let config = ForestConfig { contamination: 0.05, ..ForestConfig::default() };
        let forest = IsolationForest::fit(&rows, &config).unwrap();
        let scores = forest.score_batch(&rows).unwrap();
        let negatives = scores.iter().filter(|s| s.signed < 0.0).count();
        assert_eq!(negatives, 50);
    }

    #[test]
    fn distant_outlier_scores_above_every_inlier_in_nearly_all_trials() {
        let mut hits = 0;
        for trial in 0..100u64 {
            let rows = cluster(100, 4, 2000 + trial);
            let config = ForestConfig { seed: trial, ..ForestConfig::default() };
            let forest = IsolationForest::fit(&rows, &config).unwrap();
            // Cluster fills [-0.5, 0.5]^4; 10 cluster-widths away.
            let outlier = forest.score(&[10.0, 10.0, 10.0, 10.0]).unwrap();
            let max_inlier = forest
                .score_batch(&rows)
                .unwrap()
                .into_iter()
                .map(|a| a.s)
                .fold(f64::NEG_INFINITY, f64::max);
            if outlier.s > max_inlier {
                hits += 1;
            }
        }
        assert!(hits >= 95, "outlier outscored inliers in only {hits}/100 trials");
    }

    #[test]
    fn outlier_signed_score_is_negative_and_inliers_positive() {
        let rows = cluster(500, 3, 13);
        let forest = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap();
        assert!(forest.score(&[30.0, 30.0, 30.0]).unwrap().signed < 0.0);
        assert!(forest.score(&rows[17]).unwrap().signed > 0.0);
    }

    // --- determinism and invariance ---

    #[test]
    fn fitting_twice_with_one_seed_is_identical() {
        let rows = cluster(150, 3, 21);
        let config = ForestConfig { seed: 77, ..ForestConfig::default() };
        let a = IsolationForest::fit(&rows, &config).unwrap();
        let b = IsolationForest::fit(&rows, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_order_does_not_change_scores_at_full_subsample() {
        let rows = cluster(80, 3, 22);
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(3, 40);
        let config = ForestConfig {
            subsample: Subsample::Fixed(80),
            seed: 5,
            ..ForestConfig::default()
        };
        let a = IsolationForest::fit(&rows, &config).unwrap();
        let b = IsolationForest::fit(&shuffled, &config).unwrap();
        let queries = cluster(20, 3, 23);
        for q in &queries {
            assert_eq!(a.score(q).unwrap(), b.score(q).unwrap());
        }
        assert_eq!(a.decision_threshold, b.decision_threshold);
    }

    #[test]
    fn a_fitted_forest_scores_concurrently() {
        let rows = cluster(100, 2, 31);
        let forest = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap();
        let expected = forest.score(&rows[0]).unwrap();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..4)
                .map(|_| scope.spawn(|| forest.score(&rows[0]).unwrap()))
                .collect();
            for handle in handles {
                assert_eq!(handle.join().unwrap(), expected);
            }
        });
    }

    // --- input validation ---

    #[test]
    fn tiny_or_malformed_training_sets_are_refused() {
        let config = ForestConfig::default();
        assert!(matches!(
            IsolationForest::fit(&[vec![1.0]], &config),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            IsolationForest::fit(&[vec![1.0], vec![1.0, 2.0]], &config),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            IsolationForest::fit(&[vec![1.0], vec![f64::NAN]], &config),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn constant_training_features_are_refused() {
        let rows = vec![vec![2.5, -1.0]; 40];
        let err = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("no split is possible"), "{err}");
    }

    #[test]
    fn invalid_settings_are_refused() {
        let rows = cluster(10, 2, 41);
        for config in [
            ForestConfig { trees: 0, ..ForestConfig::default() },
            ForestConfig { contamination: 0.0, ..ForestConfig::default() },
            ForestConfig { contamination: 0.5, ..ForestConfig::default() },
            ForestConfig { subsample: Subsample::Fixed(1), ..ForestConfig::default() },
        ] {
            assert!(matches!(
                IsolationForest::fit(&rows, &config),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let rows = cluster(50, 3, 51);
        let forest = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap();
        assert!(matches!(forest.score(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    // --- persistence ---

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.json");
        let rows = gaussian(120, 4, 61);
        let forest = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap();
        forest.save(&path).unwrap();
        let reloaded = IsolationForest::load(&path).unwrap();
        assert_eq!(forest, reloaded);
        let queries = gaussian(10, 4, 62);
        for q in &queries {
            assert_eq!(forest.score(q).unwrap(), reloaded.score(q).unwrap());
        }
    }

    #[test]
    fn checkpoint_kind_and_version_are_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.json");
        let rows = cluster(30, 2, 71);
        let forest = IsolationForest::fit(&rows, &ForestConfig::default()).unwrap();
        forest.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let wrong_kind = text.replace(KIND_FOREST, "gearvib/other");
        std::fs::write(&path, wrong_kind).unwrap();
        let err = IsolationForest::load(&path).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("gearvib/other"));

        let wrong_version = text.replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, wrong_version).unwrap();
        assert!(matches!(IsolationForest::load(&path), Err(Error::Data(_))));

        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(IsolationForest::load(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn structurally_corrupt_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.json");
        let rows = cluster(30, 2, 81);
        let config = ForestConfig { trees: 1, ..ForestConfig::default() };
        let forest = IsolationForest::fit(&rows, &config).unwrap();
        forest.save(&path).unwrap();
        let mut doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();

        // Point the root's left child at itself: a cycle.
        doc["trees"][0]["lefts"][0] = serde_json::json!(0);
        std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        let err = IsolationForest::load(&path).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");

        // Break the size bookkeeping instead.
        let mut doc: serde_json::Value = serde_json::from_str(
            &serde_json::to_string(&ForestDoc::from(&forest)).unwrap(),
        )
        .unwrap();
        doc["trees"][0]["sizes"][0] = serde_json::json!(999);
        std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        let err = IsolationForest::load(&path).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }
}
