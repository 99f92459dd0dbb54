//! Histogram gradient-boosted trees for binary logistic loss.
//!
//! Features are bucketed once into at most `bins` quantile bins computed from
//! the training matrix. Trees grow level-wise to `max_depth` using the usual
//! second-order gain, and each boosting round fits one tree on a row sample.
//! After every round the validation RCE is recorded; training stops after
//! `early_stopping_rounds` rounds without a strict improvement, and
//! prediction only uses trees up to the best round.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EngagementClass;
use crate::metrics::{self, MetricError};

/// Bumped on incompatible changes to the model JSON layout.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Bin index reserved for NaN inputs.
const MISSING_BIN: u16 = u16::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum GbdtError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("empty sampled row set")]
    EmptyRowSet,
    #[error("feature matrix has {got} columns, expected {expected}")]
    FeatureCount { expected: usize, got: usize },
    #[error("feature order version mismatch: model expects '{expected}', input is '{got}'")]
    VersionMismatch { expected: String, got: String },
    #[error("{0} labels for {1} rows")]
    LabelCount(usize, usize),
    #[error("matrix data length {len} is not a multiple of {n_features}")]
    Shape { len: usize, n_features: usize },
    #[error("validation set: {0}")]
    Validation(MetricError),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("model file: {0}")]
    Format(String),
}

/// Dense row-major feature matrix tagged with its feature-order version.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_features: usize,
    version: String,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_features: usize, version: &str) -> Result<Self, GbdtError> {
        if n_features == 0 || !data.len().is_multiple_of(n_features) {
            return Err(GbdtError::Shape { len: data.len(), n_features });
        }
        Ok(FeatureMatrix { data, n_features, version: version.to_owned() })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_features)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.n_features).copied()
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix { data, n_features: self.n_features, version: self.version.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Uniform,
    GradientBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub eta: f64,
    pub max_depth: usize,
    pub rounds: usize,
    pub early_stopping_rounds: usize,
    pub subsample: f64,
    pub sampling: Sampling,
    pub max_delta_step: f64,
    pub lambda: f64,
    pub bins: usize,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            eta: 0.09,
            max_depth: 5,
            rounds: 200,
            early_stopping_rounds: 10,
            subsample: 0.2,
            sampling: Sampling::GradientBased,
            max_delta_step: 5.0,
            lambda: 1.0,
            bins: 256,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainParams {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::InvalidParams(m.to_owned()));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must be in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.bins < 2 || self.bins > MISSING_BIN as usize {
            return bad("bins must be in [2, 65535]");
        }
        if !(self.max_delta_step > 0.0) {
            return bad("max_delta_step must be positive");
        }
        if !(self.lambda >= 0.0) || !(self.min_child_weight >= 0.0) {
            return bad("lambda and min_child_weight must be non-negative");
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// First and second derivative of the log-loss with respect to the margin.
pub fn logistic_grad_hess(margin: f64, label: bool) -> (f64, f64) {
    let p = sigmoid(margin);
    let y = if label { 1.0 } else { 0.0 };
    (p - y, p * (1.0 - p))
}

/// Quantile bin edges per feature. A value `v` falls in bin
/// `#{edges < v}`, so bin `b` holds `edges[b-1] < v <= edges[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub edges: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn fit(matrix: &FeatureMatrix, bins: usize) -> BinMapper {
        let edges = (0..matrix.n_features())
            .into_par_iter()
            .map(|j| {
                let mut values: Vec<f64> = matrix.column(j).filter(|v| !v.is_nan()).collect();
                values.sort_unstable_by(f64::total_cmp);
                quantile_edges(&values, bins)
            })
            .collect();
        BinMapper { edges }
    }

    pub fn bin(&self, feature: usize, value: f64) -> u16 {
        if value.is_nan() {
            MISSING_BIN
        } else {
            self.edges[feature].partition_point(|&e| e < value) as u16
        }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }
}

fn quantile_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let mut unique = sorted.to_vec();
    unique.dedup();
    if unique.len() <= bins {
        unique.pop();
        return unique;
    }
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut edges: Vec<f64> = (1..bins).map(|k| sorted[k * n / bins]).collect();
    edges.dedup();
    edges.retain(|&e| e < max);
    edges
}

/// Column-major binned copy of a training matrix.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    columns: Vec<Vec<u16>>,
    n_rows: usize,
    pub mapper: BinMapper,
}

impl BinnedMatrix {
    pub fn new(matrix: &FeatureMatrix, mapper: BinMapper) -> BinnedMatrix {
        let columns = (0..matrix.n_features())
            .into_par_iter()
            .map(|j| matrix.column(j).map(|v| mapper.bin(j, v)).collect())
            .collect();
        BinnedMatrix { columns, n_rows: matrix.n_rows(), mapper }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `value <= threshold` (bin `<= bin`) go left; NaN follows
    /// `default_left`.
    Split {
        feature: usize,
        bin: u16,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// Binary tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, default_left, left, right, .. } => {
                    let v = row[feature];
                    let go_left = if v.is_nan() { default_left } else { v <= threshold };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    fn predict_binned(&self, binned: &BinnedMatrix, row: usize) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, bin, default_left, left, right, .. } => {
                    let b = binned.columns[feature][row];
                    let go_left = if b == MISSING_BIN { default_left } else { b <= bin };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }

    fn scale(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct GradPair {
    g: f64,
    h: f64,
}

impl GradPair {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    bin: u16,
    gain: f64,
    default_left: bool,
}

fn leaf_weight(sum: GradPair, params: &TrainParams) -> f64 {
    (-sum.g / (sum.h + params.lambda)).clamp(-params.max_delta_step, params.max_delta_step)
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Best split of one feature for the given rows, if any has positive gain.
fn best_split_for_feature(
    binned: &BinnedMatrix,
    feature: usize,
    rows: &[u32],
    grads: &[f64],
    hess: &[f64],
    total: GradPair,
    params: &TrainParams,
) -> Option<SplitCandidate> {
    let n_bins = binned.mapper.n_bins(feature);
    if n_bins < 2 {
        return None;
    }
    let column = &binned.columns[feature];
    let mut hist = vec![GradPair::default(); n_bins];
    let mut missing = GradPair::default();
    for &r in rows {
        let r = r as usize;
        let b = column[r];
        if b == MISSING_BIN {
            missing.add(grads[r], hess[r]);
        } else {
            hist[b as usize].add(grads[r], hess[r]);
        }
    }

    let parent = score(total.g, total.h, params.lambda);
    let present = GradPair { g: total.g - missing.g, h: total.h - missing.h };
    let mut best: Option<SplitCandidate> = None;
    let mut left = GradPair::default();
    for (b, pair) in hist.iter().enumerate().take(n_bins - 1) {
        left.add(pair.g, pair.h);
        let mut l = left;
        let mut r = GradPair { g: present.g - left.g, h: present.h - left.h };
        let default_left = l.h >= r.h;
        if default_left {
            l.add(missing.g, missing.h);
        } else {
            r.add(missing.g, missing.h);
        }
        if l.h < params.min_child_weight || r.h < params.min_child_weight {
            continue;
        }
        let gain =
            0.5 * (score(l.g, l.h, params.lambda) + score(r.g, r.h, params.lambda) - parent);
        if gain > 0.0 && best.is_none_or(|c| gain > c.gain) {
            best = Some(SplitCandidate { feature, bin: b as u16, gain, default_left });
        }
    }
    best
}

/// Fits one tree (leaf values not yet scaled by `eta`).
pub fn fit_tree(
    binned: &BinnedMatrix,
    grads: &[f64],
    hess: &[f64],
    rows: &[u32],
    params: &TrainParams,
) -> Result<Tree, GbdtError> {
    if rows.is_empty() {
        return Err(GbdtError::EmptyRowSet);
    }
    let sum_of = |rows: &[u32]| {
        let mut s = GradPair::default();
        for &r in rows {
            s.add(grads[r as usize], hess[r as usize]);
        }
        s
    };

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut frontier: Vec<(usize, Vec<u32>, GradPair)> = vec![(0, rows.to_vec(), sum_of(rows))];

    for _depth in 0..params.max_depth {
        let mut next = Vec::new();
        for (idx, node_rows, total) in frontier {
            let candidates: Vec<Option<SplitCandidate>> = (0..binned.n_features())
                .into_par_iter()
                .map(|f| best_split_for_feature(binned, f, &node_rows, grads, hess, total, params))
                .collect();
            // Sequential reduction keeps ties on the lowest feature index.
            let mut best: Option<SplitCandidate> = None;
            for c in candidates.into_iter().flatten() {
                if best.is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
            let Some(split) = best else {
                nodes[idx] = Node::Leaf { value: leaf_weight(total, params) };
                continue;
            };

            let column = &binned.columns[split.feature];
            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                node_rows.iter().partition(|&&r| {
                    let b = column[r as usize];
                    if b == MISSING_BIN {
                        split.default_left
                    } else {
                        b <= split.bin
                    }
                });
            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[idx] = Node::Split {
                feature: split.feature,
                bin: split.bin,
                threshold: binned.mapper.edges[split.feature][split.bin as usize],
                default_left: split.default_left,
                left,
                right: left + 1,
            };
            let (ls, rs) = (sum_of(&left_rows), sum_of(&right_rows));
            next.push((left, left_rows, ls));
            next.push((left + 1, right_rows, rs));
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    for (idx, _, total) in frontier {
        nodes[idx] = Node::Leaf { value: leaf_weight(total, params) };
    }
    Ok(Tree { nodes })
}

/// Inclusion probabilities `min(1, c * w_i)` with `c` chosen so that they
/// sum to `fraction * n`.
fn gradient_inclusion_probs(weights: &[f64], fraction: f64) -> Vec<f64> {
    let n = weights.len();
    let target = fraction * n as f64;
    let mut sorted: Vec<f64> = weights.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    if total <= 0.0 {
        return vec![fraction; n];
    }
    // k = number of rows clipped at probability 1.
    let mut rest = total;
    let mut scale = target / total;
    for (k, &v) in sorted.iter().enumerate().take(n) {
        scale = (target - k as f64) / rest;
        if scale * v <= 1.0 {
            break;
        }
        rest -= sorted[k];
        if rest <= 0.0 {
            scale = f64::INFINITY;
            break;
        }
    }
    weights.iter().map(|w| (scale * w).min(1.0)).collect()
}

/// Draws the rows of one round. Gradient-based draws also return each
/// selected row's importance weight `1 / p`, which keeps the sampled
/// gradient and hessian sums unbiased.
fn sample_rows(
    grads: &[f64],
    hess: &[f64],
    params: &TrainParams,
    rng: &mut ChaCha8Rng,
) -> (Vec<u32>, Option<Vec<f64>>) {
    let n = grads.len();
    if params.subsample >= 1.0 {
        return ((0..n as u32).collect(), None);
    }
    let probs = match params.sampling {
        Sampling::Uniform => vec![params.subsample; n],
        Sampling::GradientBased => {
            let w: Vec<f64> = grads
                .iter()
                .zip(hess)
                .map(|(g, h)| (g * g + params.lambda * h * h).sqrt())
                .collect();
            gradient_inclusion_probs(&w, params.subsample)
        }
    };
    let mut rows: Vec<u32> = (0..n)
        .filter(|&i| rng.random::<f64>() < probs[i])
        .map(|i| i as u32)
        .collect();
    if rows.is_empty() {
        rows.push(rng.random_range(0..n as u32));
    }
    let weights = (params.sampling == Sampling::GradientBased).then(|| {
        rows.iter()
            .map(|&i| {
                let p = probs[i as usize];
                if p > 0.0 {
                    1.0 / p
                } else {
                    1.0
                }
            })
            .collect()
    });
    (rows, weights)
}

/// Per-class boosted model. Only the first `best_iteration` trees predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub feature_order_version: String,
    pub n_features: usize,
    pub class: Option<EngagementClass>,
    pub params: TrainParams,
    pub base_margin: f64,
    pub bin_edges: Vec<Vec<f64>>,
    pub trees: Vec<Tree>,
    pub best_iteration: usize,
    pub valid_rce_trace: Vec<f64>,
    pub train_loss_trace: Vec<f64>,
}

impl GbdtModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GbdtError> {
        let m: GbdtModel =
            serde_json::from_str(text).map_err(|e| GbdtError::Format(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(GbdtError::Format(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn active_trees(&self) -> &[Tree] {
        &self.trees[..self.best_iteration.min(self.trees.len())]
    }

    fn margin(&self, row: &[f64]) -> f64 {
        self.base_margin + self.active_trees().iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

/// Features and labels of one split.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub features: &'a FeatureMatrix,
    pub labels: &'a [bool],
}

impl Dataset<'_> {
    fn check(&self) -> Result<(), GbdtError> {
        if self.labels.len() != self.features.n_rows() {
            return Err(GbdtError::LabelCount(self.labels.len(), self.features.n_rows()));
        }
        Ok(())
    }
}

fn mean_log_loss(margins: &[f64], labels: &[bool]) -> f64 {
    let preds: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
    metrics::cross_entropy(&preds, labels).unwrap_or(f64::NAN)
}

pub fn train(
    train: Dataset<'_>,
    valid: Dataset<'_>,
    params: &TrainParams,
) -> Result<GbdtModel, GbdtError> {
    params.validate()?;
    train.check()?;
    valid.check()?;
    if train.labels.is_empty() {
        return Err(GbdtError::EmptyTrainingSet);
    }
    if valid.features.n_features() != train.features.n_features() {
        return Err(GbdtError::FeatureCount {
            expected: train.features.n_features(),
            got: valid.features.n_features(),
        });
    }
    if valid.features.version() != train.features.version() {
        return Err(GbdtError::VersionMismatch {
            expected: train.features.version().to_owned(),
            got: valid.features.version().to_owned(),
        });
    }
    let base_margin = 0.0;
    let mut valid_margins = vec![base_margin; valid.labels.len()];
    let valid_rce = |margins: &[f64]| {
        let preds: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
        metrics::rce(&preds, valid.labels).map_err(GbdtError::Validation)
    };
    valid_rce(&valid_margins)?;

    let mapper = BinMapper::fit(train.features, params.bins);
    let binned = BinnedMatrix::new(train.features, mapper);
    let n = train.labels.len();
    let mut margins = vec![base_margin; n];
    let mut grads = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut trees = Vec::new();
    let mut rce_trace = Vec::new();
    let mut loss_trace = Vec::new();
    let mut best_rce = f64::NEG_INFINITY;
    let mut best_iteration = 0;
    let mut since_best = 0;

    for round in 0..params.rounds {
        for i in 0..n {
            let (g, h) = logistic_grad_hess(margins[i], train.labels[i]);
            grads[i] = g;
            hess[i] = h;
        }
        let (rows, weights) = sample_rows(&grads, &hess, params, &mut rng);
        if let Some(w) = weights {
            for (&i, w) in rows.iter().zip(w) {
                grads[i as usize] *= w;
                hess[i as usize] *= w;
            }
        }
        let mut tree = fit_tree(&binned, &grads, &hess, &rows, params)?;
        tree.scale(params.eta);

        margins
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m += tree.predict_binned(&binned, i));
        valid_margins
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m += tree.predict(valid.features.row(i)));
        trees.push(tree);

        let rce = valid_rce(&valid_margins)?;
        rce_trace.push(rce);
        loss_trace.push(mean_log_loss(&margins, train.labels));
        if rce > best_rce {
            best_rce = rce;
            best_iteration = round + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= params.early_stopping_rounds {
                break;
            }
        }
    }

    Ok(GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_order_version: train.features.version().to_owned(),
        n_features: train.features.n_features(),
        class: None,
        params: *params,
        base_margin,
        bin_edges: binned.mapper.edges,
        trees,
        best_iteration,
        valid_rce_trace: rce_trace,
        train_loss_trace: loss_trace,
    })
}

/// Probabilities for every row of `features`.
pub fn predict(model: &GbdtModel, features: &FeatureMatrix) -> Result<Vec<f64>, GbdtError> {
    if features.version() != model.feature_order_version {
        return Err(GbdtError::VersionMismatch {
            expected: model.feature_order_version.clone(),
            got: features.version().to_owned(),
        });
    }
    if features.n_features() != model.n_features {
        return Err(GbdtError::FeatureCount {
            expected: model.n_features,
            got: features.n_features(),
        });
    }
    Ok((0..features.n_rows())
        .into_par_iter()
        .map(|i| sigmoid(model.margin(features.row(i))))
        .collect())
}
