//! Decision-tree engine shared by the random forest and gradient
//! boosting learners, plus the random forest itself.
//!
//! Split search is exhaustive over the sorted unique midpoints of every
//! candidate feature; ties in gain are broken by (lowest feature index,
//! lowest threshold). Trees are grown level-wise over feature-presorted
//! row indices, so one presort per fit is reused by every tree.
//!
//! Determinism: training rows are first brought into a canonical order
//! (lexicographic by feature vector, then target), and all sampling
//! (bootstrap, subsampling, per-node feature draws) happens in that
//! canonical space with per-tree seeds derived from the tree index.
//! Fitted ensembles are therefore invariant to permutations of the
//! training rows.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Fitted, Prediction, TargetKind};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

const SLOT_NONE: u32 = u32::MAX;

/// Random forest hyperparameters. `mtry = None` uses `max(1, p/3)`
/// features per split for regression and `max(1, floor(sqrt(p)))` for
/// classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub mtry: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 10, min_leaf: 5, mtry: None }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::Invalid("random_forest needs n_trees >= 1".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::Invalid("random_forest needs max_depth >= 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::Invalid("random_forest needs min_leaf >= 1".into()));
        }
        if let Some(m) = self.mtry {
            if m < 1 {
                return Err(Error::Invalid("mtry must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Training matrix with canonical row order and per-feature presorted
/// row indices.
pub(super) struct TreeData {
    /// Feature-major copy of the training matrix.
    pub cols: Vec<Vec<f64>>,
    /// canonical position -> original row index
    pub canon_order: Vec<u32>,
    /// Per feature: original row indices ordered by (value, canonical
    /// position).
    pub presorted: Vec<Vec<u32>>,
    pub n_rows: usize,
}

impl TreeData {
    /// `target_key` breaks ties between rows with identical features so
    /// the canonical order is well defined up to interchangeable rows.
    pub fn new(x: ArrayView2<f64>, target_key: &[f64]) -> Self {
        let n = x.nrows();
        let p = x.ncols();
        let cols: Vec<Vec<f64>> =
            (0..p).map(|j| x.column(j).iter().copied().collect()).collect();

        let mut canon_order: Vec<u32> = (0..n as u32).collect();
        canon_order.sort_unstable_by(|&a, &b| {
            let (ia, ib) = (a as usize, b as usize);
            for col in &cols {
                match col[ia].partial_cmp(&col[ib]).expect("finite features") {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
            target_key[ia].partial_cmp(&target_key[ib]).expect("finite target")
        });
        let mut canon_pos = vec![0u32; n];
        for (pos, &row) in canon_order.iter().enumerate() {
            canon_pos[row as usize] = pos as u32;
        }

        let presorted: Vec<Vec<u32>> = (0..p)
            .map(|j| {
                let col = &cols[j];
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_unstable_by(|&a, &b| {
                    col[a as usize]
                        .partial_cmp(&col[b as usize])
                        .expect("finite features")
                        .then(canon_pos[a as usize].cmp(&canon_pos[b as usize]))
                });
                idx
            })
            .collect();

        Self { cols, canon_order, presorted, n_rows: n }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

/// Per-row split statistics.
pub(super) enum TreeTarget<'a> {
    /// First-order values (and optional second-order) per row; split
    /// gain is sum(g)^2 / sum(w) per side.
    Gradient { grad: &'a [f64], hess: Option<&'a [f64]> },
    /// Class labels; gain is sum_k count_k^2 / sum(w) per side
    /// (equivalent to weighted Gini impurity decrease).
    Classes { labels: &'a [usize], n_classes: usize },
}


/// Monomorphized accumulate/score kernel for the grow loop.
trait StatKernel {
    fn stat_dim(&self) -> usize;
    fn accumulate(&self, row: usize, w: f64, stats: &mut [f64]);
    fn score(&self, stats: &[f64], w: f64) -> f64;
}

struct GradKernel<'a> {
    grad: &'a [f64],
}

impl StatKernel for GradKernel<'_> {
    #[inline(always)]
    fn stat_dim(&self) -> usize {
        1
    }
    #[inline(always)]
    fn accumulate(&self, row: usize, w: f64, stats: &mut [f64]) {
        stats[0] += w * self.grad[row];
    }
    #[inline(always)]
    fn score(&self, stats: &[f64], w: f64) -> f64 {
        if w <= 0.0 {
            0.0
        } else {
            stats[0] * stats[0] / w
        }
    }
}

struct GradHessKernel<'a> {
    grad: &'a [f64],
    hess: &'a [f64],
}

impl StatKernel for GradHessKernel<'_> {
    #[inline(always)]
    fn stat_dim(&self) -> usize {
        2
    }
    #[inline(always)]
    fn accumulate(&self, row: usize, w: f64, stats: &mut [f64]) {
        stats[0] += w * self.grad[row];
        stats[1] += w * self.hess[row];
    }
    #[inline(always)]
    fn score(&self, stats: &[f64], w: f64) -> f64 {
        if w <= 0.0 {
            0.0
        } else {
            stats[0] * stats[0] / w
        }
    }
}

struct ClassKernel<'a> {
    labels: &'a [usize],
    n_classes: usize,
}

impl StatKernel for ClassKernel<'_> {
    #[inline(always)]
    fn stat_dim(&self) -> usize {
        self.n_classes
    }
    #[inline(always)]
    fn accumulate(&self, row: usize, w: f64, stats: &mut [f64]) {
        stats[self.labels[row]] += w;
    }
    #[inline(always)]
    fn score(&self, stats: &[f64], w: f64) -> f64 {
        if w <= 0.0 {
            0.0
        } else {
            stats.iter().map(|s| s * s).sum::<f64>() / w
        }
    }
}

/// How leaf statistics become output values.
pub(super) enum LeafMode {
    /// `sum(w*g) / sum(w)` (squared-error optimum).
    MeanGradient,
    /// `sum(w*g) / sum(w*h)` (one Newton step, for logistic loss).
    NewtonStep,
    /// `count_k / sum(w)` per class.
    ClassDistribution,
}

impl LeafMode {
    fn values(&self, w: f64, stats: &[f64]) -> Vec<f64> {
        match self {
            LeafMode::MeanGradient => vec![if w > 0.0 { stats[0] / w } else { 0.0 }],
            LeafMode::NewtonStep => vec![stats[0] / stats[1].max(1e-12)],
            LeafMode::ClassDistribution => {
                if w > 0.0 {
                    stats.iter().map(|s| s / w).collect()
                } else {
                    vec![0.0; stats.len()]
                }
            }
        }
    }

    fn dim(&self, stat_dim: usize) -> usize {
        match self {
            LeafMode::MeanGradient | LeafMode::NewtonStep => 1,
            LeafMode::ClassDistribution => stat_dim,
        }
    }
}

pub(super) struct GrowSettings {
    pub max_depth: usize,
    pub min_leaf: f64,
    /// Features considered per node; `== p` disables feature sampling
    /// (and consumes no randomness).
    pub mtry: usize,
}

#[derive(Debug, Clone)]
pub(super) struct Tree {
    feature: Vec<i32>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    leaf_offset: Vec<u32>,
    values: Vec<f64>,
    m_out: usize,
}

impl Tree {
    #[inline]
    pub fn leaf_for_row(&self, row: ArrayView1<f64>) -> &[f64] {
        let mut node = 0usize;
        while self.feature[node] >= 0 {
            let f = self.feature[node] as usize;
            node = if row[f] <= self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
        let off = self.leaf_offset[node] as usize;
        &self.values[off..off + self.m_out]
    }

    /// Leaf lookup against the feature-major training storage.
    #[inline]
    pub fn leaf_for_training_row(&self, cols: &[Vec<f64>], i: usize) -> &[f64] {
        let mut node = 0usize;
        while self.feature[node] >= 0 {
            let f = self.feature[node] as usize;
            node = if cols[f][i] <= self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
        let off = self.leaf_offset[node] as usize;
        &self.values[off..off + self.m_out]
    }
}

struct ActiveNode {
    node_id: usize,
    w_total: f64,
    stats: Vec<f64>,
}

struct BestSplit {
    gain: f64,
    feature: i32,
    threshold: f64,
    w_left: f64,
    stats_left: Vec<f64>,
}

pub(super) fn grow_tree(
    data: &TreeData,
    w: &[f64],
    target: &TreeTarget<'_>,
    settings: &GrowSettings,
    leaf_mode: &LeafMode,
    rng: &mut ChaCha12Rng,
) -> Tree {
    match target {
        TreeTarget::Gradient { grad, hess: None } => {
            grow_tree_with(data, w, &GradKernel { grad }, settings, leaf_mode, rng)
        }
        TreeTarget::Gradient { grad, hess: Some(hess) } => {
            grow_tree_with(data, w, &GradHessKernel { grad, hess }, settings, leaf_mode, rng)
        }
        TreeTarget::Classes { labels, n_classes } => grow_tree_with(
            data,
            w,
            &ClassKernel { labels, n_classes: *n_classes },
            settings,
            leaf_mode,
            rng,
        ),
    }
}

fn grow_tree_with<K: StatKernel>(
    data: &TreeData,
    w: &[f64],
    target: &K,
    settings: &GrowSettings,
    leaf_mode: &LeafMode,
    rng: &mut ChaCha12Rng,
) -> Tree {
    let n = data.n_rows;
    let p = data.n_features();
    let m = target.stat_dim();
    let m_out = leaf_mode.dim(m);

    let mut feature_v: Vec<i32> = vec![-1];
    let mut threshold_v: Vec<f64> = vec![0.0];
    let mut left_v: Vec<u32> = vec![0];
    let mut right_v: Vec<u32> = vec![0];
    let mut leaf_offset_v: Vec<u32> = vec![0];
    let mut values: Vec<f64> = Vec::new();

    // root statistics, accumulated in canonical order so sums do not
    // depend on the input row order
    let mut root_stats = vec![0.0; m];
    let mut root_w = 0.0;
    let mut node_slot: Vec<u32> = vec![SLOT_NONE; n];
    for &pos in &data.canon_order {
        let i = pos as usize;
        if w[i] > 0.0 {
            node_slot[i] = 0;
            root_w += w[i];
            target.accumulate(i, w[i], &mut root_stats);
        }
    }

    let finalize_leaf =
        |values: &mut Vec<f64>, leaf_offset_v: &mut Vec<u32>, node_id: usize, w: f64, stats: &[f64]| {
            leaf_offset_v[node_id] = values.len() as u32;
            values.extend(leaf_mode.values(w, stats));
        };

    let mut active = vec![ActiveNode { node_id: 0, w_total: root_w, stats: root_stats }];
    let mut scratch_features: Vec<usize> = (0..p).collect();

    for _depth in 0..settings.max_depth {
        if active.is_empty() {
            break;
        }
        let n_active = active.len();

        // feature masks per active slot when subsampling features
        let use_masks = settings.mtry < p;
        let mut masks = vec![true; if use_masks { n_active * p } else { 0 }];
        if use_masks {
            for slot in 0..n_active {
                let mask = &mut masks[slot * p..(slot + 1) * p];
                mask.iter_mut().for_each(|b| *b = false);
                for j in 0..settings.mtry {
                    let pick = rng.gen_range(j..p);
                    scratch_features.swap(j, pick);
                    mask[scratch_features[j]] = true;
                }
            }
        }

        let mut best: Vec<BestSplit> = (0..n_active)
            .map(|_| BestSplit {
                gain: 0.0,
                feature: -1,
                threshold: 0.0,
                w_left: 0.0,
                stats_left: vec![0.0; m],
            })
            .collect();

        let mut run_w = vec![0.0f64; n_active];
        let mut run_stats = vec![0.0f64; n_active * m];
        let mut prev_val = vec![0.0f64; n_active];
        let mut prev_set = vec![false; n_active];
        let parent_score: Vec<f64> =
            active.iter().map(|nd| target.score(&nd.stats, nd.w_total)).collect();
        let min_gain: Vec<f64> =
            parent_score.iter().map(|ps| 1e-9 * ps.abs() + 1e-12).collect();
        let mut sr_buf = vec![0.0f64; m];

        for f in 0..p {
            run_w.iter_mut().for_each(|v| *v = 0.0);
            run_stats.iter_mut().for_each(|v| *v = 0.0);
            prev_set.iter_mut().for_each(|v| *v = false);
            let col = &data.cols[f];
            for &iu in &data.presorted[f] {
                let i = iu as usize;
                let slot = node_slot[i];
                if slot == SLOT_NONE {
                    continue;
                }
                let slot = slot as usize;
                if use_masks && !masks[slot * p + f] {
                    continue;
                }
                let v = col[i];
                if prev_set[slot] && v > prev_val[slot] {
                    let node = &active[slot];
                    let wl = run_w[slot];
                    let wr = node.w_total - wl;
                    if wl >= settings.min_leaf && wr >= settings.min_leaf {
                        let sl = &run_stats[slot * m..slot * m + m];
                        for k in 0..m {
                            sr_buf[k] = node.stats[k] - sl[k];
                        }
                        let gain =
                            target.score(sl, wl) + target.score(&sr_buf, wr) - parent_score[slot];
                        if gain > min_gain[slot] && gain > best[slot].gain {
                            let mut t = 0.5 * (prev_val[slot] + v);
                            if t >= v {
                                t = prev_val[slot];
                            }
                            best[slot] = BestSplit {
                                gain,
                                feature: f as i32,
                                threshold: t,
                                w_left: wl,
                                stats_left: sl.to_vec(),
                            };
                        }
                    }
                }
                run_w[slot] += w[i];
                target.accumulate(i, w[i], &mut run_stats[slot * m..slot * m + m]);
                prev_val[slot] = v;
                prev_set[slot] = true;
            }
        }

        // apply splits; unsplit nodes become leaves
        let mut next_active: Vec<ActiveNode> = Vec::new();
        let mut child_slots: Vec<(u32, u32)> = vec![(SLOT_NONE, SLOT_NONE); n_active];
        for slot in 0..n_active {
            let b = &best[slot];
            let node = &active[slot];
            if b.feature < 0 {
                finalize_leaf(&mut values, &mut leaf_offset_v, node.node_id, node.w_total, &node.stats);
                continue;
            }
            let left_id = feature_v.len();
            let right_id = left_id + 1;
            for _ in 0..2 {
                feature_v.push(-1);
                threshold_v.push(0.0);
                left_v.push(0);
                right_v.push(0);
                leaf_offset_v.push(0);
            }
            feature_v[node.node_id] = b.feature;
            threshold_v[node.node_id] = b.threshold;
            left_v[node.node_id] = left_id as u32;
            right_v[node.node_id] = right_id as u32;

            let mut stats_right = vec![0.0; m];
            for k in 0..m {
                stats_right[k] = node.stats[k] - b.stats_left[k];
            }
            child_slots[slot] = (next_active.len() as u32, next_active.len() as u32 + 1);
            next_active.push(ActiveNode {
                node_id: left_id,
                w_total: b.w_left,
                stats: b.stats_left.clone(),
            });
            next_active.push(ActiveNode {
                node_id: right_id,
                w_total: node.w_total - b.w_left,
                stats: stats_right,
            });
        }

        // reassign rows to child slots
        for i in 0..n {
            let slot = node_slot[i];
            if slot == SLOT_NONE {
                continue;
            }
            let slot = slot as usize;
            let (ls, rs) = child_slots[slot];
            if ls == SLOT_NONE {
                node_slot[i] = SLOT_NONE;
            } else {
                let b = &best[slot];
                node_slot[i] = if data.cols[b.feature as usize][i] <= b.threshold {
                    ls
                } else {
                    rs
                };
            }
        }
        active = next_active;
    }

    // depth limit reached: remaining nodes are leaves
    for node in &active {
        finalize_leaf(&mut values, &mut leaf_offset_v, node.node_id, node.w_total, &node.stats);
    }

    Tree {
        feature: feature_v,
        threshold: threshold_v,
        left: left_v,
        right: right_v,
        leaf_offset: leaf_offset_v,
        values,
        m_out,
    }
}

/// Bootstrap multiplicities drawn over canonical positions.
pub(super) fn bootstrap_weights(data: &TreeData, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let n = data.n_rows;
    let mut w = vec![0.0; n];
    for _ in 0..n {
        let pos = rng.gen_range(0..n);
        w[data.canon_order[pos] as usize] += 1.0;
    }
    w
}

/// Row subsample without replacement over canonical positions;
/// `frac == 1.0` keeps all rows and consumes no randomness.
pub(super) fn subsample_weights(data: &TreeData, frac: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let n = data.n_rows;
    if frac >= 1.0 {
        return vec![1.0; n];
    }
    let k = ((frac * n as f64).round() as usize).clamp(1, n);
    let mut pos: Vec<u32> = (0..n as u32).collect();
    let mut w = vec![0.0; n];
    for j in 0..k {
        let pick = rng.gen_range(j..n);
        pos.swap(j, pick);
        w[data.canon_order[pos[j] as usize] as usize] = 1.0;
    }
    w
}

enum ForestOutput {
    Regression,
    Binary,
    Multiclass(usize),
}

struct ForestModel {
    trees: Vec<Tree>,
    n_features: usize,
    output: ForestOutput,
    train_loss: f64,
}

impl ForestModel {
    fn check_cols(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::Learner(format!(
                "prediction matrix has {} columns, model expects {}",
                x.ncols(),
                self.n_features
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Learner("prediction features contain non-finite values".into()));
        }
        Ok(())
    }

    fn mean_values(&self, x: ArrayView2<f64>, m_out: usize) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), m_out));
        for tree in &self.trees {
            for (i, row) in x.rows().into_iter().enumerate() {
                let vals = tree.leaf_for_row(row);
                for k in 0..m_out {
                    out[[i, k]] += vals[k];
                }
            }
        }
        out.mapv_inplace(|v| v / self.trees.len() as f64);
        out
    }
}

impl Fitted for ForestModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        self.check_cols(x)?;
        match self.output {
            ForestOutput::Regression => {
                let out = self.mean_values(x, 1);
                Ok(Prediction::Regression(out.column(0).to_owned()))
            }
            ForestOutput::Binary => {
                let out = self.mean_values(x, 2);
                Ok(Prediction::BinaryProb(out.column(1).to_owned()))
            }
            ForestOutput::Multiclass(c) => {
                let mut out = self.mean_values(x, c);
                // guard fp drift off the simplex
                for mut row in out.rows_mut() {
                    let s: f64 = row.sum();
                    if s > 0.0 {
                        row.mapv_inplace(|v| v / s);
                    }
                }
                Ok(Prediction::MulticlassProb(out))
            }
        }
    }

    fn target_kind(&self) -> TargetKind {
        match self.output {
            ForestOutput::Regression => TargetKind::Regression,
            ForestOutput::Binary => TargetKind::BinaryProb,
            ForestOutput::Multiclass(c) => TargetKind::MulticlassProb(c),
        }
    }

    fn train_loss(&self) -> f64 {
        self.train_loss
    }
}

pub(super) fn fit_forest_regression(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &ForestParams,
    seed: u64,
) -> Result<Box<dyn Fitted>> {
    let y_vec: Vec<f64> = y.iter().copied().collect();
    let data = TreeData::new(x, &y_vec);
    let p = data.n_features();
    let mtry = params.mtry.unwrap_or_else(|| (p / 3).max(1)).min(p);
    let settings =
        GrowSettings { max_depth: params.max_depth, min_leaf: params.min_leaf as f64, mtry };
    let target = TreeTarget::Gradient { grad: &y_vec, hess: None };

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, t as u64));
            let w = bootstrap_weights(&data, &mut rng);
            grow_tree(&data, &w, &target, &settings, &LeafMode::MeanGradient, &mut rng)
        })
        .collect();

    let mut model = ForestModel {
        trees,
        n_features: p,
        output: ForestOutput::Regression,
        train_loss: 0.0,
    };
    let fitted = model.mean_values(x, 1);
    model.train_loss = y
        .iter()
        .enumerate()
        .map(|(i, t)| (fitted[[i, 0]] - t) * (fitted[[i, 0]] - t))
        .sum::<f64>()
        / y.len() as f64;
    Ok(Box::new(model))
}

pub(super) fn fit_forest_classification(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
    binary: bool,
) -> Result<Box<dyn Fitted>> {
    let key: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let data = TreeData::new(x, &key);
    let p = data.n_features();
    let mtry = params.mtry.unwrap_or_else(|| (p as f64).sqrt().floor().max(1.0) as usize).min(p);
    let settings =
        GrowSettings { max_depth: params.max_depth, min_leaf: params.min_leaf as f64, mtry };
    let target = TreeTarget::Classes { labels, n_classes };

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, t as u64));
            let w = bootstrap_weights(&data, &mut rng);
            grow_tree(&data, &w, &target, &settings, &LeafMode::ClassDistribution, &mut rng)
        })
        .collect();

    let mut model = ForestModel {
        trees,
        n_features: p,
        output: if binary { ForestOutput::Binary } else { ForestOutput::Multiclass(n_classes) },
        train_loss: 0.0,
    };
    // mean log-loss on training data
    let probs = model.mean_values(x, n_classes);
    model.train_loss = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs[[i, l]].max(1e-12).ln())
        .sum::<f64>()
        / labels.len() as f64;
    Ok(Box::new(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn grid_x(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 2), |(i, j)| {
            if j == 0 {
                (i % 7) as f64
            } else {
                ((i * 3) % 11) as f64
            }
        })
    }

    #[test]
    fn constant_features_predict_training_mean() {
        let x = Array2::ones((30, 2));
        let y = Array1::from_shape_fn(30, |i| (i % 5) as f64);
        let params = ForestParams { n_trees: 200, ..ForestParams::default() };
        let model = fit_forest_regression(x.view(), y.view(), &params, 9).unwrap();
        let pred = model.predict(x.view()).unwrap().into_vector().unwrap();
        let mean = y.mean().unwrap();
        // no split possible; each tree returns its bootstrap mean
        for p in pred.iter() {
            assert!((p - mean).abs() < 0.5, "pred {} vs mean {}", p, mean);
        }
        let spread = pred.iter().fold(0.0f64, |a, &v| a.max((v - pred[0]).abs()));
        assert_eq!(spread, 0.0, "constant features must give a constant prediction");
    }

    #[test]
    fn forest_fits_step_function() {
        let n = 200;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / n as f64);
        let y = Array1::from_shape_fn(n, |i| if i < n / 2 { 0.0 } else { 4.0 });
        let params =
            ForestParams { n_trees: 50, max_depth: 4, min_leaf: 2, mtry: None };
        let model = fit_forest_regression(x.view(), y.view(), &params, 3).unwrap();
        let pred = model.predict(x.view()).unwrap().into_vector().unwrap();
        let err: f64 =
            pred.iter().zip(y.iter()).map(|(p, t)| (p - t).abs()).sum::<f64>() / n as f64;
        assert!(err < 0.2, "mean abs err {}", err);
    }

    #[test]
    fn determinism_and_row_permutation_invariance() {
        let n = 80;
        let x = grid_x(n);
        let y = Array1::from_shape_fn(n, |i| (x[[i, 0]] * 1.5 - x[[i, 1]]) + (i % 3) as f64 * 0.1);
        let params = ForestParams { n_trees: 20, max_depth: 4, min_leaf: 2, mtry: Some(1) };

        let m1 = fit_forest_regression(x.view(), y.view(), &params, 42).unwrap();
        let m2 = fit_forest_regression(x.view(), y.view(), &params, 42).unwrap();
        let q = array![[3.0, 7.0], [1.0, 2.0], [6.0, 0.0]];
        let p1 = m1.predict(q.view()).unwrap().into_vector().unwrap();
        let p2 = m2.predict(q.view()).unwrap().into_vector().unwrap();
        assert_eq!(p1, p2, "same seed must reproduce bit-identical predictions");

        // reversed row order, same seed
        let rev: Vec<usize> = (0..n).rev().collect();
        let xr = x.select(ndarray::Axis(0), &rev);
        let yr = y.select(ndarray::Axis(0), &rev);
        let m3 = fit_forest_regression(xr.view(), yr.view(), &params, 42).unwrap();
        let p3 = m3.predict(q.view()).unwrap().into_vector().unwrap();
        assert_eq!(p1, p3, "training row order must not matter");
    }

    #[test]
    fn classification_probabilities_lie_on_simplex() {
        let n = 90;
        let x = grid_x(n);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let params = ForestParams { n_trees: 25, max_depth: 5, min_leaf: 1, mtry: None };
        let model =
            fit_forest_classification(x.view(), &labels, 3, &params, 5, false).unwrap();
        let probs = model.predict(x.view()).unwrap().into_matrix().unwrap();
        for row in probs.rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}
