//! Gradient-boosted trees: squared-error boosting for regression,
//! logistic-loss boosting for binary targets (Newton leaf steps), and
//! one-vs-rest boosting with probability renormalization for multiclass
//! targets.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{
    grow_tree, subsample_weights, GrowSettings, LeafMode, Tree, TreeData, TreeTarget,
};
use super::{Fitted, Prediction, TargetKind};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// Boosting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Row fraction per iteration; 1.0 uses every row.
    pub subsample: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { n_trees: 60, learning_rate: 0.1, max_depth: 2, min_leaf: 40, subsample: 0.7 }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::Invalid("boosted_trees needs n_trees >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Invalid("learning_rate must lie in (0, 1]".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::Invalid("boosted_trees needs max_depth >= 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::Invalid("boosted_trees needs min_leaf >= 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Invalid("subsample must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn grow_settings(&self, p: usize) -> GrowSettings {
        GrowSettings { max_depth: self.max_depth, min_leaf: self.min_leaf as f64, mtry: p }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One additive stage sequence: trees scaled by the learning rate on
/// top of a constant initial score.
struct Stage {
    init: f64,
    trees: Vec<Tree>,
    learning_rate: f64,
}

impl Stage {
    fn score_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut s = self.init;
        for tree in &self.trees {
            s += self.learning_rate * tree.leaf_for_row(row)[0];
        }
        s
    }
}

fn check_prediction_input(x: ArrayView2<f64>, n_features: usize) -> Result<()> {
    if x.ncols() != n_features {
        return Err(Error::Learner(format!(
            "prediction matrix has {} columns, model expects {}",
            x.ncols(),
            n_features
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Learner("prediction features contain non-finite values".into()));
    }
    Ok(())
}

struct BoostRegressor {
    stage: Stage,
    n_features: usize,
    train_loss: f64,
}

impl Fitted for BoostRegressor {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        check_prediction_input(x, self.n_features)?;
        let out = Array1::from_shape_fn(x.nrows(), |i| self.stage.score_row(x.row(i)));
        Ok(Prediction::Regression(out))
    }

    fn target_kind(&self) -> TargetKind {
        TargetKind::Regression
    }

    fn train_loss(&self) -> f64 {
        self.train_loss
    }
}

/// Fits one squared-error boosting stage and returns it with the final
/// training scores.
fn fit_regression_stage(
    data: &TreeData,
    y: &[f64],
    params: &BoostParams,
    seed: u64,
) -> (Stage, Vec<f64>) {
    let n = y.len();
    // canonical-order sum keeps the intercept independent of row order
    let init = data.canon_order.iter().map(|&i| y[i as usize]).sum::<f64>() / n as f64;
    let mut scores = vec![init; n];
    let mut grad = vec![0.0; n];
    let settings = params.grow_settings(data.n_features());
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        for i in 0..n {
            grad[i] = y[i] - scores[i];
        }
        let w = subsample_weights(data, params.subsample, &mut rng);
        let tree = grow_tree(
            data,
            &w,
            &TreeTarget::Gradient { grad: &grad, hess: None },
            &settings,
            &LeafMode::MeanGradient,
            &mut rng,
        );
        for i in 0..n {
            scores[i] += params.learning_rate * tree.leaf_for_training_row(&data.cols, i)[0];
        }
        trees.push(tree);
    }
    (Stage { init, trees, learning_rate: params.learning_rate }, scores)
}

struct BoostBinary {
    stage: Stage,
    n_features: usize,
    train_loss: f64,
}

impl Fitted for BoostBinary {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        check_prediction_input(x, self.n_features)?;
        let out = Array1::from_shape_fn(x.nrows(), |i| sigmoid(self.stage.score_row(x.row(i))));
        Ok(Prediction::BinaryProb(out))
    }

    fn target_kind(&self) -> TargetKind {
        TargetKind::BinaryProb
    }

    fn train_loss(&self) -> f64 {
        self.train_loss
    }
}

/// Fits one logistic-loss boosting stage; returns it with final scores.
fn fit_binary_stage(
    data: &TreeData,
    y: &[f64],
    params: &BoostParams,
    seed: u64,
) -> (Stage, Vec<f64>) {
    let n = y.len();
    let mean_y = data.canon_order.iter().map(|&i| y[i as usize]).sum::<f64>() / n as f64;
    let p0 = mean_y.clamp(1e-6, 1.0 - 1e-6);
    let init = (p0 / (1.0 - p0)).ln();
    let mut scores = vec![init; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let settings = params.grow_settings(data.n_features());
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = y[i] - p;
            hess[i] = (p * (1.0 - p)).max(1e-12);
        }
        let w = subsample_weights(data, params.subsample, &mut rng);
        let tree = grow_tree(
            data,
            &w,
            &TreeTarget::Gradient { grad: &grad, hess: Some(&hess) },
            &settings,
            &LeafMode::NewtonStep,
            &mut rng,
        );
        for i in 0..n {
            scores[i] += params.learning_rate * tree.leaf_for_training_row(&data.cols, i)[0];
        }
        trees.push(tree);
    }
    (Stage { init, trees, learning_rate: params.learning_rate }, scores)
}

pub(super) fn fit_boost_regression(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &BoostParams,
    seed: u64,
) -> Result<Box<dyn Fitted>> {
    let y_vec: Vec<f64> = y.iter().copied().collect();
    let data = TreeData::new(x, &y_vec);
    let (stage, scores) = fit_regression_stage(&data, &y_vec, params, seed);
    let train_loss = scores
        .iter()
        .zip(y_vec.iter())
        .map(|(s, t)| (s - t) * (s - t))
        .sum::<f64>()
        / y_vec.len() as f64;
    Ok(Box::new(BoostRegressor { stage, n_features: x.ncols(), train_loss }))
}

pub(super) fn fit_boost_binary(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &BoostParams,
    seed: u64,
) -> Result<Box<dyn Fitted>> {
    let y_vec: Vec<f64> = y.iter().copied().collect();
    let data = TreeData::new(x, &y_vec);
    let (stage, scores) = fit_binary_stage(&data, &y_vec, params, seed);
    let train_loss = scores
        .iter()
        .zip(y_vec.iter())
        .map(|(s, t)| {
            let p = sigmoid(*s).clamp(1e-12, 1.0 - 1e-12);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / y_vec.len() as f64;
    Ok(Box::new(BoostBinary { stage, n_features: x.ncols(), train_loss }))
}

struct BoostMulticlass {
    stages: Vec<Stage>,
    n_features: usize,
    train_loss: f64,
}

impl Fitted for BoostMulticlass {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        check_prediction_input(x, self.n_features)?;
        let c = self.stages.len();
        let mut out = Array2::zeros((x.nrows(), c));
        for i in 0..x.nrows() {
            let row = x.row(i);
            let mut total = 0.0;
            for (k, stage) in self.stages.iter().enumerate() {
                let p = sigmoid(stage.score_row(row));
                out[[i, k]] = p;
                total += p;
            }
            for k in 0..c {
                out[[i, k]] /= total;
            }
        }
        Ok(Prediction::MulticlassProb(out))
    }

    fn target_kind(&self) -> TargetKind {
        TargetKind::MulticlassProb(self.stages.len())
    }

    fn train_loss(&self) -> f64 {
        self.train_loss
    }
}

pub(super) fn fit_boost_multiclass(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    params: &BoostParams,
    seed: u64,
) -> Result<Box<dyn Fitted>> {
    let key: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let data = TreeData::new(x, &key);
    let stages: Vec<Stage> = (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let y_c: Vec<f64> =
                labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            let (stage, _) = fit_binary_stage(&data, &y_c, params, derive_seed(seed, 1000 + c as u64));
            stage
        })
        .collect();
    let mut model = BoostMulticlass { stages, n_features: x.ncols(), train_loss: 0.0 };
    let probs = model.predict(x)?.into_matrix()?;
    model.train_loss = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs[[i, l]].max(1e-12).ln())
        .sum::<f64>()
        / labels.len() as f64;
    Ok(Box::new(model))
}
