//! Pluggable nuisance learners with a uniform fit/predict interface over
//! regression and (multiclass) classification targets.
//!
//! A [`LearnerKind`] names a method family plus hyperparameters. The
//! family is resolved against the target type at fit time:
//!
//! - regression targets: `ols`, `ridge`, `lasso`, `random_forest`
//!   (regression trees), `boosted_trees` (squared-error boosting);
//! - binary targets: `logistic` stays logistic, tree families switch to
//!   their classification counterparts (class-proportion forests,
//!   logistic-loss boosting), and the linear families fit the 0/1 values
//!   as a regression (linear probability), which keeps partialling-out
//!   exactly linear when a linear learner is requested everywhere;
//! - multiclass targets: one model per treatment — `multinomial_softmax`
//!   for the linear families, class-proportion forests, or one-vs-rest
//!   boosting with probability renormalization.
//!
//! All learners are deterministic given `(data, seed)`. Tree ensembles
//! draw every random choice from seeds derived per tree index after
//! canonicalizing the training rows, so fitted models do not depend on
//! the row order of the training data.
//!
//! Probability outputs live on the simplex (multiclass rows sum to one);
//! clipping to `[eps, 1-eps]` for IPW-style denominators is a separate
//! step ([`clip_probabilities`]) applied by the estimation pipelines,
//! default `eps = 0.01`.

mod boosting;
mod linear;
mod logistic;
mod tree;

pub use boosting::BoostParams;
pub use linear::{fit_lasso_model, LinearModel};
pub use tree::ForestParams;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default probability clip for propensity-style denominators.
pub const DEFAULT_CLIP_EPS: f64 = 0.01;

/// Method family and hyperparameters of a nuisance learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LearnerKind {
    Ols,
    /// `lambda = None` selects the penalty by fixed 5-fold CV over a
    /// 20-point log grid inside each training fold.
    Ridge { lambda: Option<f64> },
    Lasso { lambda: Option<f64> },
    Logistic,
    MultinomialSoftmax,
    RandomForest(ForestParams),
    BoostedTrees(BoostParams),
}

impl LearnerKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerKind::Ridge { lambda } | LearnerKind::Lasso { lambda } => {
                if let Some(l) = lambda {
                    if !l.is_finite() || *l < 0.0 {
                        return Err(Error::Invalid("penalty lambda must be >= 0".into()));
                    }
                }
            }
            LearnerKind::RandomForest(p) => p.validate()?,
            LearnerKind::BoostedTrees(p) => p.validate()?,
            _ => {}
        }
        Ok(())
    }

    /// Short identifier used in reports and configs.
    pub fn id(&self) -> String {
        match self {
            LearnerKind::Ols => "ols".into(),
            LearnerKind::Ridge { lambda } => match lambda {
                Some(l) => format!("ridge({})", l),
                None => "ridge(cv)".into(),
            },
            LearnerKind::Lasso { lambda } => match lambda {
                Some(l) => format!("lasso({})", l),
                None => "lasso(cv)".into(),
            },
            LearnerKind::Logistic => "logistic".into(),
            LearnerKind::MultinomialSoftmax => "multinomial_softmax".into(),
            LearnerKind::RandomForest(p) => format!(
                "random_forest(n_trees={},max_depth={},min_leaf={},mtry={})",
                p.n_trees,
                p.max_depth,
                p.min_leaf,
                p.mtry.map(|m| m.to_string()).unwrap_or_else(|| "auto".into())
            ),
            LearnerKind::BoostedTrees(p) => format!(
                "boosted_trees(n_trees={},lr={},max_depth={},min_leaf={},subsample={})",
                p.n_trees, p.learning_rate, p.max_depth, p.min_leaf, p.subsample
            ),
        }
    }
}

/// What a fitted model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Regression,
    BinaryProb,
    MulticlassProb(usize),
}

/// Training target.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Regression(ArrayView1<'a, f64>),
    /// 0/1 values.
    Binary(ArrayView1<'a, f64>),
    Multiclass { labels: &'a [usize], n_classes: usize },
}

impl<'a> Target<'a> {
    pub fn len(&self) -> usize {
        match self {
            Target::Regression(v) | Target::Binary(v) => v.len(),
            Target::Multiclass { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The same target restricted to `rows`.
    pub fn subset<'b>(&self, rows: &[usize], buf: &'b mut TargetBuf) -> Target<'b> {
        match self {
            Target::Regression(v) => {
                buf.values = rows.iter().map(|&i| v[i]).collect();
                Target::Regression(ArrayView1::from(&buf.values))
            }
            Target::Binary(v) => {
                buf.values = rows.iter().map(|&i| v[i]).collect();
                Target::Binary(ArrayView1::from(&buf.values))
            }
            Target::Multiclass { labels, n_classes } => {
                buf.labels = rows.iter().map(|&i| labels[i]).collect();
                Target::Multiclass { labels: &buf.labels, n_classes: *n_classes }
            }
        }
    }
}

/// Owned storage backing a row-subset of a target.
#[derive(Debug, Default)]
pub struct TargetBuf {
    values: Vec<f64>,
    labels: Vec<usize>,
}

/// Model output on a batch of rows.
#[derive(Debug, Clone)]
pub enum Prediction {
    Regression(Array1<f64>),
    BinaryProb(Array1<f64>),
    /// Rows on the probability simplex.
    MulticlassProb(Array2<f64>),
}

impl Prediction {
    pub fn n_rows(&self) -> usize {
        match self {
            Prediction::Regression(v) | Prediction::BinaryProb(v) => v.len(),
            Prediction::MulticlassProb(m) => m.nrows(),
        }
    }

    /// Single prediction value per row: the regression value or the
    /// probability of class 1. Errors for multiclass output.
    pub fn into_vector(self) -> Result<Array1<f64>> {
        match self {
            Prediction::Regression(v) | Prediction::BinaryProb(v) => Ok(v),
            Prediction::MulticlassProb(_) => {
                Err(Error::Learner("expected scalar predictions, got multiclass".into()))
            }
        }
    }

    pub fn into_matrix(self) -> Result<Array2<f64>> {
        match self {
            Prediction::MulticlassProb(m) => Ok(m),
            _ => Err(Error::Learner("expected multiclass predictions".into())),
        }
    }
}

/// Clips probabilities to `[eps, 1-eps]`; multiclass rows are
/// renormalized back onto the simplex afterwards.
pub fn clip_probabilities(pred: &mut Prediction, eps: f64) {
    match pred {
        Prediction::Regression(_) => {}
        Prediction::BinaryProb(v) => {
            v.mapv_inplace(|p| p.clamp(eps, 1.0 - eps));
        }
        Prediction::MulticlassProb(m) => {
            for mut row in m.rows_mut() {
                let mut total = 0.0;
                for p in row.iter_mut() {
                    *p = p.clamp(eps, 1.0 - eps);
                    total += *p;
                }
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
        }
    }
}

/// Uniform fit interface, implemented by [`LearnerKind`] and by
/// test-only learners.
pub trait Learner: Send + Sync {
    fn fit(&self, x: ArrayView2<f64>, target: Target<'_>, seed: u64) -> Result<Box<dyn Fitted>>;

    fn id(&self) -> String;
}

/// A fitted nuisance model.
pub trait Fitted: Send + Sync {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction>;

    fn target_kind(&self) -> TargetKind;

    /// In-sample training loss (MSE or mean log-loss).
    fn train_loss(&self) -> f64;
}

fn validate_features(x: ArrayView2<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Learner("features contain non-finite values".into()));
    }
    Ok(())
}

fn validate_fit_inputs(x: ArrayView2<f64>, target: &Target<'_>) -> Result<()> {
    if x.nrows() != target.len() {
        return Err(Error::Learner(format!(
            "feature rows ({}) and target length ({}) differ",
            x.nrows(),
            target.len()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::Learner("need at least 2 training rows".into()));
    }
    validate_features(x)?;
    match target {
        Target::Regression(v) => {
            if v.iter().any(|t| !t.is_finite()) {
                return Err(Error::Learner("regression target contains non-finite values".into()));
            }
        }
        Target::Binary(v) => {
            if v.iter().any(|&t| t != 0.0 && t != 1.0) {
                return Err(Error::Learner("binary target must contain only 0/1".into()));
            }
            let ones = v.iter().filter(|&&t| t == 1.0).count();
            if ones == 0 || ones == v.len() {
                return Err(Error::Learner("binary target is constant in training data".into()));
            }
        }
        Target::Multiclass { labels, n_classes } => {
            if *n_classes < 2 {
                return Err(Error::Learner("multiclass target needs >= 2 classes".into()));
            }
            let mut seen = vec![false; *n_classes];
            for &l in labels.iter() {
                if l >= *n_classes {
                    return Err(Error::Learner(format!(
                        "class label {} out of range 0..{}",
                        l,
                        n_classes - 1
                    )));
                }
                seen[l] = true;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::Learner(format!(
                    "class {} absent from training data",
                    missing
                )));
            }
        }
    }
    Ok(())
}

impl Learner for LearnerKind {
    fn fit(&self, x: ArrayView2<f64>, target: Target<'_>, seed: u64) -> Result<Box<dyn Fitted>> {
        self.validate()?;
        validate_fit_inputs(x, &target)?;
        match (self, &target) {
            // linear families on a regression target
            (LearnerKind::Ols, Target::Regression(y)) => linear::fit_ols(x, *y),
            (LearnerKind::Ridge { lambda }, Target::Regression(y)) => {
                linear::fit_ridge(x, *y, *lambda)
            }
            (LearnerKind::Lasso { lambda }, Target::Regression(y)) => {
                linear::fit_lasso(x, *y, *lambda)
            }

            // linear families on a binary target: linear probability fit
            (LearnerKind::Ols, Target::Binary(y)) => linear::fit_ols(x, *y),
            (LearnerKind::Ridge { lambda }, Target::Binary(y)) => linear::fit_ridge(x, *y, *lambda),
            (LearnerKind::Lasso { lambda }, Target::Binary(y)) => linear::fit_lasso(x, *y, *lambda),

            (LearnerKind::Logistic, Target::Binary(y)) => logistic::fit_logistic(x, *y),
            (LearnerKind::MultinomialSoftmax, Target::Binary(y)) => logistic::fit_logistic(x, *y),

            // multiclass: a single multi-output classifier
            (
                LearnerKind::Ols
                | LearnerKind::Ridge { .. }
                | LearnerKind::Lasso { .. }
                | LearnerKind::Logistic
                | LearnerKind::MultinomialSoftmax,
                Target::Multiclass { labels, n_classes },
            ) => logistic::fit_multinomial(x, labels, *n_classes),

            (LearnerKind::RandomForest(p), Target::Regression(y)) => {
                tree::fit_forest_regression(x, *y, p, seed)
            }
            (LearnerKind::RandomForest(p), Target::Binary(y)) => {
                let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
                tree::fit_forest_classification(x, &labels, 2, p, seed, true)
            }
            (LearnerKind::RandomForest(p), Target::Multiclass { labels, n_classes }) => {
                tree::fit_forest_classification(x, labels, *n_classes, p, seed, false)
            }

            (LearnerKind::BoostedTrees(p), Target::Regression(y)) => {
                boosting::fit_boost_regression(x, *y, p, seed)
            }
            (LearnerKind::BoostedTrees(p), Target::Binary(y)) => {
                boosting::fit_boost_binary(x, *y, p, seed)
            }
            (LearnerKind::BoostedTrees(p), Target::Multiclass { labels, n_classes }) => {
                boosting::fit_boost_multiclass(x, labels, *n_classes, p, seed)
            }

            (LearnerKind::Logistic | LearnerKind::MultinomialSoftmax, Target::Regression(_)) => {
                Err(Error::Invalid(format!(
                    "{} requires a classification target",
                    self.id()
                )))
            }
        }
    }

    fn id(&self) -> String {
        LearnerKind::id(self)
    }
}

/// Convenience free function mirroring the trait method.
pub fn fit(
    kind: &LearnerKind,
    x: ArrayView2<f64>,
    target: Target<'_>,
    seed: u64,
) -> Result<Box<dyn Fitted>> {
    Learner::fit(kind, x, target, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hyperparameter_validation() {
        assert!(LearnerKind::Ridge { lambda: Some(-1.0) }.validate().is_err());
        assert!(LearnerKind::BoostedTrees(BoostParams {
            n_trees: 0,
            ..BoostParams::default()
        })
        .validate()
        .is_err());
        assert!(LearnerKind::BoostedTrees(BoostParams {
            learning_rate: 1.5,
            ..BoostParams::default()
        })
        .validate()
        .is_err());
        assert!(LearnerKind::RandomForest(ForestParams {
            n_trees: 0,
            ..ForestParams::default()
        })
        .validate()
        .is_err());
    }

    #[test]
    fn constant_classification_target_rejected() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![1.0, 1.0, 1.0];
        assert!(LearnerKind::Logistic.fit(x.view(), Target::Binary(y.view()), 0).is_err());
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let x = array![[1.0], [f64::NAN]];
        let y = array![1.0, 2.0];
        assert!(LearnerKind::Ols.fit(x.view(), Target::Regression(y.view()), 0).is_err());
    }

    #[test]
    fn clip_renormalizes_multiclass_rows() {
        let m = array![[0.0, 0.5, 0.5], [1.0, 0.0, 0.0]];
        let mut pred = Prediction::MulticlassProb(m);
        clip_probabilities(&mut pred, 0.01);
        let m = pred.into_matrix().unwrap();
        for row in m.rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-12);
            for &p in row.iter() {
                assert!(p > 0.0 && p < 1.0);
            }
        }
    }
}
