//! Double machine learning (DML) estimators for settings with several
//! simultaneously assigned treatments.
//!
//! Two estimation models are provided:
//!
//! - a partial linear model ([`plm`]) that estimates the coefficients of
//!   multiple treatments of mixed type (binary, categorical, continuous)
//!   together with treatment-interaction terms, using cross-fitted
//!   residualization ("partialling-out", Robinson 1988) and a
//!   Neyman-orthogonal score with sandwich variance;
//! - an interactive model ([`irm`]) that estimates pairwise average
//!   treatment effects between categories of a multi-valued regimen via
//!   the doubly robust AIPW estimator, with IPW and regression-adjusted
//!   baselines.
//!
//! Nuisance functions are fit with pluggable learners ([`learners`]):
//! linear and penalized regression, logistic/multinomial classification,
//! random forests, and gradient-boosted trees, all deterministic given a
//! seed. Cross-fitting ([`crossfit`]) guarantees that no observation is
//! predicted by a model trained on its own fold, following the framework
//! of Chernozhukov et al. (2018).
//!
//! [`simgen`] provides synthetic data generators with per-row oracle
//! records, and [`bench`] a replication harness (bias, rMSE, coverage)
//! over many simulated datasets. The `multidml` binary exposes the whole
//! pipeline on CSV files.

pub mod bench;
pub mod checks;
pub mod cli;
pub mod config;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod io;
pub mod irm;
pub mod learners;
pub mod linalg;
pub mod plm;
pub mod report;
pub mod seed;
pub mod simgen;

pub use error::{Error, Result};
