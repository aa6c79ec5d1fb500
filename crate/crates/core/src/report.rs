//! Estimate reports: point estimates, sandwich covariance, standard
//! errors, confidence intervals, and run diagnostics, serializable as
//! JSON.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result of one fold split of an estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub theta: Vec<f64>,
    pub se: Vec<f64>,
}

/// Coefficients and inference for one estimation run.
///
/// For the partial linear model, `theta` holds one coefficient per
/// encoded design column and `sigma` the full covariance matrix; for the
/// interactive model both have a single entry. Standard errors are
/// `sqrt(sigma_jj / n)` and `ci95` the usual normal intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub coef_names: Vec<String>,
    pub theta: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub ci95: Vec<[f64; 2]>,
    pub n_obs: usize,
    pub n_folds: usize,
    pub n_splits: usize,
    pub learner_ids: Vec<String>,
    /// Max absolute component of the empirical mean score at the
    /// solution.
    pub score_residual_norm: f64,
    /// Per-split estimates when `n_splits > 1` (median-aggregated into
    /// `theta`/`se`).
    pub per_split: Vec<SplitRecord>,
    pub warnings: Vec<String>,
}

impl EstimateReport {
    /// Builds a report from a coefficient vector and covariance matrix,
    /// deriving `se` and `ci95`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_covariance(
        coef_names: Vec<String>,
        theta: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        n_obs: usize,
        n_folds: usize,
        n_splits: usize,
        learner_ids: Vec<String>,
        score_residual_norm: f64,
    ) -> Result<Self> {
        let p = theta.len();
        if sigma.len() != p || sigma.iter().any(|r| r.len() != p) {
            return Err(Error::Estimation("covariance shape mismatch".into()));
        }
        let mut se = Vec::with_capacity(p);
        for (j, row) in sigma.iter().enumerate() {
            if row[j] < -1e-12 {
                return Err(Error::Estimation(format!(
                    "negative variance for coefficient {}",
                    coef_names.get(j).cloned().unwrap_or_else(|| j.to_string())
                )));
            }
            se.push((row[j].max(0.0) / n_obs as f64).sqrt());
        }
        let ci95 = theta
            .iter()
            .zip(se.iter())
            .map(|(&t, &s)| [t - 1.96 * s, t + 1.96 * s])
            .collect();
        Ok(Self {
            coef_names,
            theta,
            sigma,
            se,
            ci95,
            n_obs,
            n_folds,
            n_splits,
            learner_ids,
            score_residual_norm,
            per_split: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
