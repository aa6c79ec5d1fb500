//! Partial linear model with cross-fitted residualization
//! ("partialling-out").
//!
//! Every encoded treatment column, every whole interaction product, and
//! the outcome are residualized against the covariates with out-of-fold
//! predictions; the coefficient vector solves the residual-on-residual
//! regression, which is the empirical moment condition of the orthogonal
//! score
//!
//! `psi = [eps_A; eps_Ao] * (eps_Y - [eps_A; eps_Ao]' theta)`.
//!
//! Interaction residuals are always computed on the entire product term,
//! never as products of the factors' residuals. The sandwich covariance
//! `J^-1 E[psi psi'] J^-1'` uses the post-solution outcome residual.
//! Repeated fold splits are aggregated by coordinatewise medians of the
//! estimates and standard errors.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::crossfit::{crossfit_predict, crossfit_predict_salted, make_folds, FoldPlan};
use crate::data::{encode_treatments, ColumnSource, Dataset, EncodedDesign, InteractionSpec, TreatmentData};
use crate::error::{Error, Result};
use crate::learners::{clip_probabilities, LearnerKind, Target, DEFAULT_CLIP_EPS};
use crate::linalg;
use crate::report::{EstimateReport, SplitRecord};
use crate::seed::derive_seed;

/// Gram condition number beyond which the residual regression refuses
/// to solve.
pub const DEFAULT_CONDITION_THRESHOLD: f64 = 1e10;

/// Settings for one partial-linear-model estimation.
#[derive(Debug, Clone)]
pub struct PlmOptions {
    pub k: usize,
    pub treatment_learner: LearnerKind,
    pub outcome_learner: LearnerKind,
    pub clip_eps: f64,
    /// Optional binary/categorical treatment whose labels stratify the
    /// folds.
    pub stratify_treatment: Option<String>,
    pub condition_threshold: f64,
}

impl Default for PlmOptions {
    fn default() -> Self {
        Self {
            k: 5,
            treatment_learner: LearnerKind::BoostedTrees(Default::default()),
            outcome_learner: LearnerKind::BoostedTrees(Default::default()),
            clip_eps: DEFAULT_CLIP_EPS,
            stratify_treatment: None,
            condition_threshold: DEFAULT_CONDITION_THRESHOLD,
        }
    }
}

/// Cross-fitted residuals of treatments, whole interaction terms, and
/// the outcome.
#[derive(Debug, Clone)]
pub struct ResidualSet {
    /// n x q residuals of the encoded main-effect columns.
    pub eps_a: Array2<f64>,
    /// n x T' residuals of the interaction product columns.
    pub eps_ao: Array2<f64>,
    /// Outcome residual `y - E_hat[Y|X]`.
    pub eps_y: Array1<f64>,
    /// Labels of the stacked columns, main effects first.
    pub labels: Vec<String>,
}

impl ResidualSet {
    pub fn n_obs(&self) -> usize {
        self.eps_y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.eps_a.ncols() + self.eps_ao.ncols()
    }

    /// `[eps_A | eps_Ao]` as one n x (q+T') matrix.
    pub fn stacked(&self) -> Array2<f64> {
        let n = self.n_obs();
        let q = self.eps_a.ncols();
        let t = self.eps_ao.ncols();
        let mut out = Array2::zeros((n, q + t));
        out.slice_mut(ndarray::s![.., ..q]).assign(&self.eps_a);
        if t > 0 {
            out.slice_mut(ndarray::s![.., q..]).assign(&self.eps_ao);
        }
        out
    }
}

/// Empirical pieces of the linear score `psi = psi_a theta + psi_b`:
/// `J0_hat = mean(psi_a) = -mean([eps][eps]')` and `mean(psi_b)`.
#[derive(Debug, Clone)]
pub struct PlmScoreParts {
    pub j0_hat: Array2<f64>,
    pub psi_b_mean: Array1<f64>,
}

impl PlmScoreParts {
    pub fn from_residuals(res: &ResidualSet) -> Self {
        let r = res.stacked();
        let n = res.n_obs() as f64;
        let gram = r.t().dot(&r) / n;
        let psi_b_mean = r.t().dot(&res.eps_y) / n;
        Self { j0_hat: gram.mapv(|v| -v), psi_b_mean }
    }
}

fn constant_column_check(design: &EncodedDesign) -> Result<()> {
    for (j, meta) in design.meta.iter().enumerate() {
        let col = design.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::Data(format!(
                "design column '{}' is constant in sample and cannot be residualized",
                meta.label
            )));
        }
    }
    Ok(())
}

/// Cross-fitted residualization of every design column and the outcome.
///
/// Binary treatments are residualized as `A - p_hat(A|X)`, categorical
/// treatments with a single multiclass model per treatment
/// (`indicator(A = l) - p_hat(A = l|X)` for each non-reference level),
/// continuous treatments and whole interaction products as regression
/// targets.
pub fn residualize(
    ds: &Dataset,
    design: &EncodedDesign,
    plan: &FoldPlan,
    opts: &PlmOptions,
) -> Result<ResidualSet> {
    constant_column_check(design)?;
    let n = ds.n_obs();
    let q = design.n_treatment_cols;
    let t_cols = design.n_cols() - q;
    let mut eps_a = Array2::zeros((n, q));
    let mut eps_ao = Array2::zeros((n, t_cols));

    for (ti, treatment) in ds.treatments.iter().enumerate() {
        match &treatment.data {
            TreatmentData::Binary { values } => {
                let vals = Array1::from_shape_fn(n, |i| values[i] as f64);
                let mut pred = crossfit_predict_salted(
                    ds.x.view(),
                    Target::Binary(vals.view()),
                    &opts.treatment_learner,
                    plan,
                    1000 + ti as u64,
                )?;
                clip_probabilities(&mut pred, opts.clip_eps);
                let p = pred.into_vector()?;
                let j = column_of_treatment(design, ti)?;
                for i in 0..n {
                    eps_a[[i, j]] = design.columns[[i, j]] - p[i];
                }
            }
            TreatmentData::Continuous { .. } => {
                let j = column_of_treatment(design, ti)?;
                let col = design.column(j).to_owned();
                let pred = crossfit_predict_salted(
                    ds.x.view(),
                    Target::Regression(col.view()),
                    &opts.treatment_learner,
                    plan,
                    1000 + ti as u64,
                )?
                .into_vector()?;
                for i in 0..n {
                    eps_a[[i, j]] = col[i] - pred[i];
                }
            }
            TreatmentData::Categorical { values, n_levels, .. } => {
                let mut pred = crossfit_predict_salted(
                    ds.x.view(),
                    Target::Multiclass { labels: values, n_classes: *n_levels },
                    &opts.treatment_learner,
                    plan,
                    1000 + ti as u64,
                )?;
                clip_probabilities(&mut pred, opts.clip_eps);
                let probs = pred.into_matrix()?;
                for (j, meta) in design.meta.iter().enumerate().take(q) {
                    if let ColumnSource::Treatment { index, level: Some(level) } = meta.source {
                        if index == ti {
                            for i in 0..n {
                                eps_a[[i, j]] = design.columns[[i, j]] - probs[[i, level]];
                            }
                        }
                    }
                }
            }
        }
    }

    // whole interaction products as regression targets
    for j in q..design.n_cols() {
        let col = design.column(j).to_owned();
        let pred = crossfit_predict_salted(
            ds.x.view(),
            Target::Regression(col.view()),
            &opts.treatment_learner,
            plan,
            2000 + (j - q) as u64,
        )?
        .into_vector()?;
        for i in 0..n {
            eps_ao[[i, j - q]] = col[i] - pred[i];
        }
    }

    let l_hat = crossfit_predict_salted(
        ds.x.view(),
        Target::Regression(ds.y.view()),
        &opts.outcome_learner,
        plan,
        3000,
    )?
    .into_vector()?;
    let eps_y = &ds.y - &l_hat;

    if eps_a.iter().any(|v| !v.is_finite())
        || eps_ao.iter().any(|v| !v.is_finite())
        || eps_y.iter().any(|v| !v.is_finite())
    {
        return Err(Error::Estimation("non-finite residuals".into()));
    }

    Ok(ResidualSet { eps_a, eps_ao, eps_y, labels: design.labels() })
}

fn column_of_treatment(design: &EncodedDesign, ti: usize) -> Result<usize> {
    design
        .meta
        .iter()
        .position(|m| matches!(m.source, ColumnSource::Treatment { index, .. } if index == ti))
        .ok_or_else(|| Error::Estimation(format!("treatment {} missing from design", ti)))
}

/// Solves the residual regression `eps_Y ~ [eps_A; eps_Ao]` (no
/// intercept) by QR, refusing ill-conditioned systems.
pub fn solve_residual_regression(res: &ResidualSet) -> Result<Array1<f64>> {
    solve_residual_regression_with(res, DEFAULT_CONDITION_THRESHOLD)
}

pub fn solve_residual_regression_with(
    res: &ResidualSet,
    condition_threshold: f64,
) -> Result<Array1<f64>> {
    let r = res.stacked();
    let sv = linalg::singular_values(r.view());
    let (max_sv, min_sv) = (sv[0], sv[sv.len() - 1]);
    let cond = if min_sv > 0.0 { max_sv / min_sv } else { f64::INFINITY };
    if !cond.is_finite() || cond > condition_threshold {
        let v = linalg::smallest_right_singular_vector(r.view())?;
        let vmax = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let cols: Vec<String> = res
            .labels
            .iter()
            .zip(v.iter())
            .filter(|(_, &vi)| vi.abs() > 0.3 * vmax)
            .map(|(l, _)| l.clone())
            .collect();
        return Err(Error::Singular(format!(
            "residual regression ill-conditioned (condition number {:.3e}); near-collinear columns: {}",
            cond,
            cols.join(", ")
        )));
    }
    linalg::lstsq_qr(r.view(), res.eps_y.view())
}

/// Sandwich covariance of Proposition-style plug-in form:
/// `Sigma = G^-1 * mean[psi psi'] * G^-1` with `G = mean([eps][eps]')`
/// and `psi_i = [eps]_i * (eps_Y,i - [eps]_i' theta)`. Returns
/// `(Sigma, per-coefficient SEs)` with `se_j = sqrt(Sigma_jj / n)`.
pub fn plm_variance(res: &ResidualSet, theta: ArrayView1<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let r = res.stacked();
    let n = res.n_obs();
    let nf = n as f64;
    let d = r.ncols();

    let final_resid = &res.eps_y - &r.dot(&theta);
    let gram = r.t().dot(&r) / nf;
    let mut s = Array2::zeros((d, d));
    for i in 0..n {
        let e = final_resid[i];
        let row = r.row(i);
        for a in 0..d {
            let ra = row[a] * e;
            for b in 0..d {
                s[[a, b]] += ra * row[b] * e;
            }
        }
    }
    s.mapv_inplace(|v| v / nf);

    let g_inv = linalg::sym_inv_strict(gram.view(), 1e-13)
        .map_err(|_| Error::Singular("J0 is singular; variance undefined".into()))?;
    let mut sigma = g_inv.dot(&s).dot(&g_inv.t());
    // symmetrize against fp drift
    let sig_t = sigma.t().to_owned();
    sigma = (&sigma + &sig_t) / 2.0;
    let se = (0..d).map(|j| (sigma[[j, j]].max(0.0) / nf).sqrt()).collect();
    Ok((sigma, se))
}

fn stratification_labels(ds: &Dataset, name: &str) -> Result<Vec<usize>> {
    let t = ds.treatment(name)?;
    match &t.data {
        TreatmentData::Binary { values } => Ok(values.iter().map(|&v| v as usize).collect()),
        TreatmentData::Categorical { values, .. } => Ok(values.clone()),
        TreatmentData::Continuous { .. } => Err(Error::Invalid(format!(
            "cannot stratify folds on continuous treatment '{}'",
            name
        ))),
    }
}

/// Max abs component of the empirical mean score at `theta`.
fn score_residual_norm(res: &ResidualSet, theta: ArrayView1<f64>) -> f64 {
    let r = res.stacked();
    let final_resid = &res.eps_y - &r.dot(&theta);
    let mean_score = r.t().dot(&final_resid) / res.n_obs() as f64;
    mean_score.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// One full estimation pass: folds, residualization, residual
/// regression, sandwich variance.
pub fn estimate_plm(
    ds: &Dataset,
    interactions: &[InteractionSpec],
    opts: &PlmOptions,
    seed: u64,
) -> Result<EstimateReport> {
    let design = encode_treatments(ds, interactions)?;
    if ds.n_obs() <= design.n_cols() {
        return Err(Error::Invalid(format!(
            "{} observations cannot identify {} design columns",
            ds.n_obs(),
            design.n_cols()
        )));
    }
    let strat = match &opts.stratify_treatment {
        Some(name) => Some(stratification_labels(ds, name)?),
        None => None,
    };
    let plan = make_folds(ds.n_obs(), opts.k, seed, strat.as_deref())?;
    let res = residualize(ds, &design, &plan, opts)?;
    let theta = solve_residual_regression_with(&res, opts.condition_threshold)?;
    let (sigma, _se) = plm_variance(&res, theta.view())?;
    let norm = score_residual_norm(&res, theta.view());

    EstimateReport::from_covariance(
        res.labels.clone(),
        theta.to_vec(),
        sigma.rows().into_iter().map(|r| r.to_vec()).collect(),
        ds.n_obs(),
        opts.k,
        1,
        vec![
            format!("treatment:{}", opts.treatment_learner.id()),
            format!("outcome:{}", opts.outcome_learner.id()),
        ],
        norm,
    )
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Runs `estimate_plm` under `n_splits` distinct fold seeds and reports
/// the per-coefficient median estimate and median standard error.
///
/// Failed splits are excluded with a warning; the run fails when more
/// than 10% of splits fail. Cross-coefficient covariance is not
/// aggregated: the reported `sigma` is the diagonal matrix implied by
/// the median standard errors.
pub fn repeat_splits(
    ds: &Dataset,
    interactions: &[InteractionSpec],
    opts: &PlmOptions,
    n_splits: usize,
    base_seed: u64,
) -> Result<EstimateReport> {
    if n_splits < 1 {
        return Err(Error::Invalid("n_splits must be >= 1".into()));
    }
    if n_splits == 1 {
        return estimate_plm(ds, interactions, opts, derive_seed(base_seed, 0));
    }
    let runs: Vec<(u64, Result<EstimateReport>)> = (0..n_splits)
        .into_par_iter()
        .map(|s| {
            let split_seed = derive_seed(base_seed, s as u64);
            (split_seed, estimate_plm(ds, interactions, opts, split_seed))
        })
        .collect();

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut template: Option<EstimateReport> = None;
    for (split_seed, run) in runs {
        match run {
            Ok(rep) => {
                records.push(SplitRecord {
                    seed: split_seed,
                    theta: rep.theta.clone(),
                    se: rep.se.clone(),
                });
                if template.is_none() {
                    template = Some(rep);
                }
            }
            Err(e) => warnings.push(format!("split with seed {} failed: {}", split_seed, e)),
        }
    }
    let n_failed = warnings.len();
    if n_failed * 10 > n_splits {
        return Err(Error::Estimation(format!(
            "{} of {} splits failed (more than 10%)",
            n_failed, n_splits
        )));
    }
    let template = template
        .ok_or_else(|| Error::Estimation("all splits failed".into()))?;
    let d = template.theta.len();
    let mut theta = Vec::with_capacity(d);
    let mut se = Vec::with_capacity(d);
    for j in 0..d {
        let mut tj: Vec<f64> = records.iter().map(|r| r.theta[j]).collect();
        let mut sj: Vec<f64> = records.iter().map(|r| r.se[j]).collect();
        theta.push(median(&mut tj));
        se.push(median(&mut sj));
    }
    let n_obs = ds.n_obs();
    let sigma: Vec<Vec<f64>> = (0..d)
        .map(|a| (0..d).map(|b| if a == b { se[a] * se[a] * n_obs as f64 } else { 0.0 }).collect())
        .collect();
    let mut report = EstimateReport::from_covariance(
        template.coef_names.clone(),
        theta,
        sigma,
        n_obs,
        opts.k,
        n_splits,
        template.learner_ids.clone(),
        template.score_residual_norm,
    )?;
    report.per_split = records;
    report.warnings = warnings;
    Ok(report)
}

// ---------------------------------------------------------------------
// Orthogonality checking (finite-difference harness)
// ---------------------------------------------------------------------

/// Nuisance predictions entering the partial-linear score.
#[derive(Debug, Clone)]
pub struct PlmNuisances {
    /// n x q predictions for the main-effect columns.
    pub m_main: Array2<f64>,
    /// n x T' predictions for the interaction columns.
    pub m_inter: Array2<f64>,
    /// Outcome predictions `E_hat[Y|X]`.
    pub l_hat: Array1<f64>,
}

/// A perturbation direction applied to one nuisance component.
#[derive(Debug, Clone)]
pub enum PlmDirection {
    /// Shift `l(X)` by `t * delta`.
    OutcomeShift(Array1<f64>),
    /// Shift one main-effect prediction column by `t * delta`.
    MainShift { col: usize, delta: Array1<f64> },
    /// Shift one interaction prediction column by `t * delta`.
    InterShift { col: usize, delta: Array1<f64> },
}

/// Empirical mean of the orthogonal score at `eta_hat + t * delta`.
pub fn plm_mean_score(
    design: &EncodedDesign,
    y: ArrayView1<f64>,
    nuis: &PlmNuisances,
    theta: ArrayView1<f64>,
    dir: &PlmDirection,
    t: f64,
) -> Array1<f64> {
    let n = design.columns.nrows();
    let q = design.n_treatment_cols;
    let d = design.n_cols();
    let mut mean = Array1::<f64>::zeros(d);
    for i in 0..n {
        let mut eps = Vec::with_capacity(d);
        for j in 0..q {
            let mut m = nuis.m_main[[i, j]];
            if let PlmDirection::MainShift { col, delta } = dir {
                if *col == j {
                    m += t * delta[i];
                }
            }
            eps.push(design.columns[[i, j]] - m);
        }
        for j in q..d {
            let mut m = nuis.m_inter[[i, j - q]];
            if let PlmDirection::InterShift { col, delta } = dir {
                if *col == j - q {
                    m += t * delta[i];
                }
            }
            eps.push(design.columns[[i, j]] - m);
        }
        let mut l = nuis.l_hat[i];
        if let PlmDirection::OutcomeShift(delta) = dir {
            l += t * delta[i];
        }
        let lin: f64 = eps.iter().zip(theta.iter()).map(|(e, th)| e * th).sum();
        let resid = y[i] - l - lin;
        for j in 0..d {
            mean[j] += eps[j] * resid;
        }
    }
    mean.mapv(|v| v / n as f64)
}

/// Mean of the deliberately non-orthogonal score
/// `psi_naive = A * (Y - A' theta - l(X))`, same perturbation harness.
pub fn naive_mean_score(
    design: &EncodedDesign,
    y: ArrayView1<f64>,
    l_hat: ArrayView1<f64>,
    theta: ArrayView1<f64>,
    dir: &PlmDirection,
    t: f64,
) -> Array1<f64> {
    let n = design.columns.nrows();
    let d = design.n_cols();
    let mut mean = Array1::<f64>::zeros(d);
    for i in 0..n {
        let mut l = l_hat[i];
        if let PlmDirection::OutcomeShift(delta) = dir {
            l += t * delta[i];
        }
        let row = design.columns.row(i);
        let lin: f64 = row.iter().zip(theta.iter()).map(|(a, th)| a * th).sum();
        let resid = y[i] - lin - l;
        for j in 0..d {
            mean[j] += row[j] * resid;
        }
    }
    mean.mapv(|v| v / n as f64)
}

/// Central finite-difference derivative at `t = 0`, averaged over the
/// symmetric pairs of `t_grid` (positive half-grid).
pub fn fd_derivative_at_zero<F>(mean_score: F, t_grid: &[f64]) -> Array1<f64>
where
    F: Fn(f64) -> Array1<f64>,
{
    assert!(!t_grid.is_empty(), "empty t grid");
    let mut acc: Option<Array1<f64>> = None;
    for &h in t_grid {
        assert!(h > 0.0, "grid values must be positive half-steps");
        let diff = (mean_score(h) - mean_score(-h)) / (2.0 * h);
        acc = Some(match acc {
            Some(a) => a + diff,
            None => diff,
        });
    }
    acc.unwrap() / t_grid.len() as f64
}

/// Finite-difference derivative of the empirical mean orthogonal score
/// in direction `dir`, evaluated at `t = 0`.
pub fn check_orthogonality(
    design: &EncodedDesign,
    y: ArrayView1<f64>,
    nuis: &PlmNuisances,
    theta: ArrayView1<f64>,
    dir: &PlmDirection,
    t_grid: &[f64],
) -> Array1<f64> {
    fd_derivative_at_zero(|t| plm_mean_score(design, y, nuis, theta, dir, t), t_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TreatmentColumn;
    use ndarray::Axis;

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn residual_set(eps_a: Array2<f64>, eps_y: Array1<f64>) -> ResidualSet {
        let labels = (0..eps_a.ncols()).map(|j| format!("c{}", j)).collect();
        ResidualSet { eps_ao: Array2::zeros((eps_a.nrows(), 0)), eps_a, eps_y, labels }
    }

    #[test]
    fn exact_linear_residual_relation() {
        let n = 50;
        let mut st = 5u64;
        let eps_a = Array2::from_shape_fn((n, 1), |_| lcg(&mut st));
        let eps_y = eps_a.column(0).mapv(|v| 3.0 * v);
        let res = residual_set(eps_a, eps_y);
        let theta = solve_residual_regression(&res).unwrap();
        assert!((theta[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn moment_condition_holds_at_solution() {
        let n = 200;
        let mut st = 9u64;
        let eps_a = Array2::from_shape_fn((n, 3), |_| lcg(&mut st));
        let eps_y = Array1::from_shape_fn(n, |i| {
            2.0 * eps_a[[i, 0]] - eps_a[[i, 1]] + 0.3 * lcg(&mut st)
        });
        let res = residual_set(eps_a, eps_y);
        let theta = solve_residual_regression(&res).unwrap();
        let norm = score_residual_norm(&res, theta.view());
        let scale = res.eps_y.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
        assert!(norm <= 1e-10 * scale, "moment residual {}", norm);
    }

    #[test]
    fn collinear_columns_named_in_error() {
        let n = 40;
        let mut st = 3u64;
        let base = Array1::from_shape_fn(n, |_| lcg(&mut st));
        let mut eps_a = Array2::zeros((n, 2));
        for i in 0..n {
            eps_a[[i, 0]] = base[i];
            eps_a[[i, 1]] = 2.0 * base[i];
        }
        let eps_y = base.clone();
        let mut res = residual_set(eps_a, eps_y);
        res.labels = vec!["alpha".into(), "beta".into()];
        let err = solve_residual_regression(&res).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpha") && msg.contains("beta"), "{}", msg);
    }

    #[test]
    fn variance_matches_independent_sandwich() {
        // K=1 + ols: the variance must equal the HC0 sandwich of the
        // residual regression computed from scratch.
        let n = 300;
        let mut st = 21u64;
        let eps_a = Array2::from_shape_fn((n, 2), |_| lcg(&mut st));
        let eps_y = Array1::from_shape_fn(n, |i| {
            1.0 * eps_a[[i, 0]] + 0.5 * eps_a[[i, 1]] + 0.8 * lcg(&mut st)
        });
        let res = residual_set(eps_a.clone(), eps_y.clone());
        let theta = solve_residual_regression(&res).unwrap();
        let (_, se) = plm_variance(&res, theta.view()).unwrap();

        // independent HC0: (R'R)^-1 (sum r r' e^2) (R'R)^-1
        let rtr = eps_a.t().dot(&eps_a);
        let rtr_inv = crate::linalg::sym_inv_strict(rtr.view(), 1e-12).unwrap();
        let e = &eps_y - &eps_a.dot(&theta);
        let mut meat = Array2::zeros((2, 2));
        for i in 0..n {
            for a in 0..2 {
                for b in 0..2 {
                    meat[[a, b]] += eps_a[[i, a]] * eps_a[[i, b]] * e[i] * e[i];
                }
            }
        }
        let cov = rtr_inv.dot(&meat).dot(&rtr_inv);
        for j in 0..2 {
            let se_oracle = cov[[j, j]].sqrt();
            assert!(
                (se[j] - se_oracle).abs() < 1e-10 * se_oracle.max(1e-30),
                "se {} vs oracle {}",
                se[j],
                se_oracle
            );
        }
    }

    #[test]
    fn zero_outcome_noise_gives_zero_variance() {
        let n = 80;
        let mut st = 14u64;
        let eps_a = Array2::from_shape_fn((n, 2), |_| lcg(&mut st));
        let eps_y = Array1::from_shape_fn(n, |i| 2.0 * eps_a[[i, 0]] - 1.0 * eps_a[[i, 1]]);
        let res = residual_set(eps_a, eps_y);
        let theta = solve_residual_regression(&res).unwrap();
        let (sigma, se) = plm_variance(&res, theta.view()).unwrap();
        assert!(sigma.iter().all(|v| v.abs() < 1e-18));
        assert!(se.iter().all(|&s| s < 1e-10));
    }

    /// Small confounded data generator used by several tests.
    fn confounded_dataset(n: usize, seed: u64) -> (Dataset, Vec<InteractionSpec>) {
        let mut st = seed;
        let p = 3;
        let x = Array2::from_shape_fn((n, p), |_| lcg(&mut st));
        let mut a1 = Vec::with_capacity(n);
        let mut a2 = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let logit = 1.2 * x[[i, 0]] - 0.8 * x[[i, 1]];
            let p1 = 1.0 / (1.0 + (-logit).exp());
            let u = (lcg(&mut st) + 1.0) / 2.0;
            let t1 = if u < p1 { 1.0 } else { 0.0 };
            let t2 = 0.9 * x[[i, 1]] + 0.5 * x[[i, 2]] + 0.8 * lcg(&mut st);
            let g = 1.5 * x[[i, 0]] + 0.7 * x[[i, 2]];
            y.push(2.0 * t1 + 1.0 * t2 + 0.5 * t1 * t2 + g + 0.5 * lcg(&mut st));
            a1.push(t1 as u8);
            a2.push(t2);
        }
        let ds = Dataset::new(
            x,
            (0..p).map(|j| format!("x{}", j + 1)).collect(),
            Array1::from_vec(y),
            vec![TreatmentColumn::binary("a1", a1), TreatmentColumn::continuous("a2", a2)],
            None,
        )
        .unwrap();
        (ds, vec![InteractionSpec::new(vec!["a1", "a2"])])
    }

    #[test]
    fn fwl_equivalence_with_k1_ols() {
        let (ds, inter) = confounded_dataset(400, 77);
        let opts = PlmOptions {
            k: 1,
            treatment_learner: LearnerKind::Ols,
            outcome_learner: LearnerKind::Ols,
            ..Default::default()
        };
        let report = estimate_plm(&ds, &inter, &opts, 1).unwrap();

        // full OLS of y on [design, X, 1] via an independent QR solve
        let design = encode_treatments(&ds, &inter).unwrap();
        let n = ds.n_obs();
        let d = design.n_cols();
        let p = ds.x.ncols();
        let mut full = Array2::ones((n, d + p + 1));
        full.slice_mut(ndarray::s![.., ..d]).assign(&design.columns);
        full.slice_mut(ndarray::s![.., d..d + p]).assign(&ds.x);
        let beta = crate::linalg::lstsq_qr(full.view(), ds.y.view()).unwrap();
        for j in 0..d {
            let rel = (report.theta[j] - beta[j]).abs() / beta[j].abs().max(1e-12);
            assert!(rel < 1e-8, "coef {}: {} vs {}", j, report.theta[j], beta[j]);
        }
    }

    #[test]
    fn interaction_residual_is_not_product_of_residuals() {
        let (ds, inter) = confounded_dataset(600, 3131);
        let design = encode_treatments(&ds, &inter).unwrap();
        let plan = make_folds(ds.n_obs(), 2, 5, None).unwrap();
        let opts = PlmOptions {
            k: 2,
            treatment_learner: LearnerKind::Ols,
            outcome_learner: LearnerKind::Ols,
            ..Default::default()
        };
        let res = residualize(&ds, &design, &plan, &opts).unwrap();
        let q = design.n_treatment_cols;
        assert_eq!(q, 2);
        let mut max_gap = 0.0f64;
        for i in 0..ds.n_obs() {
            let prod = res.eps_a[[i, 0]] * res.eps_a[[i, 1]];
            max_gap = max_gap.max((res.eps_ao[[i, 0]] - prod).abs());
        }
        assert!(
            max_gap > 1e-2,
            "interaction residuals unexpectedly equal the residual product (gap {})",
            max_gap
        );
    }

    #[test]
    fn categorical_residuals_sum_to_zero_over_all_levels() {
        let n = 120;
        let mut st = 8u64;
        let x = Array2::from_shape_fn((n, 2), |_| lcg(&mut st));
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let z = 0.8 * x[[i, 0]];
            let u = (lcg(&mut st) + 1.0) / 2.0;
            let v = if u < 0.3 {
                0
            } else if u < 0.6 + 0.2 * z.tanh() {
                1
            } else {
                2
            };
            vals.push(v);
        }
        let y = Array1::from_shape_fn(n, |i| x[[i, 1]] + vals[i] as f64);
        let ds = Dataset::new(
            x,
            vec!["x1".into(), "x2".into()],
            y,
            vec![TreatmentColumn::categorical("a", vals.clone(), 3)],
            None,
        )
        .unwrap();
        let design = encode_treatments(&ds, &[]).unwrap();
        let plan = make_folds(n, 3, 4, None).unwrap();
        let opts = PlmOptions {
            k: 3,
            treatment_learner: LearnerKind::MultinomialSoftmax,
            outcome_learner: LearnerKind::Ols,
            ..Default::default()
        };
        let res = residualize(&ds, &design, &plan, &opts).unwrap();

        // recover the reference-level residual from the same crossfit
        let mut pred = crossfit_predict(
            ds.x.view(),
            Target::Multiclass { labels: &vals, n_classes: 3 },
            &opts.treatment_learner,
            &plan,
        )
        .unwrap();
        clip_probabilities(&mut pred, opts.clip_eps);
        let probs = pred.into_matrix().unwrap();
        for i in 0..n {
            let ref_resid = (if vals[i] == 0 { 1.0 } else { 0.0 }) - probs[[i, 0]];
            let total = ref_resid + res.eps_a[[i, 0]] + res.eps_a[[i, 1]];
            assert!(total.abs() < 1e-9, "row {} residual sum {}", i, total);
        }
    }

    #[test]
    fn permuting_rows_with_matching_folds_leaves_theta_unchanged() {
        let (ds, inter) = confounded_dataset(180, 99);
        let design = encode_treatments(&ds, &inter).unwrap();
        let plan = make_folds(ds.n_obs(), 3, 21, None).unwrap();
        let opts = PlmOptions {
            k: 3,
            treatment_learner: LearnerKind::Ols,
            outcome_learner: LearnerKind::Ols,
            ..Default::default()
        };
        let res = residualize(&ds, &design, &plan, &opts).unwrap();
        let theta = solve_residual_regression(&res).unwrap();

        // reverse rows, carry fold assignments along
        let n = ds.n_obs();
        let order: Vec<usize> = (0..n).rev().collect();
        let x2 = ds.x.select(Axis(0), &order);
        let y2 = ds.y.select(Axis(0), &order);
        let t2 = ds
            .treatments
            .iter()
            .map(|t| match &t.data {
                TreatmentData::Binary { values } => TreatmentColumn::binary(
                    &t.name,
                    order.iter().map(|&i| values[i]).collect(),
                ),
                TreatmentData::Continuous { values } => TreatmentColumn::continuous(
                    &t.name,
                    order.iter().map(|&i| values[i]).collect(),
                ),
                TreatmentData::Categorical { values, n_levels, .. } => {
                    TreatmentColumn::categorical(
                        &t.name,
                        order.iter().map(|&i| values[i]).collect(),
                        *n_levels,
                    )
                }
            })
            .collect();
        let ds2 =
            Dataset::new(x2, ds.covariate_names.clone(), y2, t2, None).unwrap();
        let design2 = encode_treatments(&ds2, &inter).unwrap();
        let plan2 = FoldPlan {
            k: plan.k,
            assignments: order.iter().map(|&i| plan.assignments[i]).collect(),
            seed: plan.seed,
            stratify_on: None,
        };
        let res2 = residualize(&ds2, &design2, &plan2, &opts).unwrap();
        let theta2 = solve_residual_regression(&res2).unwrap();
        for j in 0..theta.len() {
            assert!(
                (theta[j] - theta2[j]).abs() < 1e-10,
                "coef {}: {} vs {}",
                j,
                theta[j],
                theta2[j]
            );
        }
    }

    #[test]
    fn single_split_repeat_equals_estimate() {
        let (ds, inter) = confounded_dataset(150, 11);
        let opts = PlmOptions {
            k: 2,
            treatment_learner: LearnerKind::Ols,
            outcome_learner: LearnerKind::Ols,
            ..Default::default()
        };
        let single = estimate_plm(&ds, &inter, &opts, derive_seed(55, 0)).unwrap();
        let agg = repeat_splits(&ds, &inter, &opts, 1, 55).unwrap();
        assert_eq!(single.theta, agg.theta);
        assert_eq!(single.se, agg.se);
    }

    #[test]
    fn null_direction_gives_exactly_zero_derivative() {
        let (ds, inter) = confounded_dataset(100, 42);
        let design = encode_treatments(&ds, &inter).unwrap();
        let n = ds.n_obs();
        let d = design.n_cols();
        let nuis = PlmNuisances {
            m_main: Array2::zeros((n, design.n_treatment_cols)),
            m_inter: Array2::zeros((n, d - design.n_treatment_cols)),
            l_hat: Array1::zeros(n),
        };
        let theta = Array1::zeros(d);
        let dir = PlmDirection::OutcomeShift(Array1::zeros(n));
        let deriv = check_orthogonality(
            &design,
            ds.y.view(),
            &nuis,
            theta.view(),
            &dir,
            &[0.05, 0.1],
        );
        assert!(deriv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_design_column_rejected() {
        let n = 30;
        let mut st = 2u64;
        let x = Array2::from_shape_fn((n, 2), |_| lcg(&mut st));
        let y = Array1::zeros(n);
        // a2 is constant, so a1*a2 is degenerate
        let ds = Dataset::new(
            x,
            vec!["x1".into(), "x2".into()],
            y,
            vec![
                TreatmentColumn::binary("a1", (0..n).map(|i| (i % 2) as u8).collect()),
                TreatmentColumn::continuous("a2", vec![1.0; n]),
            ],
            None,
        )
        .unwrap();
        let err = estimate_plm(
            &ds,
            &[InteractionSpec::new(vec!["a1", "a2"])],
            &PlmOptions {
                k: 2,
                treatment_learner: LearnerKind::Ols,
                outcome_learner: LearnerKind::Ols,
                ..Default::default()
            },
            3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("a2"), "{}", err);
    }
}
