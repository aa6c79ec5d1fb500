//! Built-in diagnostic suites: orthogonality of both score functions
//! under nuisance perturbations, partialling-out equivalence with plain
//! OLS, AIPW algebraic identities, and double robustness. The CLI
//! `check` subcommand runs all of them; the acceptance tests reuse the
//! same routines.

use ndarray::{Array1, Array2};

use crate::data::encode_treatments;
use crate::error::Result;
use crate::irm::{
    aipw_ate, irm_orthogonality_derivative, ArmNuisances, IrmDirection,
};
use crate::learners::LearnerKind;
use crate::linalg;
use crate::plm::{
    check_orthogonality, estimate_plm, fd_derivative_at_zero, naive_mean_score, PlmDirection,
    PlmNuisances, PlmOptions,
};
use crate::seed::derive_seed;
use crate::simgen::{
    gen_irm, gen_plm, irm_true_ate, plm_interactions, IrmSimConfig, PlmPreset, PlmSimConfig,
};

/// Result of one diagnostic check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

const T_GRID: [f64; 2] = [0.05, 0.1];

/// Finite-difference Neyman orthogonality of the partialling-out score
/// with oracle nuisances at n = 10^4: the derivative in every direction
/// must stay below `5 / sqrt(n)`, while the naive (non-orthogonal)
/// score must exceed that bound by at least 10x.
pub fn check_plm_orthogonality(seed: u64) -> Result<CheckOutcome> {
    let n = 10_000;
    let cfg = PlmSimConfig { n, seed, ..Default::default() };
    let (ds, oracle) = gen_plm(&cfg)?;
    let design = encode_treatments(&ds, &plm_interactions())?;
    let theta = Array1::from_vec(vec![cfg.theta[0], cfg.theta[1], cfg.theta[2]]);
    let mut m_main = Array2::zeros((n, 2));
    m_main.column_mut(0).assign(&oracle.pi1);
    m_main.column_mut(1).assign(&oracle.m2);
    let mut m_inter = Array2::zeros((n, 1));
    m_inter.column_mut(0).assign(&oracle.m_inter);
    let nuis = PlmNuisances { m_main, m_inter, l_hat: oracle.l.clone() };

    let bound = 5.0 / (n as f64).sqrt();
    let ones = Array1::ones(n);
    let small = Array1::from_elem(n, 0.2);
    let directions = vec![
        ("l+1", PlmDirection::OutcomeShift(ones.clone())),
        ("m_a1+0.2", PlmDirection::MainShift { col: 0, delta: small.clone() }),
        ("m_a2+0.2", PlmDirection::MainShift { col: 1, delta: small.clone() }),
        ("m_inter+0.2", PlmDirection::InterShift { col: 0, delta: small }),
    ];
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for (label, dir) in &directions {
        let deriv =
            check_orthogonality(&design, ds.y.view(), &nuis, theta.view(), dir, &T_GRID);
        let max = deriv.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        worst = worst.max(max);
        details.push(format!("{}={:.4}", label, max));
    }

    // naive score A*(Y - A'theta - l), perturbing l by +1
    let naive_dir = PlmDirection::OutcomeShift(ones);
    let naive_deriv = fd_derivative_at_zero(
        |t| naive_mean_score(&design, ds.y.view(), oracle.l.view(), theta.view(), &naive_dir, t),
        &T_GRID,
    );
    let naive_max = naive_deriv.iter().fold(0.0f64, |a, &b| a.max(b.abs()));

    let passed = worst <= bound && naive_max >= 10.0 * bound;
    Ok(CheckOutcome::new(
        "plm-orthogonality",
        passed,
        format!(
            "max |d/dt mean psi| = {:.4} (bound {:.4}; {}); naive score {:.3} (needs >= {:.3})",
            worst,
            bound,
            details.join(", "),
            naive_max,
            10.0 * bound
        ),
    ))
}

/// Same harness for the interactive-model score with oracle nuisances,
/// plus the plain IPW score as the non-orthogonal contrast.
pub fn check_irm_orthogonality(seed: u64) -> Result<CheckOutcome> {
    let n = 10_000;
    let (ds, oracle) = gen_irm(&IrmSimConfig { n, seed, ..Default::default() })?;
    let nuis = ArmNuisances { m_hat: oracle.m.clone(), g_hat: oracle.g.clone() };
    let (b, c) = (3usize, 1usize);
    let theta = irm_true_ate(b, c);
    let bound = 5.0 / (n as f64).sqrt();

    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for arm in [b, c] {
        let delta_m = oracle.m.column(arm - 1).mapv(|v| 0.2 * v);
        let d1 = irm_orthogonality_derivative(
            &nuis,
            &ds,
            b,
            c,
            theta,
            &IrmDirection::PropensityShift { arm, delta: delta_m },
            &T_GRID,
        )?;
        let d2 = irm_orthogonality_derivative(
            &nuis,
            &ds,
            b,
            c,
            theta,
            &IrmDirection::OutcomeShift { arm, delta: Array1::from_elem(n, 0.2) },
            &T_GRID,
        )?;
        worst = worst.max(d1.abs()).max(d2.abs());
        details.push(format!("m{}={:.4}, g{}={:.4}", arm, d1.abs(), arm, d2.abs()));
    }

    // plain IPW score (no augmentation) perturbed in m_b
    let regimen = ds.regimen.as_ref().expect("irm data");
    let ipw_mean = |t: f64| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let mb = oracle.m[[i, b - 1]] * (1.0 + 0.2 * t);
            let mc = oracle.m[[i, c - 1]];
            if regimen[i] == b {
                total += ds.y[i] / mb;
            }
            if regimen[i] == c {
                total -= ds.y[i] / mc;
            }
        }
        total / n as f64 - theta
    };
    let mut naive = 0.0;
    for &h in &T_GRID {
        naive += (ipw_mean(h) - ipw_mean(-h)) / (2.0 * h);
    }
    naive = (naive / T_GRID.len() as f64).abs();

    let passed = worst <= bound && naive >= 10.0 * bound;
    Ok(CheckOutcome::new(
        "irm-orthogonality",
        passed,
        format!(
            "max |d/dt mean psi| = {:.4} (bound {:.4}; {}); ipw-only score {:.3} (needs >= {:.3})",
            worst,
            bound,
            details.join(", "),
            naive,
            10.0 * bound
        ),
    ))
}

/// With K = 1 and OLS nuisances everywhere, the partialling-out
/// estimate must reproduce the full OLS of `y` on
/// `[treatments, interactions, covariates, 1]` to 1e-8 relative error.
pub fn check_fwl(seed: u64) -> Result<CheckOutcome> {
    let cfg =
        PlmSimConfig { n: 500, seed, preset: PlmPreset::Linear, ..Default::default() };
    let (ds, _) = gen_plm(&cfg)?;
    let interactions = plm_interactions();
    let opts = PlmOptions {
        k: 1,
        treatment_learner: LearnerKind::Ols,
        outcome_learner: LearnerKind::Ols,
        ..Default::default()
    };
    let report = estimate_plm(&ds, &interactions, &opts, seed)?;

    let design = encode_treatments(&ds, &interactions)?;
    let n = ds.n_obs();
    let d = design.n_cols();
    let p = ds.x.ncols();
    let mut full = Array2::ones((n, d + p + 1));
    full.slice_mut(ndarray::s![.., ..d]).assign(&design.columns);
    full.slice_mut(ndarray::s![.., d..d + p]).assign(&ds.x);
    let beta = linalg::lstsq_qr(full.view(), ds.y.view())?;

    let mut worst = 0.0f64;
    for j in 0..d {
        let rel = (report.theta[j] - beta[j]).abs() / beta[j].abs().max(1e-12);
        worst = worst.max(rel);
    }
    Ok(CheckOutcome::new(
        "fwl-equivalence",
        worst < 1e-8,
        format!("max relative gap to full OLS = {:.2e} (bound 1e-8)", worst),
    ))
}

/// AIPW algebraic identities on shared nuisances: exact antisymmetry,
/// transitivity to 1e-12, zero mean of the centered score, and the
/// partition property of `make_folds`.
pub fn check_aipw_identities(seed: u64) -> Result<CheckOutcome> {
    let n = 2_000;
    let (ds, oracle) = gen_irm(&IrmSimConfig { n, seed, ..Default::default() })?;
    let nuis = ArmNuisances { m_hat: oracle.m.clone(), g_hat: oracle.g.clone() };

    let a21 = aipw_ate(&nuis, &ds, 2, 1)?;
    let a12 = aipw_ate(&nuis, &ds, 1, 2)?;
    let a32 = aipw_ate(&nuis, &ds, 3, 2)?;
    let a31 = aipw_ate(&nuis, &ds, 3, 1)?;
    let antisym = (a21 + a12).abs();
    let transit = (a21 + a32 - a31).abs();

    let scores = crate::irm::aipw_scores(&nuis, &ds, 2, 1)?;
    let centered = scores.iter().map(|s| s - a21).sum::<f64>() / n as f64;

    let plan = crate::crossfit::make_folds(2455, 5, derive_seed(seed, 7), None)?;
    let partition_ok = plan.validate_partition().is_ok();
    let sizes: Vec<usize> = (0..5).map(|f| plan.held_out(f).len()).collect();
    let balanced = sizes.iter().all(|&s| s == 491);

    let passed =
        antisym == 0.0 && transit < 1e-12 && centered.abs() < 1e-12 && partition_ok && balanced;
    Ok(CheckOutcome::new(
        "aipw-identities",
        passed,
        format!(
            "antisymmetry {:.1e}, transitivity {:.1e}, centered score mean {:.1e}, folds {:?}",
            antisym, transit, centered, sizes
        ),
    ))
}

/// Double robustness at n = 20000 over 20 replicates: the AIPW bias
/// stays within 3 Monte Carlo standard errors when exactly one nuisance
/// is misspecified, and exceeds it when both are.
pub fn check_double_robustness(seed: u64) -> Result<CheckOutcome> {
    let n = 20_000;
    let reps = 20;
    let (b, c) = (3usize, 1usize);
    let truth = irm_true_ate(b, c);

    let mut est_wrong_g = Vec::with_capacity(reps);
    let mut est_wrong_m = Vec::with_capacity(reps);
    let mut est_both_wrong = Vec::with_capacity(reps);
    for rep in 0..reps {
        let (ds, oracle) =
            gen_irm(&IrmSimConfig { n, seed: derive_seed(seed, rep as u64), ..Default::default() })?;
        let zero_g = Array2::zeros((n, 3));
        let uniform_m = Array2::from_elem((n, 3), 1.0 / 3.0);

        let oracle_m_wrong_g =
            ArmNuisances { m_hat: oracle.m.clone(), g_hat: zero_g.clone() };
        let oracle_g_wrong_m =
            ArmNuisances { m_hat: uniform_m.clone(), g_hat: oracle.g.clone() };
        let both_wrong = ArmNuisances { m_hat: uniform_m, g_hat: zero_g };

        est_wrong_g.push(aipw_ate(&oracle_m_wrong_g, &ds, b, c)?);
        est_wrong_m.push(aipw_ate(&oracle_g_wrong_m, &ds, b, c)?);
        est_both_wrong.push(aipw_ate(&both_wrong, &ds, b, c)?);
    }

    let stats = |est: &[f64]| -> (f64, f64) {
        let m = est.iter().sum::<f64>() / est.len() as f64;
        let sd = (est.iter().map(|e| (e - m) * (e - m)).sum::<f64>()
            / (est.len() - 1) as f64)
            .sqrt();
        (m - truth, sd / (est.len() as f64).sqrt())
    };
    let (bias_g, se_g) = stats(&est_wrong_g);
    let (bias_m, se_m) = stats(&est_wrong_m);
    let (bias_both, se_both) = stats(&est_both_wrong);

    let passed = bias_g.abs() < 3.0 * se_g
        && bias_m.abs() < 3.0 * se_m
        && bias_both.abs() > 3.0 * se_both;
    Ok(CheckOutcome::new(
        "double-robustness",
        passed,
        format!(
            "wrong-g bias {:.4} (3se {:.4}), wrong-m bias {:.4} (3se {:.4}), both-wrong bias {:.4} (3se {:.4})",
            bias_g,
            3.0 * se_g,
            bias_m,
            3.0 * se_m,
            bias_both,
            3.0 * se_both
        ),
    ))
}

/// Runs every diagnostic; all must pass.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_fwl(derive_seed(seed, 1))?,
        check_plm_orthogonality(derive_seed(seed, 2))?,
        check_irm_orthogonality(derive_seed(seed, 3))?,
        check_aipw_identities(derive_seed(seed, 4))?,
        check_double_robustness(derive_seed(seed, 5))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fwl_check_passes() {
        let out = check_fwl(11).unwrap();
        assert!(out.passed, "{}", out.detail);
    }

    #[test]
    fn identities_check_passes() {
        let out = check_aipw_identities(5).unwrap();
        assert!(out.passed, "{}", out.detail);
    }
}
