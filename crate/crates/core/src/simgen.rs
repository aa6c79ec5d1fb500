//! Synthetic data generators with per-row oracle records.
//!
//! Covariates follow the same layout in both designs: `x1..x5` are
//! standard normal and `x6..x10` are Bernoulli with success
//! probabilities (0.35, 0.5, 0.65, 0.7, 0.4). The confounding functions
//! mix linear, nonlinear, and interaction effects; the exact formulas
//! are spelled out next to each preset. `E[x9] = 0.7` fixes the arm-3
//! heterogeneous effect at `15 * 0.7 = 10.5`.
//!
//! Generators are deterministic in the seed, with independent
//! sub-streams for covariates, treatment noise, and outcome noise, so
//! growing `n` extends a dataset instead of reshuffling it.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, InteractionSpec, TreatmentColumn};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// Success probabilities of the binary covariates `x6..x10`.
pub const BINARY_COVARIATE_PROBS: [f64; 5] = [0.35, 0.5, 0.65, 0.7, 0.4];

const N_COVARIATES: usize = 10;
const MIN_N: usize = 50;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn draw_covariates(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let mut x = Array2::zeros((n, N_COVARIATES));
    for i in 0..n {
        for j in 0..5 {
            x[[i, j]] = rng.sample(StandardNormal);
        }
        for (j, &p) in BINARY_COVARIATE_PROBS.iter().enumerate() {
            x[[i, 5 + j]] = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        }
    }
    x
}

fn covariate_names() -> Vec<String> {
    (1..=N_COVARIATES).map(|j| format!("x{}", j)).collect()
}

// ---------------------------------------------------------------------
// Partial linear model design
// ---------------------------------------------------------------------

fn step(v: f64, cut: f64) -> f64 {
    if v > cut {
        1.0
    } else {
        0.0
    }
}

// standard normal tail probabilities used by the analytic means
const TAIL_0_5: f64 = 1.0 - 0.691_462_461_274_013_1; // P(N(0,1) > 0.5)
const TAIL_1_0: f64 = 1.0 - 0.841_344_746_068_542_9; // P(N(0,1) > 1.0)

/// Confounding preset for the partial-linear design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlmPreset {
    /// Mixture of linear, threshold (nonlinear), and interaction
    /// confounding; treatment and outcome models share the x1/x4
    /// threshold structure:
    ///
    /// - `m1 = -0.8 + 1.8 1{x1>0} + 0.5 x6` (logit scale)
    /// - `m2 = 0.3 + 1.2 1{x4>0} + 0.7 1{x1>0} + 0.5 x8 + 0.2 x2`
    /// - `g  = 1.2 1{x1>0} 1{x4>0} + 0.8 1{x1>0} + 1.0 x9 + 0.5 1{x2>0} x6 + 0.2 x3`
    Default,
    /// No confounding: `m1 = m2 = g = 0`.
    Null,
    /// Linear-only confounding:
    /// `m1 = 0.7 x1 - 0.5 x2`, `m2 = 0.8 x2 + 0.6 x4 + 0.5 x6`,
    /// `g = 1.0 x1 + 0.8 x3 + 0.6 x7`.
    Linear,
}

impl PlmPreset {
    fn m1(&self, x: &Array2<f64>, i: usize) -> f64 {
        match self {
            PlmPreset::Default => -0.8 + 1.8 * step(x[[i, 0]], 0.0) + 0.5 * x[[i, 5]],
            PlmPreset::Null => 0.0,
            PlmPreset::Linear => 0.7 * x[[i, 0]] - 0.5 * x[[i, 1]],
        }
    }

    fn m2(&self, x: &Array2<f64>, i: usize) -> f64 {
        match self {
            PlmPreset::Default => {
                0.3 + 1.2 * step(x[[i, 3]], 0.0)
                    + 0.7 * step(x[[i, 0]], 0.0)
                    + 0.5 * x[[i, 7]]
                    + 0.2 * x[[i, 1]]
            }
            PlmPreset::Null => 0.0,
            PlmPreset::Linear => 0.8 * x[[i, 1]] + 0.6 * x[[i, 3]] + 0.5 * x[[i, 5]],
        }
    }

    fn g(&self, x: &Array2<f64>, i: usize) -> f64 {
        match self {
            PlmPreset::Default => {
                1.2 * step(x[[i, 0]], 0.0) * step(x[[i, 3]], 0.0)
                    + 0.8 * step(x[[i, 0]], 0.0)
                    + 1.0 * x[[i, 8]]
                    + 0.5 * step(x[[i, 1]], 0.0) * x[[i, 5]]
                    + 0.2 * x[[i, 2]]
            }
            PlmPreset::Null => 0.0,
            PlmPreset::Linear => 1.0 * x[[i, 0]] + 0.8 * x[[i, 2]] + 0.6 * x[[i, 6]],
        }
    }

    /// Analytic mean of `g(X)` under the covariate law (used as an
    /// independent check on the generator).
    pub fn analytic_mean_g(&self) -> f64 {
        match self {
            // 1.2 P(x1>0)P(x4>0) + 0.8 P(x1>0) + E[x9] + 0.5 P(x2>0) E[x6]
            PlmPreset::Default => {
                1.2 * 0.25
                    + 0.8 * 0.5
                    + BINARY_COVARIATE_PROBS[3]
                    + 0.5 * 0.5 * BINARY_COVARIATE_PROBS[0]
            }
            PlmPreset::Null => 0.0,
            PlmPreset::Linear => 0.6 * BINARY_COVARIATE_PROBS[1],
        }
    }
}

/// Configuration of the two-treatment partial-linear design
/// (binary `a1`, continuous `a2`, interaction `a1*a2`).
#[derive(Debug, Clone)]
pub struct PlmSimConfig {
    pub n: usize,
    /// True coefficients `(theta1, theta2, theta3)` of `a1`, `a2`,
    /// `a1*a2`.
    pub theta: [f64; 3],
    pub seed: u64,
    pub preset: PlmPreset,
}

impl Default for PlmSimConfig {
    fn default() -> Self {
        Self { n: 2000, theta: [5.0, 15.0, 5.0], seed: 0, preset: PlmPreset::Default }
    }
}

/// Per-row true nuisance values of the partial-linear design.
#[derive(Debug, Clone)]
pub struct PlmOracle {
    /// `P(a1 = 1 | X)`.
    pub pi1: Array1<f64>,
    /// `E[a2 | X]`.
    pub m2: Array1<f64>,
    /// `E[a1 a2 | X] = pi1 * m2`.
    pub m_inter: Array1<f64>,
    /// Baseline confounding `g(X)`.
    pub g: Array1<f64>,
    /// `E[Y | X] = theta1 pi1 + theta2 m2 + theta3 pi1 m2 + g`.
    pub l: Array1<f64>,
}

/// The interaction list matching [`gen_plm`]'s treatments.
pub fn plm_interactions() -> Vec<InteractionSpec> {
    vec![InteractionSpec::new(vec!["a1", "a2"])]
}

/// Generates the two-treatment partial-linear dataset:
/// `a1 ~ Bernoulli(sigmoid(m1))`, `a2 = m2 + N(0,1)`,
/// `y = theta1 a1 + theta2 a2 + theta3 a1 a2 + g(X) + N(0,1)`.
pub fn gen_plm(cfg: &PlmSimConfig) -> Result<(Dataset, PlmOracle)> {
    if cfg.n < MIN_N {
        return Err(Error::Invalid(format!("simulation needs n >= {}", MIN_N)));
    }
    let n = cfg.n;
    let x = draw_covariates(n, cfg.seed);
    let mut rng_t = rng_from_seed(derive_seed(cfg.seed, 2));
    let mut rng_y = rng_from_seed(derive_seed(cfg.seed, 3));

    let mut a1 = Vec::with_capacity(n);
    let mut a2 = Vec::with_capacity(n);
    let mut y = Array1::zeros(n);
    let mut pi1 = Array1::zeros(n);
    let mut m2v = Array1::zeros(n);
    let mut gv = Array1::zeros(n);
    for i in 0..n {
        let p1 = sigmoid(cfg.preset.m1(&x, i));
        let u: f64 = rng_t.gen();
        let t1 = if u < p1 { 1u8 } else { 0u8 };
        let eps_a2: f64 = rng_t.sample(StandardNormal);
        let t2 = cfg.preset.m2(&x, i) + eps_a2;
        let g = cfg.preset.g(&x, i);
        let noise: f64 = rng_y.sample(StandardNormal);
        y[i] = cfg.theta[0] * t1 as f64
            + cfg.theta[1] * t2
            + cfg.theta[2] * t1 as f64 * t2
            + g
            + noise;
        pi1[i] = p1;
        m2v[i] = cfg.preset.m2(&x, i);
        gv[i] = g;
        a1.push(t1);
        a2.push(t2);
    }
    let m_inter = &pi1 * &m2v;
    let l = &(cfg.theta[0] * &pi1) + &(cfg.theta[1] * &m2v) + &(cfg.theta[2] * &m_inter) + &gv;

    let ds = Dataset::new(
        x,
        covariate_names(),
        y,
        vec![TreatmentColumn::binary("a1", a1), TreatmentColumn::continuous("a2", a2)],
        None,
    )?;
    Ok((ds, PlmOracle { pi1, m2: m2v, m_inter, g: gv, l }))
}

// ---------------------------------------------------------------------
// Interactive (multi-valued regimen) design
// ---------------------------------------------------------------------

/// Regimen-assignment preset for the interactive design (D = 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrmPreset {
    /// Softmax over `l1 = 1` and threshold/linear mixtures sharing the
    /// baseline's x1/x4 structure:
    ///
    /// - `l2 = 0.4 + 0.7 1{x1>0} - 0.5 1{x2>0} + 0.5 x6`
    /// - `l3 = 0.1 + 0.8 1{x4>0} - 0.3 1{x1>0} + 0.5 x7`
    Default,
    /// `l1 = l2 = l3 = 1`: every arm probability is exactly 1/3.
    Uniform,
}

impl IrmPreset {
    fn scores(&self, x: &Array2<f64>, i: usize) -> [f64; 3] {
        match self {
            IrmPreset::Default => [
                1.0,
                0.4 + 0.7 * step(x[[i, 0]], 0.0) - 0.5 * step(x[[i, 1]], 0.0)
                    + 0.5 * x[[i, 5]],
                0.1 + 0.8 * step(x[[i, 3]], 0.0) - 0.3 * step(x[[i, 0]], 0.0)
                    + 0.5 * x[[i, 6]],
            ],
            IrmPreset::Uniform => [1.0, 1.0, 1.0],
        }
    }
}

/// Configuration of the three-regimen interactive design.
#[derive(Debug, Clone)]
pub struct IrmSimConfig {
    pub n: usize,
    pub seed: u64,
    pub preset: IrmPreset,
}

impl Default for IrmSimConfig {
    fn default() -> Self {
        Self { n: 1000, seed: 0, preset: IrmPreset::Default }
    }
}

/// Per-row true nuisances of the interactive design.
#[derive(Debug, Clone)]
pub struct IrmOracle {
    /// n x 3 generalized propensity scores.
    pub m: Array2<f64>,
    /// n x 3 arm outcome means `g(r = d, X)`.
    pub g: Array2<f64>,
}

/// True pairwise effects of the interactive design: arm means over the
/// baseline are `(0, 5, 15 * E[x9]) = (0, 5, 10.5)`.
pub fn irm_true_ate(b: usize, c: usize) -> f64 {
    let means = [0.0, 5.0, 15.0 * BINARY_COVARIATE_PROBS[3]];
    means[b - 1] - means[c - 1]
}

/// Generates the three-regimen dataset:
/// `R ~ Multinomial(softmax(l1, l2, l3))`,
/// `y = 5*1{R=2} + 15*1{R=3}*x9 + b(X) + N(0,1)` with the shared
/// baseline `b(X) = 1.0 1{x1>0} + 0.8 1{x4>0} + 0.6 x7 + 0.3 x2`.
pub fn gen_irm(cfg: &IrmSimConfig) -> Result<(Dataset, IrmOracle)> {
    if cfg.n < MIN_N {
        return Err(Error::Invalid(format!("simulation needs n >= {}", MIN_N)));
    }
    let n = cfg.n;
    let x = draw_covariates(n, cfg.seed);
    let mut rng_t = rng_from_seed(derive_seed(cfg.seed, 2));
    let mut rng_y = rng_from_seed(derive_seed(cfg.seed, 3));

    let mut m = Array2::zeros((n, 3));
    let mut g = Array2::zeros((n, 3));
    let mut regimen = Vec::with_capacity(n);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let scores = cfg.preset.scores(&x, i);
        let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for d in 0..3 {
            m[[i, d]] = exps[d] / total;
        }
        let u: f64 = rng_t.gen();
        let r = if u < m[[i, 0]] {
            1
        } else if u < m[[i, 0]] + m[[i, 1]] {
            2
        } else {
            3
        };
        regimen.push(r);

        let baseline = 1.0 * step(x[[i, 0]], 0.0)
            + 0.8 * step(x[[i, 3]], 0.0)
            + 0.6 * x[[i, 6]]
            + 0.3 * x[[i, 1]];
        g[[i, 0]] = baseline;
        g[[i, 1]] = baseline + 5.0;
        g[[i, 2]] = baseline + 15.0 * x[[i, 8]];
        let noise: f64 = rng_y.sample(StandardNormal);
        y[i] = g[[i, r - 1]] + noise;
    }

    let ds = Dataset::new(x, covariate_names(), y, vec![], Some(regimen))?;
    Ok((ds, IrmOracle { m, g }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TreatmentData;

    #[test]
    fn null_preset_has_no_confounding() {
        let cfg = PlmSimConfig {
            n: 5000,
            preset: PlmPreset::Null,
            seed: 4,
            ..Default::default()
        };
        let (ds, oracle) = gen_plm(&cfg).unwrap();
        assert!(oracle.pi1.iter().all(|&p| p == 0.5));
        assert!(oracle.m2.iter().all(|&v| v == 0.0));
        assert!(oracle.g.iter().all(|&v| v == 0.0));
        let a1_mean = match &ds.treatments[0].data {
            TreatmentData::Binary { values } => {
                values.iter().map(|&v| v as f64).sum::<f64>() / cfg.n as f64
            }
            _ => unreachable!(),
        };
        // 3 binomial SDs around 0.5
        assert!((a1_mean - 0.5).abs() < 3.0 * 0.5 / (cfg.n as f64).sqrt());
    }

    #[test]
    fn oracle_relations_hold_exactly() {
        let cfg = PlmSimConfig { n: 500, seed: 9, ..Default::default() };
        let (_, oracle) = gen_plm(&cfg).unwrap();
        for i in 0..cfg.n {
            assert_eq!(oracle.m_inter[i], oracle.pi1[i] * oracle.m2[i]);
            let l = cfg.theta[0] * oracle.pi1[i]
                + cfg.theta[1] * oracle.m2[i]
                + cfg.theta[2] * oracle.m_inter[i]
                + oracle.g[i];
            assert!((oracle.l[i] - l).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_mean_g_matches_analytic_mean() {
        let cfg = PlmSimConfig { n: 100_000, seed: 31, ..Default::default() };
        let (_, oracle) = gen_plm(&cfg).unwrap();
        let emp = oracle.g.mean().unwrap();
        let truth = cfg.preset.analytic_mean_g();
        // g has SD ~ 1; allow 4 MC standard errors
        let tol = 4.0 * 1.2 / (cfg.n as f64).sqrt();
        assert!((emp - truth).abs() < tol, "emp {} vs analytic {}", emp, truth);
    }

    #[test]
    fn binary_covariates_match_configured_probabilities() {
        let cfg = PlmSimConfig { n: 10_000, seed: 12, ..Default::default() };
        let (ds, _) = gen_plm(&cfg).unwrap();
        for (j, &p) in BINARY_COVARIATE_PROBS.iter().enumerate() {
            let emp = ds.x.column(5 + j).mean().unwrap();
            let sd = (p * (1.0 - p) / cfg.n as f64).sqrt();
            assert!((emp - p).abs() < 3.0 * sd, "x{}: {} vs {}", 6 + j, emp, p);
        }
    }

    #[test]
    fn growing_n_extends_the_stream() {
        let small = PlmSimConfig { n: 60, seed: 77, ..Default::default() };
        let large = PlmSimConfig { n: 100, seed: 77, ..Default::default() };
        let (ds_s, _) = gen_plm(&small).unwrap();
        let (ds_l, _) = gen_plm(&large).unwrap();
        for i in 0..60 {
            assert_eq!(ds_s.y[i], ds_l.y[i]);
            for j in 0..10 {
                assert_eq!(ds_s.x[[i, j]], ds_l.x[[i, j]]);
            }
        }

        let (irm_s, _) = gen_irm(&IrmSimConfig { n: 60, seed: 5, ..Default::default() }).unwrap();
        let (irm_l, _) = gen_irm(&IrmSimConfig { n: 120, seed: 5, ..Default::default() }).unwrap();
        assert_eq!(irm_s.regimen.as_ref().unwrap()[..60], irm_l.regimen.as_ref().unwrap()[..60]);
    }

    #[test]
    fn uniform_preset_gives_equal_arm_probabilities() {
        let cfg = IrmSimConfig { n: 200, seed: 3, preset: IrmPreset::Uniform };
        let (_, oracle) = gen_irm(&cfg).unwrap();
        for i in 0..cfg.n {
            for d in 0..3 {
                assert!((oracle.m[[i, d]] - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn irm_oracle_effects_recover_true_ates() {
        let cfg = IrmSimConfig { n: 1_000_000, seed: 8, ..Default::default() };
        let (_, oracle) = gen_irm(&cfg).unwrap();
        // Monte Carlo mean of per-row potential-outcome differences
        let mut d31 = 0.0;
        let mut d21 = 0.0;
        for i in 0..cfg.n {
            d31 += oracle.g[[i, 2]] - oracle.g[[i, 0]];
            d21 += oracle.g[[i, 1]] - oracle.g[[i, 0]];
        }
        d31 /= cfg.n as f64;
        d21 /= cfg.n as f64;
        // d31 = 15 * mean(x9); binomial MC error
        let mc3 = 3.0 * 15.0 * (0.7f64 * 0.3 / cfg.n as f64).sqrt();
        assert!((d31 - irm_true_ate(3, 1)).abs() < mc3, "{} vs 10.5", d31);
        assert!((d21 - irm_true_ate(2, 1)).abs() < 1e-12);
        assert!((irm_true_ate(3, 2) - 5.5).abs() < 1e-12);
    }

    #[test]
    fn regimen_probabilities_sum_to_one() {
        let cfg = IrmSimConfig { n: 300, seed: 21, ..Default::default() };
        let (_, oracle) = gen_irm(&cfg).unwrap();
        for i in 0..cfg.n {
            let s = oracle.m[[i, 0]] + oracle.m[[i, 1]] + oracle.m[[i, 2]];
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_n_rejected() {
        assert!(gen_plm(&PlmSimConfig { n: 10, ..Default::default() }).is_err());
        assert!(gen_irm(&IrmSimConfig { n: 10, ..Default::default() }).is_err());
    }
}
