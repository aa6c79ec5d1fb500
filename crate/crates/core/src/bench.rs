//! Replication harness: runs estimators over many simulated replicates
//! and reports bias, rMSE, relative-bias distributions, empirical SD,
//! mean analytic SE, and 95% CI coverage, with delimited-table and
//! plot-data outputs.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossfit::make_folds;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::irm::{
    aipw_ate, fit_arm_nuisances, fit_arm_outcomes, fit_propensity, ipw_ate, irm_variance,
    regression_ate, ArmNuisances, IrmOptions,
};
use crate::learners::{LearnerKind, DEFAULT_CLIP_EPS};
use crate::plm::{repeat_splits, PlmOptions};
use crate::seed::derive_seed;
use crate::simgen::{gen_irm, gen_plm, irm_true_ate, plm_interactions, IrmSimConfig, PlmSimConfig};

pub const BENCH_SCHEMA_VERSION: u32 = 1;

/// Aggregated metrics for one (estimator, learner, K, parameter) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRecord {
    pub estimator: String,
    pub learner_id: String,
    pub k: usize,
    pub param: String,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub empirical_sd: f64,
    /// Mean analytic SE over replicates; NaN for estimators without one.
    pub mean_se: f64,
    /// Fraction of replicate CIs containing the truth; NaN without SEs.
    pub coverage95: f64,
    pub n_replicates: usize,
    pub n_failed: usize,
    pub wall_secs: f64,
    /// Per-replicate point estimates (replicate order).
    pub estimates: Vec<f64>,
    /// Per-replicate `(estimate - truth) / truth`.
    pub relative_bias: Vec<f64>,
}

impl BenchRecord {
    fn from_estimates(
        estimator: &str,
        learner_id: &str,
        k: usize,
        param: &str,
        truth: f64,
        estimates: Vec<f64>,
        ses: Option<Vec<f64>>,
        n_failed: usize,
        wall_secs: f64,
    ) -> Self {
        let m = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / m;
        let bias = mean - truth;
        let rmse =
            (estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / m).sqrt();
        let empirical_sd =
            (estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / m).sqrt();
        let (mean_se, coverage95) = match &ses {
            Some(s) => {
                let mean_se = s.iter().sum::<f64>() / m;
                let covered = estimates
                    .iter()
                    .zip(s.iter())
                    .filter(|(e, se)| {
                        truth >= **e - 1.96 * **se && truth <= **e + 1.96 * **se
                    })
                    .count();
                (mean_se, covered as f64 / m)
            }
            None => (f64::NAN, f64::NAN),
        };
        let relative_bias = estimates.iter().map(|e| (e - truth) / truth).collect();
        Self {
            estimator: estimator.into(),
            learner_id: learner_id.into(),
            k,
            param: param.into(),
            truth,
            bias,
            rmse,
            empirical_sd,
            mean_se,
            coverage95,
            n_replicates: estimates.len(),
            n_failed,
            wall_secs,
            estimates,
            relative_bias,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchResult {
    pub schema_version: u32,
    pub records: Vec<BenchRecord>,
    /// (parameter, truth) pairs echoed for downstream tooling.
    pub truths: Vec<(String, f64)>,
}

fn check_failures(n_failed: usize, n_replicates: usize, what: &str) -> Result<()> {
    if n_failed * 20 > n_replicates {
        return Err(Error::Estimation(format!(
            "{} of {} {} replicates failed (more than 5%)",
            n_failed, n_replicates, what
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Partial linear model bench
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlmBenchConfig {
    pub n: usize,
    pub theta: [f64; 3],
    pub preset: String,
    pub learners: Vec<LearnerKind>,
    pub ks: Vec<usize>,
    pub n_replicates: usize,
    pub n_splits: usize,
    pub master_seed: u64,
    pub clip_eps: f64,
}

impl Default for PlmBenchConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            theta: [5.0, 15.0, 5.0],
            preset: "default".into(),
            learners: vec![LearnerKind::BoostedTrees(Default::default())],
            ks: vec![5],
            n_replicates: 100,
            n_splits: 50,
            master_seed: 20240901,
            clip_eps: DEFAULT_CLIP_EPS,
        }
    }
}

pub fn parse_plm_preset(name: &str) -> Result<crate::simgen::PlmPreset> {
    match name {
        "default" => Ok(crate::simgen::PlmPreset::Default),
        "null" => Ok(crate::simgen::PlmPreset::Null),
        "linear" => Ok(crate::simgen::PlmPreset::Linear),
        other => Err(Error::Invalid(format!("unknown plm preset '{}'", other))),
    }
}

pub fn parse_irm_preset(name: &str) -> Result<crate::simgen::IrmPreset> {
    match name {
        "default" => Ok(crate::simgen::IrmPreset::Default),
        "uniform" => Ok(crate::simgen::IrmPreset::Uniform),
        other => Err(Error::Invalid(format!("unknown irm preset '{}'", other))),
    }
}

/// Runs `repeat_splits` on fresh draws of the partial-linear design for
/// every learner/K combination.
pub fn run_plm_bench(cfg: &PlmBenchConfig) -> Result<BenchResult> {
    let preset = parse_plm_preset(&cfg.preset)?;
    let interactions = plm_interactions();
    let mut records = Vec::new();
    for learner in &cfg.learners {
        for &k in &cfg.ks {
            let start = Instant::now();
            let opts = PlmOptions {
                k,
                treatment_learner: learner.clone(),
                outcome_learner: learner.clone(),
                clip_eps: cfg.clip_eps,
                ..Default::default()
            };
            let runs: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..cfg.n_replicates)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed = derive_seed(cfg.master_seed, rep as u64);
                    let sim = PlmSimConfig {
                        n: cfg.n,
                        theta: cfg.theta,
                        seed: rep_seed,
                        preset,
                    };
                    let (ds, _) = gen_plm(&sim)?;
                    let report = repeat_splits(
                        &ds,
                        &interactions,
                        &opts,
                        cfg.n_splits,
                        derive_seed(rep_seed, 0x5e),
                    )?;
                    Ok((report.theta, report.se))
                })
                .collect();

            let ok: Vec<&(Vec<f64>, Vec<f64>)> =
                runs.iter().filter_map(|r| r.as_ref().ok()).collect();
            let n_failed = cfg.n_replicates - ok.len();
            check_failures(n_failed, cfg.n_replicates, "plm")?;
            if ok.is_empty() {
                return Err(Error::Estimation("all plm replicates failed".into()));
            }
            let wall = start.elapsed().as_secs_f64();
            for j in 0..3 {
                let estimates: Vec<f64> = ok.iter().map(|(t, _)| t[j]).collect();
                let ses: Vec<f64> = ok.iter().map(|(_, s)| s[j]).collect();
                records.push(BenchRecord::from_estimates(
                    "dml_plm",
                    &learner.id(),
                    k,
                    &format!("theta{}", j + 1),
                    cfg.theta[j],
                    estimates,
                    Some(ses),
                    n_failed,
                    wall,
                ));
            }
        }
    }
    let truths = (0..3).map(|j| (format!("theta{}", j + 1), cfg.theta[j])).collect();
    Ok(BenchResult { schema_version: BENCH_SCHEMA_VERSION, records, truths })
}

// ---------------------------------------------------------------------
// Interactive model bench
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrmMethod {
    DmlAipw,
    Ipw,
    Regression,
}

impl IrmMethod {
    pub fn label(&self) -> &'static str {
        match self {
            IrmMethod::DmlAipw => "dml_aipw",
            IrmMethod::Ipw => "ipw",
            IrmMethod::Regression => "regression",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrmMethodSpec {
    pub method: IrmMethod,
    pub learner: LearnerKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrmBenchConfig {
    pub n: usize,
    pub preset: String,
    pub methods: Vec<IrmMethodSpec>,
    pub ks: Vec<usize>,
    pub n_replicates: usize,
    pub master_seed: u64,
    pub clip_eps: f64,
}

impl Default for IrmBenchConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            preset: "default".into(),
            methods: vec![
                IrmMethodSpec {
                    method: IrmMethod::DmlAipw,
                    learner: LearnerKind::BoostedTrees(Default::default()),
                },
                IrmMethodSpec { method: IrmMethod::Ipw, learner: LearnerKind::MultinomialSoftmax },
            ],
            ks: vec![5],
            n_replicates: 200,
            master_seed: 20240902,
            clip_eps: DEFAULT_CLIP_EPS,
        }
    }
}

pub const IRM_CONTRASTS: [(usize, usize); 3] = [(2, 1), (3, 1), (3, 2)];

fn contrast_label(b: usize, c: usize) -> String {
    format!("ate_{}_{}", b, c)
}

/// Per-replicate estimates of one method over the three contrasts.
fn irm_replicate(
    ds: &Dataset,
    spec: &IrmMethodSpec,
    k: usize,
    clip_eps: f64,
    seed: u64,
) -> Result<([f64; 3], Option<[f64; 3]>)> {
    let regimen = ds.regimen.as_ref().expect("irm data");
    let d = ds.n_regimens()?;
    let n = ds.n_obs();
    let plan = make_folds(n, k, seed, Some(regimen))?;
    // fit only the nuisances the method actually uses
    let nuis: ArmNuisances = match spec.method {
        IrmMethod::DmlAipw => {
            let opts = IrmOptions {
                k,
                propensity_learner: spec.learner.clone(),
                outcome_learner: spec.learner.clone(),
                clip_eps,
            };
            fit_arm_nuisances(ds, &plan, &opts)?
        }
        IrmMethod::Ipw => ArmNuisances {
            m_hat: fit_propensity(ds, &plan, &spec.learner, clip_eps)?,
            g_hat: ndarray::Array2::zeros((n, d)),
        },
        IrmMethod::Regression => ArmNuisances {
            m_hat: ndarray::Array2::from_elem((n, d), 1.0 / d as f64),
            g_hat: fit_arm_outcomes(ds, &plan, &spec.learner)?,
        },
    };
    let mut est = [0.0; 3];
    let mut ses = [0.0; 3];
    for (idx, (b, c)) in IRM_CONTRASTS.iter().enumerate() {
        match spec.method {
            IrmMethod::DmlAipw => {
                let ate = aipw_ate(&nuis, ds, *b, *c)?;
                let (_, se) = irm_variance(&nuis, ds, *b, *c, ate)?;
                est[idx] = ate;
                ses[idx] = se;
            }
            IrmMethod::Ipw => est[idx] = ipw_ate(&nuis, ds, *b, *c, false)?,
            IrmMethod::Regression => est[idx] = regression_ate(&nuis, ds, *b, *c)?,
        }
    }
    let ses = if spec.method == IrmMethod::DmlAipw { Some(ses) } else { None };
    Ok((est, ses))
}

/// Runs every configured method over fresh draws of the three-regimen
/// design; relative-bias distributions per contrast feed the plot-data
/// output.
pub fn run_irm_bench(cfg: &IrmBenchConfig) -> Result<BenchResult> {
    let preset = parse_irm_preset(&cfg.preset)?;
    let mut records = Vec::new();
    for spec in &cfg.methods {
        for &k in &cfg.ks {
            let start = Instant::now();
            let runs: Vec<Result<([f64; 3], Option<[f64; 3]>)>> = (0..cfg.n_replicates)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed = derive_seed(cfg.master_seed, rep as u64);
                    let (ds, _) =
                        gen_irm(&IrmSimConfig { n: cfg.n, seed: rep_seed, preset })?;
                    irm_replicate(&ds, spec, k, cfg.clip_eps, derive_seed(rep_seed, 0xa1))
                })
                .collect();
            let ok: Vec<&([f64; 3], Option<[f64; 3]>)> =
                runs.iter().filter_map(|r| r.as_ref().ok()).collect();
            let n_failed = cfg.n_replicates - ok.len();
            check_failures(n_failed, cfg.n_replicates, "irm")?;
            if ok.is_empty() {
                return Err(Error::Estimation("all irm replicates failed".into()));
            }
            let wall = start.elapsed().as_secs_f64();
            for (idx, (b, c)) in IRM_CONTRASTS.iter().enumerate() {
                let estimates: Vec<f64> = ok.iter().map(|(e, _)| e[idx]).collect();
                let ses: Option<Vec<f64>> = ok[0]
                    .1
                    .map(|_| ok.iter().map(|(_, s)| s.unwrap()[idx]).collect());
                records.push(BenchRecord::from_estimates(
                    spec.method.label(),
                    &spec.learner.id(),
                    k,
                    &contrast_label(*b, *c),
                    irm_true_ate(*b, *c),
                    estimates,
                    ses,
                    n_failed,
                    wall,
                ));
            }
        }
    }
    let truths = IRM_CONTRASTS
        .iter()
        .map(|(b, c)| (contrast_label(*b, *c), irm_true_ate(*b, *c)))
        .collect();
    Ok(BenchResult { schema_version: BENCH_SCHEMA_VERSION, records, truths })
}

// ---------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------

/// Writes `summary.tsv`, `plot_data.tsv`, and `bench_result.json` into
/// `dir` (created if absent).
pub fn write_bench_outputs(result: &BenchResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut summary = std::fs::File::create(dir.join("summary.tsv"))?;
    writeln!(
        summary,
        "estimator\tlearner\tk\tparam\ttruth\tbias\trmse\tempirical_sd\tmean_se\tcoverage95\tn_replicates\tn_failed\twall_secs"
    )?;
    for r in &result.records {
        writeln!(
            summary,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.estimator,
            r.learner_id,
            r.k,
            r.param,
            r.truth,
            r.bias,
            r.rmse,
            r.empirical_sd,
            r.mean_se,
            r.coverage95,
            r.n_replicates,
            r.n_failed,
            r.wall_secs
        )?;
    }

    let mut plot = std::fs::File::create(dir.join("plot_data.tsv"))?;
    writeln!(plot, "estimator\tlearner\tk\tparam\treplicate\testimate\trelative_bias")?;
    for r in &result.records {
        for (rep, (est, rb)) in r.estimates.iter().zip(r.relative_bias.iter()).enumerate() {
            writeln!(
                plot,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.estimator, r.learner_id, r.k, r.param, rep, est, rb
            )?;
        }
    }

    let json = serde_json::to_string_pretty(result).expect("bench serialization");
    std::fs::write(dir.join("bench_result.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plm_cfg() -> PlmBenchConfig {
        PlmBenchConfig {
            n: 200,
            preset: "linear".into(),
            learners: vec![LearnerKind::Ols],
            ks: vec![2],
            n_replicates: 3,
            n_splits: 1,
            master_seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn single_replicate_bias_is_single_error() {
        let cfg = PlmBenchConfig { n_replicates: 1, ..tiny_plm_cfg() };
        let res = run_plm_bench(&cfg).unwrap();
        for r in &res.records {
            assert_eq!(r.n_replicates, 1);
            assert!((r.bias - (r.estimates[0] - r.truth)).abs() < 1e-12);
            assert!((r.rmse - r.bias.abs()).abs() < 1e-12);
            assert_eq!(r.empirical_sd, 0.0);
        }
    }

    #[test]
    fn rmse_dominates_bias() {
        let res = run_plm_bench(&tiny_plm_cfg()).unwrap();
        for r in &res.records {
            assert!(
                r.rmse * r.rmse + 1e-12 >= r.bias * r.bias,
                "rmse {} bias {}",
                r.rmse,
                r.bias
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = tiny_plm_cfg();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_plm_bench(&cfg).unwrap())
        };
        let a = run(1);
        let b = run(2);
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.estimates, rb.estimates);
            assert_eq!(ra.bias, rb.bias);
        }
    }

    #[test]
    fn irm_bench_shapes_and_truths() {
        let cfg = IrmBenchConfig {
            n: 300,
            methods: vec![
                IrmMethodSpec { method: IrmMethod::Regression, learner: LearnerKind::Ols },
                IrmMethodSpec { method: IrmMethod::Ipw, learner: LearnerKind::MultinomialSoftmax },
            ],
            ks: vec![2],
            n_replicates: 2,
            master_seed: 3,
            ..Default::default()
        };
        let res = run_irm_bench(&cfg).unwrap();
        assert_eq!(res.records.len(), 6); // 2 methods x 3 contrasts
        let truths: Vec<f64> = res.truths.iter().map(|(_, t)| *t).collect();
        assert_eq!(truths, vec![5.0, 10.5, 5.5]);
        for r in &res.records {
            assert_eq!(r.estimates.len(), 2);
            assert!(r.mean_se.is_nan()); // neither method reports an SE
        }
    }

    #[test]
    fn outputs_written() {
        let res = run_plm_bench(&PlmBenchConfig { n_replicates: 1, ..tiny_plm_cfg() }).unwrap();
        let dir = std::env::temp_dir().join(format!("multidml_bench_test_{}", std::process::id()));
        write_bench_outputs(&res, &dir).unwrap();
        assert!(dir.join("summary.tsv").exists());
        assert!(dir.join("plot_data.tsv").exists());
        assert!(dir.join("bench_result.json").exists());
        std::fs::remove_dir_all(&dir).ok();
    }
}
