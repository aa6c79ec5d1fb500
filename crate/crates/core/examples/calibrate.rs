//! Desk calibration probe: timings and small-scale bias estimates used
//! while tuning the simulation presets and default hyperparameters.

use std::time::Instant;

use multidml::bench::*;
use multidml::learners::{BoostParams, LearnerKind, Target};
use multidml::simgen::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("all");

    if which == "speed" || which == "all" {
        // single boosted fit at estimation scale
        let (ds, _) = gen_plm(&PlmSimConfig { n: 2000, seed: 1, ..Default::default() }).unwrap();
        let y = ds.y.clone();
        let kind = LearnerKind::BoostedTrees(BoostParams::default());
        let t0 = Instant::now();
        let reps = 20;
        for r in 0..reps {
            use multidml::learners::Learner;
            let _ = kind.fit(ds.x.view(), Target::Regression(y.view()), r).unwrap();
        }
        println!("boosted fit n=2000 p=10: {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);

        let t0 = Instant::now();
        let opts = multidml::plm::PlmOptions { k: 5, ..Default::default() };
        let _ = multidml::plm::estimate_plm(&ds, &plm_interactions(), &opts, 3).unwrap();
        println!("estimate_plm boosting K=5 n=2000: {:.2} s", t0.elapsed().as_secs_f64());
    }

    if which == "plm" || which == "all" {
        // small-scale bias probe: boosting vs ols
        let t0 = Instant::now();
        let cfg = PlmBenchConfig {
            n_replicates: 30,
            n_splits: 1,
            ..Default::default()
        };
        let res = run_plm_bench(&cfg).unwrap();
        for r in &res.records {
            println!(
                "plm boost {}: bias {:+.3} rmse {:.3} sd {:.3} mean_se {:.3} cover {:.2}",
                r.param, r.bias, r.rmse, r.empirical_sd, r.mean_se, r.coverage95
            );
        }
        println!("  (30 reps x 1 split took {:.1} s)", t0.elapsed().as_secs_f64());

        let cfg = PlmBenchConfig {
            learners: vec![LearnerKind::Ols],
            n_replicates: 30,
            n_splits: 1,
            ..Default::default()
        };
        let res = run_plm_bench(&cfg).unwrap();
        for r in &res.records {
            println!(
                "plm ols   {}: bias {:+.3} rmse {:.3} sd {:.3} mean_se {:.3} cover {:.2}",
                r.param, r.bias, r.rmse, r.empirical_sd, r.mean_se, r.coverage95
            );
        }
    }

    if which == "irm" || which == "all" {
        let t0 = Instant::now();
        let cfg = IrmBenchConfig {
            n_replicates: 20,
            ..Default::default()
        };
        let res = run_irm_bench(&cfg).unwrap();
        for r in &res.records {
            let mut rb: Vec<f64> = r.relative_bias.clone();
            rb.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = rb[rb.len() / 2];
            println!(
                "irm {} {}: bias {:+.3} sd {:.3} mean_se {:.3} median_rel_bias {:+.4} cover {:.2}",
                r.estimator, r.param, r.bias, r.empirical_sd, r.mean_se, med, r.coverage95
            );
        }
        println!("  (irm 20 reps took {:.1} s)", t0.elapsed().as_secs_f64());
    }

    if which == "checks" || which == "all" {
        for seed_salt in [2u64, 3] {
            let out = match seed_salt {
                2 => multidml::checks::check_plm_orthogonality(multidml::seed::derive_seed(
                    20240903, 2,
                ))
                .unwrap(),
                _ => multidml::checks::check_irm_orthogonality(multidml::seed::derive_seed(
                    20240903, 3,
                ))
                .unwrap(),
            };
            println!("{} passed={} {}", out.name, out.passed, out.detail);
        }
        let dr = multidml::checks::check_double_robustness(multidml::seed::derive_seed(
            20240903, 5,
        ))
        .unwrap();
        println!("{} passed={} {}", dr.name, dr.passed, dr.detail);
    }
}
