//! Hyperparameter probe: out-of-fold outcome error and coefficient
//! error across boosting settings, averaged over a few replicates.

use multidml::crossfit::{crossfit_predict, make_folds};
use multidml::data::encode_treatments;
use multidml::learners::{BoostParams, LearnerKind, Target};
use multidml::plm::{residualize, solve_residual_regression, PlmOptions};
use multidml::simgen::*;

fn main() {
    let grid = [
        Some(BoostParams { n_trees: 60, learning_rate: 0.1, max_depth: 2, min_leaf: 40, subsample: 0.7 }),
        Some(BoostParams { n_trees: 80, learning_rate: 0.1, max_depth: 2, min_leaf: 60, subsample: 0.7 }),
        None, // ols
    ];
    let reps = 10u64;
    for params in grid {
        let kind = match params {
            Some(p) => LearnerKind::BoostedTrees(p),
            None => LearnerKind::Ols,
        };
        let mut l_mse = 0.0;
        let mut terr = [0.0f64; 3];
        for rep in 0..reps {
            let cfg = PlmSimConfig { n: 2000, seed: 1000 + rep, ..Default::default() };
            let (ds, oracle) = gen_plm(&cfg).unwrap();
            let design = encode_treatments(&ds, &plm_interactions()).unwrap();
            let plan = make_folds(ds.n_obs(), 5, 70 + rep, None).unwrap();
            let l_hat = crossfit_predict(ds.x.view(), Target::Regression(ds.y.view()), &kind, &plan)
                .unwrap()
                .into_vector()
                .unwrap();
            l_mse += l_hat
                .iter()
                .zip(oracle.l.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / ds.n_obs() as f64;
            let opts = PlmOptions {
                k: 5,
                treatment_learner: kind.clone(),
                outcome_learner: kind.clone(),
                ..Default::default()
            };
            let res = residualize(&ds, &design, &plan, &opts).unwrap();
            let theta = solve_residual_regression(&res).unwrap();
            for j in 0..3 {
                terr[j] += theta[j] - [5.0, 15.0, 5.0][j];
            }
        }
        println!(
            "{:<55}: oof l-mse {:>7.3} | mean err t1 {:+.3} t2 {:+.3} t3 {:+.3}",
            kind.id(),
            l_mse / reps as f64,
            terr[0] / reps as f64,
            terr[1] / reps as f64,
            terr[2] / reps as f64
        );
    }
}
