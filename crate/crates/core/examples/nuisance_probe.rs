//! Measures out-of-fold nuisance accuracy against the oracle record on
//! one replicate, per learner. Calibration aid.

use multidml::crossfit::{crossfit_predict, make_folds};
use multidml::data::encode_treatments;
use multidml::learners::{clip_probabilities, LearnerKind, Target};
use multidml::plm::{residualize, solve_residual_regression, PlmOptions};
use multidml::simgen::*;

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn main() {
    let cfg = PlmSimConfig { n: 2000, seed: 42, ..Default::default() };
    let (ds, oracle) = gen_plm(&cfg).unwrap();
    let design = encode_treatments(&ds, &plm_interactions()).unwrap();
    let plan = make_folds(ds.n_obs(), 5, 7, None).unwrap();
    let n = ds.n_obs();

    let true_inter: Vec<f64> = (0..n).map(|i| oracle.m_inter[i]).collect();
    let true_l: Vec<f64> = (0..n).map(|i| oracle.l[i]).collect();
    let true_pi: Vec<f64> = (0..n).map(|i| oracle.pi1[i]).collect();
    let true_m2: Vec<f64> = (0..n).map(|i| oracle.m2[i]).collect();

    for kind in [
        LearnerKind::BoostedTrees(Default::default()),
        LearnerKind::Ols,
    ] {
        println!("--- learner {:?}", kind.id());
        // binary treatment probability
        let a1 = ds.treatments[0].raw_values();
        let a1v = ndarray::Array1::from_vec(a1.clone());
        let mut p = crossfit_predict(ds.x.view(), Target::Binary(a1v.view()), &kind, &plan).unwrap();
        clip_probabilities(&mut p, 0.01);
        let p = p.into_vector().unwrap();
        println!("pi1 mse {:.5}  (var pi1 {:.4})", mse(p.as_slice().unwrap(), &true_pi),
            variance(&true_pi));

        // continuous treatment
        let a2 = ds.treatments[1].raw_values();
        let a2v = ndarray::Array1::from_vec(a2.clone());
        let m2 = crossfit_predict(ds.x.view(), Target::Regression(a2v.view()), &kind, &plan)
            .unwrap().into_vector().unwrap();
        println!("m2  mse {:.5}  (var m2  {:.4})", mse(m2.as_slice().unwrap(), &true_m2), variance(&true_m2));

        // interaction product
        let inter: Vec<f64> = (0..n).map(|i| design.columns[[i, 2]]).collect();
        let iv = ndarray::Array1::from_vec(inter.clone());
        let mi = crossfit_predict(ds.x.view(), Target::Regression(iv.view()), &kind, &plan)
            .unwrap().into_vector().unwrap();
        println!("m_o mse {:.5}  (var m_o {:.4})", mse(mi.as_slice().unwrap(), &true_inter), variance(&true_inter));

        // outcome
        let l = crossfit_predict(ds.x.view(), Target::Regression(ds.y.view()), &kind, &plan)
            .unwrap().into_vector().unwrap();
        println!("l   mse {:.5}  (var l   {:.4})", mse(l.as_slice().unwrap(), &true_l), variance(&true_l));

        // full theta
        let opts = PlmOptions {
            k: 5,
            treatment_learner: kind.clone(),
            outcome_learner: kind.clone(),
            ..Default::default()
        };
        let res = residualize(&ds, &design, &plan, &opts).unwrap();
        let theta = solve_residual_regression(&res).unwrap();
        println!("theta = [{:.3}, {:.3}, {:.3}] (truth 5, 15, 5)", theta[0], theta[1], theta[2]);
    }
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}
