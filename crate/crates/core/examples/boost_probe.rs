//! Boosting convergence probe on the simulated outcome function.

use multidml::learners::{BoostParams, Learner, LearnerKind, Target};
use multidml::simgen::*;

fn main() {
    let cfg = PlmSimConfig { n: 2000, seed: 42, ..Default::default() };
    let (ds, oracle) = gen_plm(&cfg).unwrap();

    for (trees, lr, depth) in [
        (60, 0.3, 2),
        (150, 0.3, 2),
        (400, 0.3, 2),
        (60, 0.3, 3),
        (150, 0.3, 3),
        (60, 1.0, 2),
        (150, 1.0, 2),
    ] {
        let kind = LearnerKind::BoostedTrees(BoostParams {
            n_trees: trees,
            learning_rate: lr,
            max_depth: depth,
            min_leaf: 10,
            subsample: 1.0,
        });
        // fit directly on the noiseless target l(X)
        let l = oracle.l.clone();
        let model = kind.fit(ds.x.view(), Target::Regression(l.view()), 1).unwrap();
        println!(
            "trees={} lr={} depth={}: train mse on noiseless l = {:.4} (var {:.1})",
            trees,
            lr,
            depth,
            model.train_loss(),
            174.0
        );
    }
}
