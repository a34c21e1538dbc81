//! Seeded Monte-Carlo checks of recovery rates and method orderings.

use sketchlift::dataset::generate_gmm;
use sketchlift::eval::{aggregate, misclassification_error, run_replicates, ExperimentConfig, Method, SeparationReference};
use sketchlift::sketch::{mrwsl_cluster, SketchConfig};

#[test]
fn sl_recovers_above_its_cutoff() {
    let mut cfg = ExperimentConfig::new(vec![100; 4], 20);
    cfg.gamma = 0.25;
    cfg.lambda_star = Some(2f64.sqrt());
    cfg.separation_reference = SeparationReference::Sl;
    cfg.replicates = 100;
    cfg.seed = 31;
    cfg.methods = vec![Method::M1];
    let exact = run_replicates(&cfg)
        .unwrap()
        .iter()
        .filter(|r| r.failure.is_none() && r.error == 0.0)
        .count();
    assert!(exact >= 95, "exact recovery in {exact}/100");
}

#[test]
fn bcsl_no_worse_than_sl_on_unequal_sizes() {
    let mut cfg = ExperimentConfig::new(vec![50, 50, 150, 150], 200);
    cfg.gamma = 0.25;
    cfg.lambda_star = Some(2f64.sqrt());
    cfg.separation_reference = SeparationReference::Bcsl;
    cfg.replicates = 100;
    cfg.seed = 32;
    cfg.methods = vec![Method::M1, Method::M2];
    let summary = aggregate(&run_replicates(&cfg).unwrap());
    let (sl, bcsl) = (&summary[0], &summary[1]);
    assert_eq!((sl.failures, bcsl.failures), (0, 0));
    assert!(
        bcsl.mean_error <= sl.mean_error,
        "bcsl {} vs sl {}",
        bcsl.mean_error,
        sl.mean_error
    );
}

#[test]
fn mrwsl_error_settles_over_rounds() {
    let mut cfg = ExperimentConfig::new(vec![25, 25, 75, 75], 20);
    cfg.gamma = 0.25;
    cfg.lambda_star = Some(1.2);
    cfg.replicates = 100;
    cfg.seed = 33;
    let rounds = 4;
    let mut mean = vec![0.0; rounds];
    for r in 0..cfg.replicates {
        let seed = cfg.replicate_seed(r);
        let (data, truth) = generate_gmm(&cfg.gmm_spec(seed).unwrap()).unwrap();
        let sketch = SketchConfig {
            gamma: cfg.gamma,
            seed: seed ^ 1,
            rounding_seed: seed ^ 2,
            ..SketchConfig::default()
        };
        let result = mrwsl_cluster(&data, 4, &sketch, rounds, None).unwrap();
        assert_eq!(result.rounds.len(), rounds);
        for (acc, round) in mean.iter_mut().zip(&result.rounds) {
            *acc += misclassification_error(&round.labeling, &truth).unwrap() / cfg.replicates as f64;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] <= w[0]), "mean error by round {mean:?}");
}
