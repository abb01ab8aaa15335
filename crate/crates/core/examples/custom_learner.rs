// Plugging a user-defined learner into the nuisance library. The warped
// exponential model matches the simulation design's event-time family.

use std::sync::Arc;

use cfsurv::ensemble::SuperLearnerConfig;
use cfsurv::estimator::{estimate_curve, fit_nuisances, NuisanceConfig};
use cfsurv::learners::{SurvivalLearner, SurvivalLearnerSpec};
use cfsurv::simulation::{augment_features, simulate_dataset, true_params, DgpConfig, WarpedExponential};
use cfsurv::survdata::{event_grid, make_folds};

fn run(n: usize) -> cfsurv::Result<[f64; 2]> {
    let dgp = DgpConfig { n, seed: 17, ..DgpConfig::default() };
    let data = augment_features(&simulate_dataset(&dgp)?)?;
    let spec = |s: &str| -> cfsurv::Result<Arc<dyn SurvivalLearner>> { Ok(Arc::new(s.parse::<SurvivalLearnerSpec>()?)) };
    let config = NuisanceConfig {
        s_learners: vec![Arc::new(WarpedExponential::default()), spec("km")?],
        g_learners: vec![spec("exp@5,2")?],
        propensity: vec!["logistic@8".parse()?],
        superlearner: SuperLearnerConfig::default(),
        eta: 20.0,
    };
    let bundle = fit_nuisances(&data, &make_folds(n, 5, 17)?, &config)?;
    if let Some(r) = &bundle.fold(0).survival_report {
        println!("fold 1 event-role weights: {:?} -> {:?}", r.s_candidates, r.s_weights);
    }
    let grid = event_grid(&data);
    let truth = true_params(&dgp, 200_000, &[12.0], 3);
    let mut out = [0.0; 2];
    for a in 0..2u8 {
        let est = estimate_curve(&data, &bundle, &grid, a)?;
        out[a as usize] = est.theta_at(12.0);
        println!("arm {a}: estimate {:.4}, truth {:.4}", out[a as usize], truth.theta(12.0, a));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> cfsurv::Result<()> {
    run(1000).map(|_| ())
}
