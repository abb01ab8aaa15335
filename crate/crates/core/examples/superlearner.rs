// The survival ensemble on its own: candidate weights and cross-validated
// risks for the event and censoring roles, plus the propensity ensemble.

use std::sync::Arc;

use cfsurv::ensemble::{iterate_superlearner, propensity_superlearner, SuperLearnerConfig, SuperLearnerReport};
use cfsurv::learners::{PropensitySpec, SurvivalLearner, SurvivalLearnerSpec};
use cfsurv::simulation::{augment_features, simulate_dataset, DgpConfig};

fn run(n: usize) -> cfsurv::Result<SuperLearnerReport> {
    let data = augment_features(&simulate_dataset(&DgpConfig { n, seed: 8, ..DgpConfig::default() })?)?;
    let learners = |specs: &[&str]| -> cfsurv::Result<Vec<Arc<dyn SurvivalLearner>>> {
        specs
            .iter()
            .map(|s| Ok(Arc::new(s.parse::<SurvivalLearnerSpec>()?) as Arc<dyn SurvivalLearner>))
            .collect()
    };
    let s = learners(&["km", "exp@0,1,2", "weibull@0,1,2", "cox@3,4,2", "exp.int@3,4,2,6,7", "pch3@3,4,2"])?;
    let g = learners(&["km", "exp@5,2", "cox@5,2"])?;
    let fit = iterate_superlearner(&data, &s, &g, &SuperLearnerConfig::default())?;
    let r = &fit.report;
    println!("alternation steps: {} (converged: {})", r.steps, r.converged);
    for (role, names, weights, risks, best) in [
        ("S", &r.s_candidates, &r.s_weights, &r.s_cv_risks, r.s_risk),
        ("G", &r.g_candidates, &r.g_weights, &r.g_cv_risks, r.g_risk),
    ] {
        println!("{role} ensemble risk {best:.6}");
        for ((name, w), risk) in names.iter().zip(weights).zip(risks) {
            println!("  {name:<22} weight {w:.3}  cv risk {risk:.6}");
        }
    }
    let pi: Vec<PropensitySpec> = vec!["mean".parse()?, "logistic@0,1,2".parse()?, "logistic@8".parse()?];
    let (_, pr) = propensity_superlearner(&data, &pi, 5, 8)?;
    println!("propensity ensemble risk {:.6}", pr.risk);
    for ((name, w), risk) in pr.candidates.iter().zip(&pr.weights).zip(&pr.cv_risks) {
        println!("  {name:<22} weight {w:.3}  cv risk {risk:.6}");
    }
    Ok(fit.report)
}

#[allow(dead_code)]
fn main() -> cfsurv::Result<()> {
    run(800).map(|_| ())
}
