use serde::{Deserialize, Serialize};
use serde_json::json;

use super::ConditionalSurvival;
use crate::error::Result;
use crate::hazard::{km_fit, StepSurvival, Target};
use crate::survdata::Dataset;

/// Treatment-stratified Kaplan-Meier curve that ignores covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KmMarginalFit {
    target: Target,
    arms: [StepSurvival; 2],
}

impl KmMarginalFit {
    pub fn curve(&self, a: u8) -> &StepSurvival {
        &self.arms[usize::from(a)]
    }
}

impl ConditionalSurvival for KmMarginalFit {
    fn name(&self) -> &str {
        "km"
    }

    fn target(&self) -> Target {
        self.target
    }

    fn predict_into(&self, a: u8, _w: &[f64], times: &[f64], out: &mut [f64]) {
        let curve = self.curve(a);
        for (o, &t) in out.iter_mut().zip(times) {
            *o = curve.eval(t);
        }
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "learner": "km",
            "target": self.target,
            "jumps": [self.arms[0].jump_times().len(), self.arms[1].jump_times().len()],
        })
    }
}

pub fn fit_km_marginal(data: &Dataset, target: Target) -> Result<KmMarginalFit> {
    Ok(KmMarginalFit {
        target,
        arms: [km_fit(data, target, Some(0))?, km_fit(data, target, Some(1))?],
    })
}
