//! Ensemble learning of the survival and censoring nuisances.
//!
//! Candidate learners are cross-validated once; the event-survival and
//! censoring-survival weights are then alternately re-solved, each against
//! the current ensemble of the other role, under the losses
//!
//! ```text
//! L(S; G)(o) = int_0^tau S(t)[S(t) - 2{1 - d I(y <= t) / G(y)}] dt
//! M(G; S)(o) = int_0^tau G(t)[G(t) - 2{1 - (1 - d) I(y < t) / S(y)}] dt
//! ```
//!
//! Both are quadratic in the predictor, so each weight solve is a convex
//! quadratic program over the simplex.

mod propensity;
mod solver;
mod superlearner;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::Target;
use crate::learners::ConditionalSurvival;
use crate::survdata::Observation;

pub use propensity::{propensity_superlearner, PropensityReport};
pub use solver::{project_simplex, solve_simplex_weights, QuadraticRisk, SimplexWeights};
pub use superlearner::{iterate_superlearner, CvPredictionCube, DroppedCandidate, SuperLearnerFit, SuperLearnerReport};

/// Default lower bound on the denominators inside the losses.
pub const LOSS_FLOOR: f64 = 0.05;

/// Left-endpoint Riemann grid on `[0, tau)`: points `k tau / N` for
/// `k = 0..N`, each carrying weight `tau / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGrid {
    points: Vec<f64>,
    weight: f64,
}

impl LossGrid {
    pub fn new(tau: f64, n: usize) -> Result<Self> {
        if !(tau > 0.0) || n == 0 {
            return Err(Error::Argument("loss grid needs tau > 0 and at least one point".into()));
        }
        let h = tau / n as f64;
        Ok(LossGrid {
            points: (0..n).map(|k| k as f64 * h).collect(),
            weight: h,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite {what} prediction inside loss")));
    }
    Ok(())
}

/// Event-survival loss for one observation.
pub fn loss_l(
    obs: &Observation,
    s: &dyn ConditionalSurvival,
    g: &dyn ConditionalSurvival,
    grid: &LossGrid,
    floor: f64,
) -> Result<f64> {
    let sv = s.predict(obs.a, &obs.w, grid.points());
    let gy = g.predict_at(obs.a, &obs.w, obs.y);
    check_finite(&sv, "survival")?;
    check_finite(&[gy], "censoring")?;
    let d = f64::from(obs.delta);
    let inv = 1.0 / gy.max(floor);
    Ok(grid.weight()
        * grid
            .points()
            .iter()
            .zip(&sv)
            .map(|(&t, &st)| {
                let jump = if obs.y <= t { d * inv } else { 0.0 };
                st * (st - 2.0 * (1.0 - jump))
            })
            .sum::<f64>())
}

/// Censoring-survival loss for one observation. Note the strict `y < t`.
pub fn loss_m(
    obs: &Observation,
    g: &dyn ConditionalSurvival,
    s: &dyn ConditionalSurvival,
    grid: &LossGrid,
    floor: f64,
) -> Result<f64> {
    let gv = g.predict(obs.a, &obs.w, grid.points());
    let sy = s.predict_at(obs.a, &obs.w, obs.y);
    check_finite(&gv, "censoring")?;
    check_finite(&[sy], "survival")?;
    let c = 1.0 - f64::from(obs.delta);
    let inv = 1.0 / sy.max(floor);
    Ok(grid.weight()
        * grid
            .points()
            .iter()
            .zip(&gv)
            .map(|(&t, &gt)| {
                let jump = if obs.y < t { c * inv } else { 0.0 };
                gt * (gt - 2.0 * (1.0 - jump))
            })
            .sum::<f64>())
}

/// Convex combination of fitted candidates.
#[derive(Debug, Clone)]
pub struct EnsembleSurvival {
    name: String,
    target: Target,
    names: Vec<String>,
    weights: Vec<f64>,
    members: Vec<Option<Arc<dyn ConditionalSurvival>>>,
}

impl EnsembleSurvival {
    /// `members[j]` may be `None` only where `weights[j] == 0`.
    pub fn new(
        target: Target,
        names: Vec<String>,
        weights: Vec<f64>,
        members: Vec<Option<Arc<dyn ConditionalSurvival>>>,
    ) -> Result<Self> {
        if names.len() != weights.len() || weights.len() != members.len() {
            return Err(Error::Argument("ensemble names, weights and members differ in length".into()));
        }
        if weights.iter().zip(&members).any(|(w, m)| *w > 0.0 && m.is_none()) {
            return Err(Error::Argument("positive-weight ensemble member is missing".into()));
        }
        let name = match target {
            Target::Event => "ensemble_s",
            Target::Censoring => "ensemble_g",
        };
        Ok(EnsembleSurvival {
            name: name.into(),
            target,
            names,
            weights,
            members,
        })
    }

    /// Single fitted model with weight one.
    pub fn single(model: Arc<dyn ConditionalSurvival>) -> Self {
        EnsembleSurvival {
            name: model.name().to_string(),
            target: model.target(),
            names: vec![model.name().to_string()],
            weights: vec![1.0],
            members: vec![Some(model)],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn candidate_names(&self) -> &[String] {
        &self.names
    }
}

impl ConditionalSurvival for EnsembleSurvival {
    fn name(&self) -> &str {
        &self.name
    }

    fn target(&self) -> Target {
        self.target
    }

    fn predict_into(&self, a: u8, w: &[f64], times: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut buf = vec![0.0; times.len()];
        for (wt, m) in self.weights.iter().zip(&self.members) {
            if *wt <= 0.0 {
                continue;
            }
            let m = m.as_ref().expect("checked at construction");
            m.predict_into(a, w, times, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += wt * b;
            }
        }
        for o in out.iter_mut() {
            *o = o.clamp(0.0, 1.0);
        }
    }

    fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "learner": self.name,
            "target": self.target,
            "weights": self.names.iter().zip(&self.weights)
                .map(|(n, w)| serde_json::json!({"candidate": n, "weight": w}))
                .collect::<Vec<_>>(),
            "members": self.members.iter().flatten().map(|m| m.summary()).collect::<Vec<_>>(),
        })
    }
}

/// Settings for the survival ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperLearnerConfig {
    /// Cross-validation folds used to score candidates.
    pub folds: usize,
    /// Sup-norm change below which the alternation stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of Riemann points for the loss integrals.
    pub grid_points: usize,
    /// Lower bound for `G(y)` and `S(y)` inside the losses.
    pub loss_floor: f64,
    pub seed: u64,
}

impl Default for SuperLearnerConfig {
    fn default() -> Self {
        SuperLearnerConfig {
            folds: 5,
            tol: 1e-3,
            max_iter: 20,
            grid_points: 100,
            loss_floor: LOSS_FLOOR,
            seed: 1,
        }
    }
}
