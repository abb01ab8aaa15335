use serde::{Deserialize, Serialize};
use serde_json::json;

use super::propensity::expit;
use super::{logistic_irls, ConditionalSurvival, Design, SurvivalKind, SurvivalLearnerSpec};
use crate::error::{Error, Result};
use crate::hazard::Target;
use crate::survdata::Dataset;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum BinHazard {
    /// No events among those at risk.
    Zero,
    /// Every subject at risk had the event.
    One,
    Logistic {
        beta: Vec<f64>,
        se: Option<Vec<f64>>,
        capped: bool,
    },
}

/// Piecewise-constant discrete hazard. Bin `b` covers `(edges[b], edges[b+1]]`;
/// within a bin the survival decays geometrically in the fraction of the
/// bin elapsed, so the curve is continuous.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseFit {
    name: String,
    target: Target,
    design: Design,
    edges: Vec<f64>,
    bins: Vec<BinHazard>,
}

impl PiecewiseFit {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bins(&self) -> &[BinHazard] {
        &self.bins
    }

    fn hazard(&self, b: usize, a: u8, w: &[f64]) -> f64 {
        match &self.bins[b] {
            BinHazard::Zero => 0.0,
            BinHazard::One => 1.0,
            BinHazard::Logistic { beta, .. } => expit(self.design.linear_predictor(a, w, beta)),
        }
    }
}

impl ConditionalSurvival for PiecewiseFit {
    fn name(&self) -> &str {
        &self.name
    }

    fn target(&self) -> Target {
        self.target
    }

    fn predict_into(&self, a: u8, w: &[f64], times: &[f64], out: &mut [f64]) {
        let h: Vec<f64> = (0..self.bins.len()).map(|b| self.hazard(b, a, w)).collect();
        for (o, &t) in out.iter_mut().zip(times) {
            let mut s = 1.0;
            for (b, &hb) in h.iter().enumerate() {
                let (lo, hi) = (self.edges[b], self.edges[b + 1]);
                if t <= lo {
                    break;
                }
                if t >= hi {
                    s *= 1.0 - hb;
                } else {
                    let frac = (t - lo) / (hi - lo);
                    s *= (1.0 - hb).powf(frac);
                    break;
                }
            }
            *o = s;
        }
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "learner": self.name,
            "target": self.target,
            "edges": self.edges,
            "columns": self.design.names(),
            "bins": self.bins,
        })
    }
}

/// Bin edges `0 = e_0 < e_1 < ... < e_m = max min(y, tau)` at empirical
/// quantiles of `min(y, tau)`; duplicated quantiles collapse.
fn quantile_edges(data: &Dataset, bins: usize) -> Vec<f64> {
    let mut z: Vec<f64> = data.observations().iter().map(|o| o.y.min(data.tau())).collect();
    z.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let n = z.len();
    let mut edges = vec![0.0];
    for b in 1..bins {
        let k = (b * n).div_ceil(bins).max(1) - 1;
        edges.push(z[k]);
    }
    edges.push(z[n - 1]);
    edges.dedup();
    let mut clean = vec![0.0];
    clean.extend(edges.into_iter().filter(|&e| e > 0.0));
    clean
}

/// Piecewise-constant hazard model: one logistic regression per bin of the
/// in-bin event indicator among subjects still at risk at the bin start.
pub fn fit_piecewise_hazard(data: &Dataset, target: Target, spec: &SurvivalLearnerSpec) -> Result<PiecewiseFit> {
    let name = spec.to_string();
    let SurvivalKind::PiecewiseHazard { bins } = spec.kind else {
        return Err(Error::Argument(format!("{name} is not a piecewise hazard learner")));
    };
    if bins == 0 {
        return Err(Error::Argument("piecewise hazard needs at least one bin".into()));
    }
    let mut edges = quantile_edges(data, bins);
    if edges.len() < 2 {
        return Err(Error::fit(&name, "all follow-up times are zero"));
    }
    let obs = data.observations();
    // Merge bins with an empty risk set into their left neighbour.
    let mut b = 1;
    while b + 1 < edges.len() {
        let lo = edges[b];
        if obs.iter().any(|o| o.y > lo) {
            b += 1;
        } else {
            edges.remove(b);
        }
    }

    let (design, x) = Design::fit(
        data,
        spec.covariate_subset.as_deref(),
        true,
        true,
        spec.include_treatment_interactions,
    )?;
    let p = design.p();
    let mut fitted = Vec::with_capacity(edges.len() - 1);
    for b in 0..edges.len() - 1 {
        let (lo, hi) = (edges[b], edges[b + 1]);
        let at_risk: Vec<usize> = (0..obs.len()).filter(|&i| obs[i].y > lo).collect();
        let outcome: Vec<f64> = at_risk
            .iter()
            .map(|&i| f64::from(u8::from(obs[i].y <= hi && target.indicator(obs[i].delta))))
            .collect();
        let events: f64 = outcome.iter().sum();
        let hazard = if events == 0.0 {
            BinHazard::Zero
        } else if events == outcome.len() as f64 {
            BinHazard::One
        } else {
            let mut xb = Vec::with_capacity(at_risk.len() * p);
            for &i in &at_risk {
                xb.extend_from_slice(&x[i * p..(i + 1) * p]);
            }
            let res = logistic_irls(&name, &xb, &outcome, p)?;
            BinHazard::Logistic {
                beta: res.beta,
                se: res.se,
                capped: res.capped,
            }
        };
        fitted.push(hazard);
    }
    Ok(PiecewiseFit {
        name,
        target,
        design,
        edges,
        bins: fitted,
    })
}
