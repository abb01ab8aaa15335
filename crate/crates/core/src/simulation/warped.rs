//! A learner whose model family contains the simulated event law, and the
//! derived covariates under which the censoring and treatment laws become
//! main-terms models.

use std::sync::Arc;

use serde_json::json;

use super::{softplus, warp, DgpConfig};
use crate::error::{Error, Result};
use crate::hazard::Target;
use crate::learners::{ConditionalSurvival, SurvivalLearner};
use crate::linalg::{newton_maximize, Eval, NewtonOptions};
use crate::survdata::{Dataset, Observation};

/// Names of the columns appended by [`augment_features`], in order.
pub const AUGMENTED_NAMES: [&str; 6] = ["abs_w1_60", "log_w2", "sp_cens", "sp_age", "sp_bmi", "pi_feature"];

/// Appends `|w1 - 60|`, `log w2`, `log(1 + exp((30 - w1)/4))`,
/// `log(1 + exp((w1 - 55)/5))`, `log(1 + exp((w2 - 30)/3))` and
/// `log(1 + exp(-20 + w1/10) + exp(-3 + w3/2))` to the raw `(w1, w2, w3)`.
pub fn augment_features(data: &Dataset) -> Result<Dataset> {
    if data.dim() < 3 {
        return Err(Error::Argument("feature augmentation expects (w1, w2, w3) in the first three columns".into()));
    }
    let obs = data
        .observations()
        .iter()
        .map(|o| {
            let w = &o.w;
            let mut x = w.clone();
            x.extend([
                (w[0] - 60.0).abs(),
                w[1].ln(),
                softplus((30.0 - w[0]) / 4.0),
                softplus((w[0] - 55.0) / 5.0),
                softplus((w[1] - 30.0) / 3.0),
                (1.0 + (-20.0 + w[0] / 10.0).exp() + (-3.0 + w[2] / 2.0).exp()).ln(),
            ]);
            Observation::new(x, o.a, o.y, o.delta)
        })
        .collect();
    let mut names = data.covariate_names().to_vec();
    names.extend(AUGMENTED_NAMES.iter().map(|s| s.to_string()));
    Dataset::new_unchecked_arms(obs, data.tau(), names)
}

/// Event-time model `S(t|0,w) = exp(-lambda(w) t)`,
/// `S(t|1,w) = exp(-lambda(w) phi(t,w))` with
/// `log lambda = b0 + b1 |w1 - 60| + b2 log w2 + b3 w3` and the warp's
/// `gamma(w) = expit(g0 + sp_age/2 + sp_bmi/4)`; `r` and `iota(w)` as in the
/// design. Reads raw covariates from columns 0..3.
#[derive(Debug, Clone)]
pub struct WarpedExponential {
    pub r: f64,
}

impl Default for WarpedExponential {
    fn default() -> Self {
        WarpedExponential { r: DgpConfig::default().r }
    }
}

#[derive(Debug, Clone)]
pub struct WarpedExponentialFit {
    pub beta: [f64; 4],
    pub g0: f64,
    r: f64,
    pub iterations: usize,
}

fn features(w: &[f64]) -> [f64; 4] {
    [1.0, (w[0] - 60.0).abs(), w[1].ln(), w[2]]
}

fn gamma_offset(w: &[f64]) -> f64 {
    0.5 * softplus((w[0] - 55.0) / 5.0) + 0.25 * softplus((w[1] - 30.0) / 3.0)
}

fn iota(w: &[f64]) -> f64 {
    (2.0 - 0.5 * softplus((w[0] - 55.0) / 5.0) - 0.1 * softplus((w[1] - 30.0) / 3.0)).exp()
}

/// `(phi, phi', d phi / d gamma, d phi' / d gamma)` at `t`; both are linear
/// in gamma on every piece.
fn warp_parts(t: f64, r: f64, g: f64, io: f64) -> (f64, f64, f64, f64) {
    let s = r + io;
    let phi = warp(t, r, g, io);
    if t <= r {
        (phi, 1.0 - t * (1.0 - g) / r, t * t / (2.0 * r), t / r)
    } else if t <= s {
        (phi, g, t - r / 2.0, 1.0)
    } else {
        let q = s * s / (t * t);
        (phi, 1.0 - (1.0 - g) * q, r / 2.0 + io + s - s * s / t, q)
    }
}

impl WarpedExponentialFit {
    fn gamma(&self, w: &[f64]) -> f64 {
        1.0 / (1.0 + (-(self.g0 + gamma_offset(w))).exp())
    }

    fn lambda(&self, w: &[f64]) -> f64 {
        let x = features(w);
        x.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>().exp()
    }
}

impl ConditionalSurvival for WarpedExponentialFit {
    fn name(&self) -> &str {
        "warped_exp"
    }

    fn target(&self) -> Target {
        Target::Event
    }

    fn predict_into(&self, a: u8, w: &[f64], times: &[f64], out: &mut [f64]) {
        let lam = self.lambda(w);
        let (g, io) = (self.gamma(w), iota(w));
        for (o, &t) in out.iter_mut().zip(times) {
            let u = if a == 0 { t } else { warp(t.max(0.0), self.r, g, io) };
            *o = (-lam * u).exp();
        }
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "learner": "warped_exp",
            "beta": self.beta,
            "g0": self.g0,
            "iterations": self.iterations,
        })
    }
}

fn loglik(data: &Dataset, r: f64, theta: &[f64]) -> Eval {
    let n = data.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; 5];
    let mut hess = vec![0.0; 25];
    for o in data.observations() {
        let x = features(&o.w);
        let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        let lam = eta.exp();
        let d = f64::from(o.delta);
        let (phi, dphi, phi_g, dphi_g, q, gam) = if o.a == 0 {
            (o.y, 1.0, 0.0, 0.0, 0.0, 0.0)
        } else {
            let gam = 1.0 / (1.0 + (-(theta[4] + gamma_offset(&o.w))).exp());
            let (p, dp, pg, dpg) = warp_parts(o.y, r, gam, iota(&o.w));
            (p, dp, pg, dpg, gam * (1.0 - gam), gam)
        };
        value += d * (eta + dphi.ln()) - lam * phi;
        let gb = d - lam * phi;
        for k in 0..4 {
            grad[k] += gb * x[k];
            for l in 0..4 {
                hess[k * 5 + l] -= lam * phi * x[k] * x[l];
            }
        }
        if o.a == 1 {
            let ratio = dphi_g / dphi;
            grad[4] += q * (d * ratio - lam * phi_g);
            for k in 0..4 {
                let c = -lam * phi_g * q * x[k];
                hess[k * 5 + 4] += c;
                hess[4 * 5 + k] += c;
            }
            hess[24] += -q * q * d * ratio * ratio + q * (1.0 - 2.0 * gam) * (d * ratio - lam * phi_g);
        }
    }
    Eval {
        value: value / n,
        grad: grad.into_iter().map(|g| g / n).collect(),
        hess: hess.into_iter().map(|h| h / n).collect(),
    }
}

impl SurvivalLearner for WarpedExponential {
    fn name(&self) -> String {
        "warped_exp".into()
    }

    fn fit(&self, data: &Dataset, target: Target) -> Result<Arc<dyn ConditionalSurvival>> {
        if target != Target::Event {
            return Err(Error::fit("warped_exp", "models event times only"));
        }
        if data.dim() < 3 {
            return Err(Error::fit("warped_exp", "needs covariates (w1, w2, w3)"));
        }
        let events = data.observations().iter().filter(|o| o.delta == 1).count() as f64;
        let total: f64 = data.observations().iter().map(|o| o.y).sum();
        if events == 0.0 || data.count_arm(1) == 0 {
            return Err(Error::fit("warped_exp", "needs events and treated observations"));
        }
        let x0 = vec![(events / total).ln(), 0.0, 0.0, 0.0, 0.0];
        let res = newton_maximize("warped_exp", x0, &NewtonOptions::default(), |th| loglik(data, self.r, th))?;
        let b = &res.x;
        Ok(Arc::new(WarpedExponentialFit {
            beta: [b[0], b[1], b[2], b[3]],
            g0: b[4],
            r: self.r,
            iterations: res.iterations,
        }))
    }
}
