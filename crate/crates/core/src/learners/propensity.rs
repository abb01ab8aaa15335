use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cox::diverging_ray;
use super::Design;
use crate::error::{Error, Result};
use crate::linalg::{newton_maximize, solve_spd, Eval, NewtonOptions};
use crate::survdata::Dataset;

/// Propensity predictions are clamped to `[PROPENSITY_FLOOR, 1 - PROPENSITY_FLOOR]`.
pub const PROPENSITY_FLOOR: f64 = 0.01;

const LOGISTIC_CAP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityKind {
    Logistic,
    MarginalMean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropensitySpec {
    pub kind: PropensityKind,
    pub covariate_subset: Option<Vec<usize>>,
}

impl PropensitySpec {
    pub fn new(kind: PropensityKind) -> Self {
        PropensitySpec {
            kind,
            covariate_subset: None,
        }
    }

    pub fn with_covariates(mut self, subset: Vec<usize>) -> Self {
        self.covariate_subset = Some(subset);
        self
    }

    pub fn default_library() -> Vec<PropensitySpec> {
        vec![
            PropensitySpec::new(PropensityKind::MarginalMean),
            PropensitySpec::new(PropensityKind::Logistic),
        ]
    }
}

impl std::fmt::Display for PropensitySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            PropensityKind::Logistic => write!(f, "logistic")?,
            PropensityKind::MarginalMean => write!(f, "mean")?,
        }
        if let Some(sub) = &self.covariate_subset {
            let parts: Vec<String> = sub.iter().map(|j| j.to_string()).collect();
            write!(f, "@{}", parts.join(","))?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PropensitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, subset) = match s.split_once('@') {
            Some((h, sub)) => (
                h,
                Some(
                    sub.split(',')
                        .filter(|p| !p.trim().is_empty())
                        .map(|p| {
                            p.trim()
                                .parse::<usize>()
                                .map_err(|_| Error::Config(format!("bad covariate index in '{s}'")))
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
            ),
            None => (s, None),
        };
        let kind = match head {
            "logistic" | "glm" => PropensityKind::Logistic,
            "mean" | "marginal_mean" => PropensityKind::MarginalMean,
            _ => return Err(Error::Config(format!("unknown propensity learner '{s}'"))),
        };
        Ok(PropensitySpec {
            kind,
            covariate_subset: subset,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticFit {
    design: Design,
    beta: Vec<f64>,
    /// Coefficients hit the norm cap (separation).
    pub capped: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn raw_coefficients(&self) -> Vec<(String, f64)> {
        self.design.raw_coefficients(&self.beta)
    }
}

/// A fitted model for `P(A = 1 | W = w)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FittedPropensity {
    MarginalMean { p: f64 },
    Logistic(LogisticFit),
    Ensemble {
        names: Vec<String>,
        weights: Vec<f64>,
        members: Vec<FittedPropensity>,
    },
}

impl FittedPropensity {
    /// `P(A = 1 | w)`, clamped into `[PROPENSITY_FLOOR, 1 - PROPENSITY_FLOOR]`.
    pub fn predict(&self, w: &[f64]) -> f64 {
        self.predict_unclamped(w).clamp(PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR)
    }

    fn predict_unclamped(&self, w: &[f64]) -> f64 {
        match self {
            FittedPropensity::MarginalMean { p } => *p,
            FittedPropensity::Logistic(fit) => expit(fit.design.linear_predictor(0, w, &fit.beta)),
            FittedPropensity::Ensemble { weights, members, .. } => weights
                .iter()
                .zip(members)
                .map(|(a, m)| a * m.predict(w))
                .sum(),
        }
    }

    /// Probability of the given arm.
    pub fn predict_arm(&self, a: u8, w: &[f64]) -> f64 {
        let p = self.predict(w);
        if a == 1 {
            p
        } else {
            1.0 - p
        }
    }

    pub fn summary(&self) -> serde_json::Value {
        match self {
            FittedPropensity::MarginalMean { p } => json!({"learner": "mean", "p": p}),
            FittedPropensity::Logistic(fit) => {
                let coefs: serde_json::Map<String, serde_json::Value> =
                    fit.raw_coefficients().into_iter().map(|(k, v)| (k, json!(v))).collect();
                json!({
                    "learner": "logistic",
                    "coefficients": coefs,
                    "dropped_columns": fit.design.dropped,
                    "capped": fit.capped,
                    "iterations": fit.iterations,
                })
            }
            FittedPropensity::Ensemble { names, weights, members } => json!({
                "learner": "ensemble",
                "weights": names.iter().zip(weights).map(|(n, w)| json!({"candidate": n, "weight": w})).collect::<Vec<_>>(),
                "members": members.iter().map(|m| m.summary()).collect::<Vec<_>>(),
            }),
        }
    }
}

pub(crate) fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) struct LogisticResult {
    pub beta: Vec<f64>,
    pub capped: bool,
    pub iterations: usize,
    /// Standard errors from the observed information, when invertible.
    pub se: Option<Vec<f64>>,
}

/// Logistic regression of `y` on the row-major `n x p` matrix `x` by
/// Newton/IRLS on the mean log-likelihood, with a coefficient norm cap.
pub(crate) fn logistic_irls(learner: &str, x: &[f64], y: &[f64], p: usize) -> Result<LogisticResult> {
    let n = y.len();
    let nf = n as f64;
    let eval = |beta: &[f64]| {
        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        for i in 0..n {
            let xi = &x[i * p..(i + 1) * p];
            let eta: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
            let mu = expit(eta);
            value += y[i] * eta - log1p_exp(eta);
            let wgt = mu * (1.0 - mu);
            for j in 0..p {
                grad[j] += (y[i] - mu) * xi[j];
                for k in 0..=j {
                    hess[j * p + k] -= wgt * xi[j] * xi[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                hess[k * p + j] = hess[j * p + k];
            }
        }
        Eval {
            value: value / nf,
            grad: grad.into_iter().map(|v| v / nf).collect(),
            hess: hess.into_iter().map(|v| v / nf).collect(),
        }
    };
    let opts = NewtonOptions {
        max_norm: Some(LOGISTIC_CAP),
        ..NewtonOptions::default()
    };
    let mut res = newton_maximize(learner, vec![0.0; p], &opts, &eval)?;
    if !res.capped && diverging_ray(&res.x, res.value, |b| eval(b).value) {
        let norm = res.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in res.x.iter_mut() {
            *v *= LOGISTIC_CAP / norm;
        }
        res.capped = true;
    }
    let se = if res.capped {
        None
    } else {
        let info: Vec<f64> = eval(&res.x).hess.iter().map(|h| -h * nf).collect();
        (0..p)
            .map(|j| {
                let mut e = vec![0.0; p];
                e[j] = 1.0;
                solve_spd(&info, p, &e).map(|col| col[j].max(0.0).sqrt())
            })
            .collect::<Option<Vec<f64>>>()
    };
    Ok(LogisticResult {
        beta: res.x,
        capped: res.capped,
        iterations: res.iterations,
        se,
    })
}

/// Main-terms logistic regression of A on W.
pub fn fit_logistic(data: &Dataset, spec: &PropensitySpec) -> Result<FittedPropensity> {
    let treated = data.count_arm(1);
    if treated == 0 || treated == data.len() {
        return Err(Error::fit("logistic", "treatment is constant in the training data"));
    }
    let (design, x) = Design::fit(data, spec.covariate_subset.as_deref(), true, false, false)?;
    let y: Vec<f64> = data.observations().iter().map(|o| f64::from(o.a)).collect();
    let res = logistic_irls("logistic", &x, &y, design.p())?;
    Ok(FittedPropensity::Logistic(LogisticFit {
        design,
        beta: res.beta,
        capped: res.capped,
        iterations: res.iterations,
    }))
}

/// Constant predictor equal to the treated fraction.
pub fn fit_marginal_mean(data: &Dataset) -> FittedPropensity {
    let p = data.count_arm(1) as f64 / data.len().max(1) as f64;
    FittedPropensity::MarginalMean {
        p: p.clamp(PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR),
    }
}

pub fn fit_propensity(data: &Dataset, spec: &PropensitySpec) -> Result<FittedPropensity> {
    match spec.kind {
        PropensityKind::Logistic => fit_logistic(data, spec),
        PropensityKind::MarginalMean => Ok(fit_marginal_mean(data)),
    }
}
