use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ConditionalSurvival, Design, SurvivalLearnerSpec};
use crate::error::{Error, Result};
use crate::hazard::Target;
use crate::linalg::{newton_maximize, Eval, NewtonOptions};
use crate::survdata::Dataset;

/// Parametric families. With linear predictor `eta = x'beta` and shape
/// `k = exp(s)`:
/// exponential `S(t) = exp(-e^eta t)`, Weibull `S(t) = exp(-e^eta t^k)`,
/// log-logistic `S(t) = 1 / (1 + (t / e^eta)^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Exponential,
    Weibull,
    LogLogistic,
}

impl Family {
    pub fn short_name(self) -> &'static str {
        match self {
            Family::Exponential => "exp",
            Family::Weibull => "weibull",
            Family::LogLogistic => "loglogistic",
        }
    }

    fn has_shape(self) -> bool {
        !matches!(self, Family::Exponential)
    }
}

const COEF_CAP: f64 = 50.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametricFit {
    name: String,
    family: Family,
    target: Target,
    design: Design,
    beta: Vec<f64>,
    log_shape: f64,
    pub capped: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Mean log-likelihood after each accepted Newton iterate.
    pub loglik_trace: Vec<f64>,
}

impl ParametricFit {
    pub fn shape(&self) -> f64 {
        self.log_shape.exp()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn survival(&self, eta: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let k = self.shape();
        match self.family {
            Family::Exponential => (-eta.exp() * t).exp(),
            Family::Weibull => (-(eta + k * t.ln()).exp()).exp(),
            Family::LogLogistic => {
                let z = k * (t.ln() - eta);
                1.0 / (1.0 + z.exp())
            }
        }
    }
}

impl ConditionalSurvival for ParametricFit {
    fn name(&self) -> &str {
        &self.name
    }

    fn target(&self) -> Target {
        self.target
    }

    fn predict_into(&self, a: u8, w: &[f64], times: &[f64], out: &mut [f64]) {
        let eta = self.design.linear_predictor(a, w, &self.beta);
        for (o, &t) in out.iter_mut().zip(times) {
            *o = self.survival(eta, t);
        }
    }

    fn summary(&self) -> serde_json::Value {
        let coefs: serde_json::Map<String, serde_json::Value> = self
            .design
            .raw_coefficients(&self.beta)
            .into_iter()
            .map(|(k, v)| (k, json!(v)))
            .collect();
        json!({
            "learner": self.name,
            "family": self.family,
            "target": self.target,
            "coefficients": coefs,
            "shape": self.shape(),
            "dropped_columns": self.design.dropped,
            "capped": self.capped,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
        })
    }
}

/// Per-observation log-likelihood and its derivatives in (eta, s).
struct Pointwise {
    l: f64,
    l_e: f64,
    l_ee: f64,
    l_s: f64,
    l_es: f64,
    l_ss: f64,
}

fn pointwise(family: Family, eta: f64, s: f64, log_y: f64, y: f64, d: f64) -> Pointwise {
    match family {
        Family::Exponential => {
            let u = eta.exp() * y;
            Pointwise {
                l: d * eta - u,
                l_e: d - u,
                l_ee: -u,
                l_s: 0.0,
                l_es: 0.0,
                l_ss: 0.0,
            }
        }
        Family::Weibull => {
            let k = s.exp();
            let kl = k * log_y;
            let u = (eta + kl).exp();
            Pointwise {
                l: d * (eta + s + (k - 1.0) * log_y) - u,
                l_e: d - u,
                l_ee: -u,
                l_s: d * (1.0 + kl) - u * kl,
                l_es: -u * kl,
                l_ss: d * kl - u * kl * (kl + 1.0),
            }
        }
        Family::LogLogistic => {
            let k = s.exp();
            let z = k * (log_y - eta);
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            let p = 1.0 / (1.0 + (-z).exp());
            let l_z = d - (1.0 + d) * p;
            let l_zz = -(1.0 + d) * p * (1.0 - p);
            Pointwise {
                l: d * (s - log_y + z) - (1.0 + d) * softplus,
                l_e: -k * l_z,
                l_ee: k * k * l_zz,
                l_s: d + z * l_z,
                l_es: -k * l_z - k * l_zz * z,
                l_ss: z * z * l_zz + z * l_z,
            }
        }
    }
}

/// Maximum-likelihood fit of a parametric survival regression for the
/// event (`Target::Event`) or censoring time.
pub fn fit_parametric_aft(
    data: &Dataset,
    family: Family,
    target: Target,
    spec: &SurvivalLearnerSpec,
) -> Result<ParametricFit> {
    fit_inner(data, family, target, spec, None)
}

pub(crate) fn fit_inner(
    data: &Dataset,
    family: Family,
    target: Target,
    spec: &SurvivalLearnerSpec,
    fixed_log_shape: Option<f64>,
) -> Result<ParametricFit> {
    let name = spec.to_string();
    let n = data.len();
    let obs = data.observations();
    let d: Vec<f64> = obs.iter().map(|o| f64::from(u8::from(target.indicator(o.delta)))).collect();
    let events: f64 = d.iter().sum();
    if events == 0.0 {
        return Err(Error::fit(&name, "no uncensored observations for this target"));
    }
    let y_max = obs.iter().map(|o| o.y).fold(0.0, f64::max);
    let floor = 1e-8 * y_max.max(1e-300);
    let y: Vec<f64> = obs.iter().map(|o| o.y.max(floor)).collect();
    let log_y: Vec<f64> = y.iter().map(|v| v.ln()).collect();

    let (design, x) = Design::fit(
        data,
        spec.covariate_subset.as_deref(),
        true,
        true,
        spec.include_treatment_interactions,
    )?;
    let p = design.p();
    let free_shape = family.has_shape() && fixed_log_shape.is_none();
    let dim = p + usize::from(free_shape);
    let fixed_s = fixed_log_shape.unwrap_or(0.0);

    let mut x0 = vec![0.0; dim];
    x0[0] = match family {
        Family::Exponential | Family::Weibull => (events / y.iter().sum::<f64>()).ln(),
        Family::LogLogistic => log_y.iter().sum::<f64>() / n as f64,
    };
    if family == Family::Weibull {
        if let Some(s) = fixed_log_shape {
            x0[0] = (events / y.iter().map(|v| v.powf(s.exp())).sum::<f64>()).ln();
        }
    }

    let nf = n as f64;
    let eval = |theta: &[f64]| {
        let beta = &theta[..p];
        let s = if free_shape { theta[p] } else { fixed_s };
        let mut value = 0.0;
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for i in 0..n {
            let xi = &x[i * p..(i + 1) * p];
            let eta: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
            let pw = pointwise(family, eta, s, log_y[i], y[i], d[i]);
            value += pw.l;
            for j in 0..p {
                grad[j] += pw.l_e * xi[j];
                for k in 0..=j {
                    hess[j * dim + k] += pw.l_ee * xi[j] * xi[k];
                }
            }
            if free_shape {
                grad[p] += pw.l_s;
                for j in 0..p {
                    hess[p * dim + j] += pw.l_es * xi[j];
                }
                hess[p * dim + p] += pw.l_ss;
            }
        }
        for j in 0..dim {
            for k in 0..j {
                hess[k * dim + j] = hess[j * dim + k];
            }
        }
        Eval {
            value: value / nf,
            grad: grad.into_iter().map(|g| g / nf).collect(),
            hess: hess.into_iter().map(|h| h / nf).collect(),
        }
    };
    let opts = NewtonOptions {
        max_norm: Some(COEF_CAP),
        ..NewtonOptions::default()
    };
    let res = newton_maximize(&name, x0, &opts, eval)?;
    let log_shape = if free_shape { res.x[p] } else { fixed_s };
    Ok(ParametricFit {
        name,
        family,
        target,
        design,
        beta: res.x[..p].to_vec(),
        log_shape,
        capped: res.capped,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        loglik_trace: res.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::SurvivalKind;
    use crate::survdata::Observation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(family: Family) -> SurvivalLearnerSpec {
        SurvivalLearnerSpec::new(SurvivalKind::ParametricAft { family })
    }

    fn one_arm(rows: &[(f64, u8)]) -> Dataset {
        let obs = rows.iter().map(|&(y, d)| Observation::new(vec![], 1, y, d)).collect();
        Dataset::new_unchecked_arms(obs, 10.0, vec![]).unwrap()
    }

    #[test]
    fn exponential_closed_form() {
        let data = one_arm(&[(2.0, 1), (3.0, 0)]);
        let fit = fit_parametric_aft(&data, Family::Exponential, Target::Event, &spec(Family::Exponential)).unwrap();
        for t in [0.0, 1.0, 4.5, 10.0] {
            assert!((fit.predict_at(1, &[], t) - (-t / 5.0).exp()).abs() < 1e-10);
        }
        // Censoring role swaps the indicator: one censoring over 5 time units.
        let g = fit_parametric_aft(&data, Family::Exponential, Target::Censoring, &spec(Family::Exponential)).unwrap();
        assert!((g.predict_at(1, &[], 2.0) - (-2.0 / 5.0f64).exp()).abs() < 1e-10);
        let none = one_arm(&[(2.0, 0), (3.0, 0)]);
        assert!(fit_parametric_aft(&none, Family::Weibull, Target::Event, &spec(Family::Weibull)).is_err());
    }

    fn exp_sample(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = (0..n)
            .map(|i| {
                let w = rng.random::<f64>();
                let t = -rng.random::<f64>().ln() / (0.4 * (0.5 * w).exp());
                let c = -rng.random::<f64>().ln() / 0.2;
                Observation::new(vec![w], (i % 2) as u8, t.min(c), u8::from(t <= c))
            })
            .collect();
        Dataset::new(obs, 5.0, vec!["w".into()]).unwrap()
    }

    #[test]
    fn weibull_with_unit_shape_matches_exponential() {
        let data = exp_sample(300, 1);
        let e = fit_parametric_aft(&data, Family::Exponential, Target::Event, &spec(Family::Exponential)).unwrap();
        let wb = fit_inner(&data, Family::Weibull, Target::Event, &spec(Family::Weibull), Some(0.0)).unwrap();
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 0.25).collect();
        for a in 0..2 {
            for w in [0.1, 0.7] {
                let pe = e.predict(a, &[w], &grid);
                let pw = wb.predict(a, &[w], &grid);
                for (x, y) in pe.iter().zip(&pw) {
                    assert!((x - y).abs() < 1e-4);
                }
            }
        }
        // The free-shape fit on exponential data lands near shape 1.
        let free = fit_parametric_aft(&data, Family::Weibull, Target::Event, &spec(Family::Weibull)).unwrap();
        assert!((free.shape() - 1.0).abs() < 0.2, "shape {}", free.shape());
    }

    #[test]
    fn newton_trace_is_monotone() {
        let data = exp_sample(200, 2);
        for family in [Family::Exponential, Family::Weibull, Family::LogLogistic] {
            let fit = fit_parametric_aft(&data, family, Target::Event, &spec(family).with_interactions()).unwrap();
            assert!(fit.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }

    fn loglogistic_loglik(y: &[f64], d: &[f64], log_alpha: f64, log_k: f64) -> f64 {
        let k = log_k.exp();
        y.iter()
            .zip(d)
            .map(|(&t, &di)| {
                let r = (t / log_alpha.exp()).powf(k);
                let log_s = -(1.0 + r).ln();
                let log_f = log_k + (k - 1.0) * t.ln() - k * log_alpha - 2.0 * (1.0 + r).ln();
                di * log_f + (1.0 - di) * log_s
            })
            .sum()
    }

    #[test]
    fn loglogistic_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<(f64, u8)> = (0..50)
            .map(|_| {
                let u: f64 = rng.random();
                let t = 2.0 * (u / (1.0 - u)).powf(1.0 / 1.8);
                let c = 8.0 * rng.random::<f64>();
                (t.min(c), u8::from(t <= c))
            })
            .collect();
        let data = one_arm(&rows);
        let fit = fit_parametric_aft(&data, Family::LogLogistic, Target::Event, &spec(Family::LogLogistic)).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let d: Vec<f64> = rows.iter().map(|r| f64::from(r.1)).collect();

        // Coarse grid, then successively finer grids around the best point.
        let (mut ca, mut ck, mut half) = (0.0, 0.0, 2.0);
        for _ in 0..12 {
            let mut best = (f64::NEG_INFINITY, ca, ck);
            for i in 0..=40 {
                for j in 0..=40 {
                    let la = ca - half + half * i as f64 / 20.0;
                    let lk = ck - half + half * j as f64 / 20.0;
                    let v = loglogistic_loglik(&y, &d, la, lk);
                    if v > best.0 {
                        best = (v, la, lk);
                    }
                }
            }
            ca = best.1;
            ck = best.2;
            half /= 5.0;
        }
        assert!((fit.coefficients()[0] - ca).abs() < 1e-3, "{} vs {}", fit.coefficients()[0], ca);
        assert!((fit.shape().ln() - ck).abs() < 1e-3);
    }
}
