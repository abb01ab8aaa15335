use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ConditionalSurvival, Design, SurvivalLearnerSpec};
use crate::error::{Error, Result};
use crate::hazard::{Continuity, Target};
use crate::linalg::{newton_maximize, Eval, NewtonOptions};
use crate::survdata::Dataset;

/// Coefficient norm (standardized scale) beyond which the partial
/// likelihood is treated as monotone.
const MONOTONE_CAP: f64 = 30.0;

/// Cox model with Breslow baseline: `S(t | x) = exp(-L0(t) exp(x'beta))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    name: String,
    target: Target,
    design: Design,
    beta: Vec<f64>,
    jump_times: Vec<f64>,
    cum_baseline: Vec<f64>,
    pub iterations: usize,
}

impl CoxFit {
    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    /// Coefficients on the original covariate scale.
    pub fn raw_coefficients(&self) -> Vec<(String, f64)> {
        self.design.raw_coefficients(&self.beta)
    }

    pub fn baseline(&self) -> (&[f64], &[f64]) {
        (&self.jump_times, &self.cum_baseline)
    }
}

impl ConditionalSurvival for CoxFit {
    fn name(&self) -> &str {
        &self.name
    }

    fn target(&self) -> Target {
        self.target
    }

    fn predict_into(&self, a: u8, w: &[f64], times: &[f64], out: &mut [f64]) {
        let risk = self.design.linear_predictor(a, w, &self.beta).exp();
        let left = self.target.continuity() == Continuity::Left;
        for (o, &t) in out.iter_mut().zip(times) {
            let k = if left {
                self.jump_times.partition_point(|&s| s < t)
            } else {
                self.jump_times.partition_point(|&s| s <= t)
            };
            *o = if k == 0 { 1.0 } else { (-self.cum_baseline[k - 1] * risk).exp() };
        }
    }

    fn summary(&self) -> serde_json::Value {
        let coefs: serde_json::Map<String, serde_json::Value> =
            self.raw_coefficients().into_iter().map(|(k, v)| (k, json!(v))).collect();
        json!({
            "learner": self.name,
            "target": self.target,
            "coefficients": coefs,
            "dropped_columns": self.design.dropped,
            "baseline_jumps": self.jump_times.len(),
            "iterations": self.iterations,
        })
    }
}

/// Tied-time groups, in decreasing time order. Within a group, members that
/// must enter the risk set *after* the group's contributions are computed
/// come last (`late` of them).
struct Group {
    members: Vec<usize>,
    hits: usize,
    late: usize,
}

fn groups(data: &Dataset, target: Target) -> Vec<Group> {
    let obs = data.observations();
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by(|&i, &j| obs[j].y.partial_cmp(&obs[i].y).expect("finite times"));
    let mut out = Vec::new();
    let mut s = 0;
    while s < order.len() {
        let u = obs[order[s]].y;
        let mut e = s;
        while e < order.len() && obs[order[e]].y == u {
            e += 1;
        }
        let slice = &order[s..e];
        let (mut hit, mut miss): (Vec<usize>, Vec<usize>) =
            slice.iter().partition(|&&i| target.indicator(obs[i].delta));
        let hits = hit.len();
        let members;
        let late;
        match target {
            Target::Event => {
                hit.append(&mut miss);
                members = hit;
                late = 0;
            }
            // Events at u are processed first, so they are not at risk of
            // censoring at u.
            Target::Censoring => {
                late = miss.len();
                hit.append(&mut miss);
                members = hit;
            }
        }
        out.push(Group { members, hits, late });
        s = e;
    }
    out
}

/// True when the objective keeps increasing along the ray through a
/// large maximizer, i.e. the gradient test stopped on a flat tail.
pub(crate) fn diverging_ray(x: &[f64], value: f64, f: impl Fn(&[f64]) -> f64) -> bool {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 5.0 {
        return false;
    }
    let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    f(&doubled) >= value - 1e-12 * (1.0 + value.abs())
}

/// Breslow partial-likelihood Cox regression for the event or censoring
/// time. Errors when the partial likelihood has no finite maximizer.
pub fn fit_cox_breslow(data: &Dataset, target: Target, spec: &SurvivalLearnerSpec) -> Result<CoxFit> {
    let name = spec.to_string();
    let n = data.len();
    if !data.observations().iter().any(|o| target.indicator(o.delta)) {
        return Err(Error::fit(&name, "no uncensored observations for this target"));
    }
    let (design, x) = Design::fit(
        data,
        spec.covariate_subset.as_deref(),
        false,
        true,
        spec.include_treatment_interactions,
    )?;
    let p = design.p();
    let grp = groups(data, target);
    let nf = n as f64;

    let eval = |beta: &[f64]| {
        let lp: Vec<f64> = (0..n)
            .map(|i| x[i * p..(i + 1) * p].iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect();
        let m = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        let add = |i: usize, s0: &mut f64, s1: &mut [f64], s2: &mut [f64]| {
            let r = (lp[i] - m).exp();
            let xi = &x[i * p..(i + 1) * p];
            *s0 += r;
            for j in 0..p {
                s1[j] += r * xi[j];
                for k in 0..=j {
                    s2[j * p + k] += r * xi[j] * xi[k];
                }
            }
        };
        for g in &grp {
            let early = g.members.len() - g.late;
            for &i in &g.members[..early] {
                add(i, &mut s0, &mut s1, &mut s2);
            }
            if g.hits > 0 {
                let d = g.hits as f64;
                for &i in &g.members[..g.hits] {
                    value += lp[i];
                    for j in 0..p {
                        grad[j] += x[i * p + j];
                    }
                }
                value -= d * (s0.ln() + m);
                for j in 0..p {
                    grad[j] -= d * s1[j] / s0;
                    for k in 0..=j {
                        hess[j * p + k] -= d * (s2[j * p + k] / s0 - s1[j] * s1[k] / (s0 * s0));
                    }
                }
            }
            for &i in &g.members[early..] {
                add(i, &mut s0, &mut s1, &mut s2);
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

    let (beta, iterations) = if p == 0 {
        (Vec::new(), 0)
    } else {
        let opts = NewtonOptions {
            max_norm: Some(MONOTONE_CAP),
            ..NewtonOptions::default()
        };
        let res = newton_maximize(&name, vec![0.0; p], &opts, &eval)?;
        if res.capped || diverging_ray(&res.x, res.value, |b| eval(b).value) {
            return Err(Error::fit(
                &name,
                "monotone partial likelihood: coefficients diverge (no finite maximizer)",
            ));
        }
        (res.x, res.iterations)
    };

    // Breslow baseline, swept in decreasing time and then reversed.
    let risk: Vec<f64> = (0..n)
        .map(|i| x[i * p..(i + 1) * p].iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    let obs = data.observations();
    let mut s0 = 0.0;
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    for g in &grp {
        let early = g.members.len() - g.late;
        for &i in &g.members[..early] {
            s0 += risk[i];
        }
        if g.hits > 0 {
            jumps.push((obs[g.members[0]].y, g.hits as f64 / s0));
        }
        for &i in &g.members[early..] {
            s0 += risk[i];
        }
    }
    jumps.reverse();
    let mut cum = 0.0;
    let mut jump_times = Vec::with_capacity(jumps.len());
    let mut cum_baseline = Vec::with_capacity(jumps.len());
    for (t, dl) in jumps {
        cum += dl;
        jump_times.push(t);
        cum_baseline.push(cum);
    }
    Ok(CoxFit {
        name,
        target,
        design,
        beta,
        jump_times,
        cum_baseline,
        iterations,
    })
}
