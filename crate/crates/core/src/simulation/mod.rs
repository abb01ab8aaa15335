//! Simulation design with known counterfactual truth, a G-computation
//! comparator, and the Monte Carlo harness.
//!
//! Covariates: `W1 = 20 + 60 Beta(1.1, 1.1)`,
//! `W2 = 18 + 32 Beta(1.5 + w1/20, 6)`, `W3 = 10 Beta(1.5 + |w1 - 50|/20, 3)`.
//! Treatment: `logit P(A=1|w) = -1 + log(1 + exp(-20 + w1/10) + exp(-3 + w3/2))`.
//! Censoring: exponential with rate
//! `exp(beta1 + 0.3a + log(1 + exp((30 - w1)/4)) + w3/4)`.
//! Control events: exponential with rate
//! `lambda0(w) = exp(beta0 - |w1 - 60|/10 + 2 log w2 + w3/2)`.
//! Treated events: `S(t|1,w) = S(phi(t,w)|0,w)` for a time warp `phi` whose
//! slope ramps from 1 to `gamma(w)` over `r` months, stays there for
//! `iota(w)` months, then recovers towards 1.

mod comparator;
mod study;
mod warped;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survdata::{Dataset, Observation};

pub use comparator::{marginalized_cox, MarginalCoxResult};
pub use study::{
    cf_library, replicate_dataset, run_study, summarize, PARAMETERS, write_summary_csv, McRow, McSummary, ReplicateRecord, StudyConfig, StudyEstimator,
};
pub use warped::{augment_features, WarpedExponential, WarpedExponentialFit, AUGMENTED_NAMES};

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Constants of the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub seed: u64,
    /// Intercept of the control-arm event log-rate.
    pub beta0: f64,
    /// Intercept of the censoring log-rate.
    pub beta1_cens: f64,
    /// Ramp-up period of the treatment effect (months).
    pub r: f64,
    /// Intercept inside `gamma(w)`.
    pub gamma_const: f64,
    pub tau: f64,
    /// Replace `gamma(w)` by 1 so that both arms share one event law.
    pub null_effect: bool,
}

/// Calibrated so that `E[P(T <= min(C, tau) | A=0, W)] = 0.15` (bisection on
/// 10^6 covariate draws, seed 2024).
pub const CALIBRATED_BETA0: f64 = -12.238_476_141_6;
/// Calibrated so that the risk ratio at `t = 12` is 0.70, given
/// [`CALIBRATED_BETA0`].
pub const CALIBRATED_GAMMA_CONST: f64 = -1.565_241_314_9;

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 500,
            seed: 1,
            beta0: CALIBRATED_BETA0,
            beta1_cens: -5.5,
            r: 1.5,
            gamma_const: CALIBRATED_GAMMA_CONST,
            tau: 12.0,
            null_effect: false,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Argument("simulated sample size must be positive".into()));
        }
        if !(self.r > 0.0) || !(self.tau > 0.0) {
            return Err(Error::Argument("r and tau must be positive".into()));
        }
        Ok(())
    }

    /// Same design with the treatment effect removed.
    pub fn null(&self) -> Self {
        DgpConfig {
            null_effect: true,
            ..self.clone()
        }
    }

    pub fn lambda0(&self, w: &[f64]) -> f64 {
        (self.beta0 - (w[0] - 60.0).abs() / 10.0 + 2.0 * w[1].ln() + w[2] / 2.0).exp()
    }

    pub fn censoring_rate(&self, w: &[f64], a: u8) -> f64 {
        (self.beta1_cens + 0.3 * f64::from(a) + softplus((30.0 - w[0]) / 4.0) + w[2] / 4.0).exp()
    }

    pub fn gamma(&self, w: &[f64]) -> f64 {
        if self.null_effect {
            return 1.0;
        }
        expit(self.gamma_const + 0.5 * softplus((w[0] - 55.0) / 5.0) + 0.25 * softplus((w[1] - 30.0) / 3.0))
    }

    pub fn iota(&self, w: &[f64]) -> f64 {
        (2.0 - 0.5 * softplus((w[0] - 55.0) / 5.0) - 0.1 * softplus((w[1] - 30.0) / 3.0)).exp()
    }

    /// Time warp of the treated arm.
    pub fn phi(&self, t: f64, w: &[f64]) -> f64 {
        warp(t, self.r, self.gamma(w), self.iota(w))
    }

    /// `S(t | a, w)` in closed form.
    pub fn conditional_survival(&self, t: f64, a: u8, w: &[f64]) -> f64 {
        let lam = self.lambda0(w);
        if a == 0 {
            (-lam * t).exp()
        } else {
            (-lam * self.phi(t, w)).exp()
        }
    }
}

/// Three-piece warp: quadratic ramp on `[0, r]`, slope `gamma` on
/// `[r, r + iota]`, then slope `1 - (1 - gamma) s^2 / t^2` with `s = r + iota`.
pub(crate) fn warp(t: f64, r: f64, gamma: f64, iota: f64) -> f64 {
    let s = r + iota;
    if t <= r {
        t - t * t * (1.0 - gamma) / (2.0 * r)
    } else if t <= s {
        r / 2.0 * (1.0 + gamma) + (t - r) * gamma
    } else {
        t + r / 2.0 * (1.0 + gamma) + iota * gamma - s * (2.0 - gamma) + (1.0 - gamma) * s * s / t
    }
}

/// Inverse of [`warp`]: the `t >= 0` with `warp(t) = v`.
pub(crate) fn warp_inverse(v: f64, r: f64, gamma: f64, iota: f64) -> f64 {
    let s = r + iota;
    let knot1 = r / 2.0 * (1.0 + gamma);
    let knot2 = knot1 + iota * gamma;
    if v <= knot1 {
        // Root of (1-g)/(2r) t^2 - t + v = 0 on [0, r], in cancellation-free form.
        2.0 * v / (1.0 + (1.0 - 2.0 * (1.0 - gamma) * v / r).max(0.0).sqrt())
    } else if v <= knot2 {
        r + (v - knot1) / gamma
    } else {
        // t^2 - (v - k) t + (1-g) s^2 = 0 with k = knot2 - s (2 - g); larger root.
        let b = v - (knot2 - s * (2.0 - gamma));
        let disc = (b * b - 4.0 * (1.0 - gamma) * s * s).max(0.0);
        (b + disc.sqrt()) / 2.0
    }
}

/// `(w1, w2, w3)` from the nested Beta laws.
pub fn gen_covariates<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let b1: f64 = Beta::new(1.1, 1.1).expect("valid beta").sample(rng);
    let w1 = 20.0 + 60.0 * b1;
    let b2 = Beta::new(1.5 + w1 / 20.0, 6.0).expect("valid beta").sample(rng);
    let b3 = Beta::new(1.5 + (w1 - 50.0).abs() / 20.0, 3.0).expect("valid beta").sample(rng);
    [w1, 18.0 + 32.0 * b2, 10.0 * b3]
}

pub fn propensity(w: &[f64]) -> f64 {
    expit(-1.0 + (1.0 + (-20.0 + w[0] / 10.0).exp() + (-3.0 + w[2] / 2.0).exp()).ln())
}

pub fn gen_treatment<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> u8 {
    u8::from(rng.random::<f64>() < propensity(w))
}

fn exp_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1].
    -(1.0 - rng.random::<f64>()).ln() / rate
}

pub fn gen_censoring<R: Rng + ?Sized>(w: &[f64], a: u8, cfg: &DgpConfig, rng: &mut R) -> f64 {
    exp_draw(cfg.censoring_rate(w, a), rng)
}

pub fn gen_event<R: Rng + ?Sized>(w: &[f64], a: u8, cfg: &DgpConfig, rng: &mut R) -> Result<f64> {
    let v = exp_draw(cfg.lambda0(w), rng);
    if a == 0 {
        return Ok(v);
    }
    let t = warp_inverse(v, cfg.r, cfg.gamma(w), cfg.iota(w));
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Numerical(format!("event-time inversion failed for warp value {v}")));
    }
    Ok(t)
}

/// One simulated observation.
pub fn gen_observation<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Result<Observation> {
    let w = gen_covariates(rng);
    let a = gen_treatment(&w, rng);
    let c = gen_censoring(&w, a, cfg, rng);
    let t = gen_event(&w, a, cfg, rng)?;
    Ok(Observation::new(w.to_vec(), a, t.min(c), u8::from(t <= c)))
}

pub const COVARIATE_NAMES: [&str; 3] = ["w1", "w2", "w3"];

/// `cfg.n` observations from `ChaCha8(cfg.seed)`.
pub fn simulate_dataset(cfg: &DgpConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_with(cfg, &mut rng)
}

pub fn simulate_with<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Result<Dataset> {
    cfg.validate()?;
    let obs = (0..cfg.n).map(|_| gen_observation(cfg, rng)).collect::<Result<Vec<_>>>()?;
    Dataset::new(obs, cfg.tau, COVARIATE_NAMES.iter().map(|s| s.to_string()).collect())
}

const MC_CHUNK: usize = 4096;

/// `num` covariate draws, generated in fixed chunks with one ChaCha8
/// stream per chunk.
pub fn covariate_sample(num: usize, seed: u64) -> Vec<[f64; 3]> {
    let chunks: Vec<usize> = (0..num.div_ceil(MC_CHUNK)).collect();
    chunks
        .par_iter()
        .flat_map_iter(|&c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = MC_CHUNK.min(num - c * MC_CHUNK);
            (0..len).map(move |_| gen_covariates(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// Counterfactual survival curves on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub times: Vec<f64>,
    pub theta0: Vec<f64>,
    pub theta1: Vec<f64>,
}

impl TrueParams {
    /// Linear interpolation between grid times; 1 at `t <= 0`.
    pub fn theta(&self, t: f64, a: u8) -> f64 {
        let v = if a == 0 { &self.theta0 } else { &self.theta1 };
        if t <= 0.0 {
            return 1.0;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            let t1 = self.times[0];
            return 1.0 + (v[0] - 1.0) * t / t1;
        }
        if k == self.times.len() {
            return v[k - 1];
        }
        let (ta, tb) = (self.times[k - 1], self.times[k]);
        v[k - 1] + (v[k] - v[k - 1]) * (t - ta) / (tb - ta)
    }

    /// `[1 - theta(t,1)] / [1 - theta(t,0)]`.
    pub fn risk_ratio(&self, t: f64) -> f64 {
        (1.0 - self.theta(t, 1)) / (1.0 - self.theta(t, 0))
    }
}

/// `theta(t, a) = E[S(t | a, W)]` averaged over `covs`.
pub fn true_params_from(cfg: &DgpConfig, covs: &[[f64; 3]], times: &[f64]) -> TrueParams {
    let sums = covs
        .par_chunks(MC_CHUNK)
        .map(|chunk| {
            let mut s0 = vec![0.0; times.len()];
            let mut s1 = vec![0.0; times.len()];
            for w in chunk {
                let lam = cfg.lambda0(w);
                let (g, io) = (cfg.gamma(w), cfg.iota(w));
                for (j, &t) in times.iter().enumerate() {
                    s0[j] += (-lam * t).exp();
                    s1[j] += (-lam * warp(t, cfg.r, g, io)).exp();
                }
            }
            (s0, s1)
        })
        .collect::<Vec<_>>();
    let m = covs.len() as f64;
    let mut theta0 = vec![0.0; times.len()];
    let mut theta1 = vec![0.0; times.len()];
    for (s0, s1) in sums {
        for j in 0..times.len() {
            theta0[j] += s0[j];
            theta1[j] += s1[j];
        }
    }
    TrueParams {
        times: times.to_vec(),
        theta0: theta0.into_iter().map(|v| v / m).collect(),
        theta1: theta1.into_iter().map(|v| v / m).collect(),
    }
}

/// Truth on `times` from `num_mc` fresh covariate draws.
pub fn true_params(cfg: &DgpConfig, num_mc: usize, times: &[f64], seed: u64) -> TrueParams {
    true_params_from(cfg, &covariate_sample(num_mc, seed), times)
}

/// Uniform grid on `[0, tau]` with the given step count; fine enough for
/// linear interpolation of the truth.
pub fn fine_grid(tau: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| tau * k as f64 / steps as f64).collect()
}

/// `E[P(C <= tau | A=0, W)]` over `covs`, in closed form.
pub fn censoring_rate(cfg: &DgpConfig, covs: &[[f64; 3]]) -> f64 {
    covs.iter().map(|w| 1.0 - (-cfg.tau * cfg.censoring_rate(w, 0)).exp()).sum::<f64>() / covs.len() as f64
}

/// `E[P(T <= min(C, tau) | A=0, W)]` over `covs`, in closed form.
pub fn observed_event_rate(cfg: &DgpConfig, covs: &[[f64; 3]]) -> f64 {
    covs.iter()
        .map(|w| {
            let lam = cfg.lambda0(w);
            let mu = cfg.censoring_rate(w, 0);
            lam / (lam + mu) * (1.0 - (-(lam + mu) * cfg.tau).exp())
        })
        .sum::<f64>()
        / covs.len() as f64
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, target: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if (flo - target) * (fhi - target) > 0.0 {
        return Err(Error::Numerical(format!(
            "calibration target {target} not bracketed: f({lo}) = {flo}, f({hi}) = {fhi}"
        )));
    }
    let increasing = fhi > flo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `beta0` giving the target observed control-arm event rate within tau.
pub fn calibrate_beta0(cfg: &DgpConfig, target: f64, covs: &[[f64; 3]]) -> Result<f64> {
    bisect(
        |b| {
            let c = DgpConfig { beta0: b, ..cfg.clone() };
            observed_event_rate(&c, covs)
        },
        -40.0,
        10.0,
        target,
    )
}

/// `gamma_const` giving the target risk ratio at time `t`.
pub fn calibrate_gamma_const(cfg: &DgpConfig, target_rr: f64, t: f64, covs: &[[f64; 3]]) -> Result<f64> {
    bisect(
        |g| {
            let c = DgpConfig { gamma_const: g, ..cfg.clone() };
            true_params_from(&c, covs, &[t]).risk_ratio(t)
        },
        -20.0,
        20.0,
        target_rr,
    )
}
