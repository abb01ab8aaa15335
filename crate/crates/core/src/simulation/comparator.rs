//! G-computation from a main-terms Cox model with percentile-bootstrap
//! intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::Target;
use crate::learners::{fit_cox_breslow, ConditionalSurvival, SurvivalKind, SurvivalLearnerSpec};
use crate::survdata::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCoxResult {
    pub times: Vec<f64>,
    /// `theta[a][j]`: covariate-averaged survival under arm `a`.
    pub theta: [Vec<f64>; 2],
    pub lower: [Vec<f64>; 2],
    pub upper: [Vec<f64>; 2],
    /// `[1 - theta1] / [1 - theta0]` with its percentile interval.
    pub risk_ratio: Vec<f64>,
    pub rr_lower: Vec<f64>,
    pub rr_upper: Vec<f64>,
    pub num_boot: usize,
    /// Bootstrap resamples whose Cox fit failed; excluded from the intervals.
    pub boot_failures: usize,
}

fn g_formula(data: &Dataset, times: &[f64]) -> Result<[Vec<f64>; 2]> {
    let spec = SurvivalLearnerSpec::new(SurvivalKind::CoxBreslow);
    let fit = fit_cox_breslow(data, Target::Event, &spec)?;
    let n = data.len() as f64;
    let mut out = [vec![0.0; times.len()], vec![0.0; times.len()]];
    let mut buf = vec![0.0; times.len()];
    for o in data.observations() {
        for (a, curve) in out.iter_mut().enumerate() {
            fit.predict_into(a as u8, &o.w, times, &mut buf);
            for (c, b) in curve.iter_mut().zip(&buf) {
                *c += b / n;
            }
        }
    }
    Ok(out)
}

fn rr(theta: &[Vec<f64>; 2]) -> Vec<f64> {
    theta[1].iter().zip(&theta[0]).map(|(t1, t0)| (1.0 - t1) / (1.0 - t0)).collect()
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits `S(t | a, w)` by a Cox model with main terms in `a` and `w`,
/// averages predictions over the sample for each arm, and attaches
/// `(alpha/2, 1 - alpha/2)` bootstrap percentile intervals.
pub fn marginalized_cox(data: &Dataset, times: &[f64], num_boot: usize, alpha: f64, seed: u64) -> Result<MarginalCoxResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument("alpha must lie in (0, 1)".into()));
    }
    let theta = g_formula(data, times)?;
    let n = data.len();
    let boots: Vec<Option<[Vec<f64>; 2]>> = (0..num_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let boot = data.subset(&idx);
            if boot.count_arm(0) == 0 || boot.count_arm(1) == 0 {
                return None;
            }
            g_formula(&boot, times).ok()
        })
        .collect();
    let ok: Vec<&[Vec<f64>; 2]> = boots.iter().flatten().collect();
    let failures = num_boot - ok.len();
    let m = times.len();
    let nan = || vec![f64::NAN; m];
    let (mut lower, mut upper) = ([nan(), nan()], [nan(), nan()]);
    let (mut rr_lower, mut rr_upper) = (nan(), nan());
    if !ok.is_empty() {
        let rrs: Vec<Vec<f64>> = ok.iter().map(|t| rr(t)).collect();
        for j in 0..m {
            for a in 0..2 {
                let mut v: Vec<f64> = ok.iter().map(|t| t[a][j]).collect();
                v.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
                lower[a][j] = percentile(&v, alpha / 2.0);
                upper[a][j] = percentile(&v, 1.0 - alpha / 2.0);
            }
            let mut v: Vec<f64> = rrs.iter().map(|r| r[j]).filter(|x| x.is_finite()).collect();
            if !v.is_empty() {
                v.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
                rr_lower[j] = percentile(&v, alpha / 2.0);
                rr_upper[j] = percentile(&v, 1.0 - alpha / 2.0);
            }
        }
    }
    Ok(MarginalCoxResult {
        times: times.to_vec(),
        risk_ratio: rr(&theta),
        theta,
        lower,
        upper,
        rr_lower,
        rr_upper,
        num_boot,
        boot_failures: failures,
    })
}
