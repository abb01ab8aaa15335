//! Pointwise intervals, simultaneous bands, contrasts, the curve-equality
//! test and restricted mean survival time.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::CurveEstimate;
use crate::isotonic::pava_decreasing;
use crate::linalg::psd_cholesky;
use crate::survdata::{Dataset, TimeGrid};

/// Default number of Gaussian sample paths for bands and tests.
pub const DEFAULT_PATHS: usize = 10_000;

/// Ratio contrasts are masked where a denominator falls below this value.
pub const RATIO_DENOMINATOR_MIN: f64 = 0.01;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Standard normal quantile `z_p`.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseCI {
    pub t: f64,
    pub arm: u8,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

/// Logit-scale Wald intervals at every grid time.
///
/// Where the projected curve is exactly 0 the interval is `[0, u*]` with
/// `u*` the smallest positive upper limit elsewhere on the grid; where it
/// is exactly 1 it is `[l*, 1]` with `l*` the largest lower limit below 1.
pub fn pointwise_cis(est: &CurveEstimate, alpha: f64) -> Result<Vec<PointwiseCI>> {
    check_alpha(alpha)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    let rn = (est.n as f64).sqrt();
    let m = est.grid.len();
    let mut bounds: Vec<Option<(f64, f64)>> = vec![None; m];
    for j in 0..m {
        let th = est.theta_proj[j];
        if th > 0.0 && th < 1.0 {
            let s_tilde = est.sigma2[j].sqrt() / (th * (1.0 - th));
            let half = z * s_tilde / rn;
            bounds[j] = Some((expit(logit(th) - half), expit(logit(th) + half)));
        }
    }
    let upper_star = (0..m)
        .filter_map(|j| match bounds[j] {
            Some((_, u)) if u > 0.0 => Some(u),
            None if est.theta_proj[j] >= 1.0 => Some(1.0),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    let lower_star = (0..m)
        .filter_map(|j| match bounds[j] {
            Some((l, _)) if l < 1.0 => Some(l),
            None if est.theta_proj[j] <= 0.0 => Some(0.0),
            _ => None,
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((0..m)
        .map(|j| {
            let th = est.theta_proj[j];
            let (lower, upper) = match bounds[j] {
                Some(b) => b,
                None if th <= 0.0 => (0.0, if upper_star.is_finite() { upper_star } else { 0.0 }),
                None => (if lower_star.is_finite() { lower_star } else { 1.0 }, 1.0),
            };
            PointwiseCI {
                t: est.grid.times()[j],
                arm: est.arm,
                estimate: th,
                lower,
                upper,
                alpha,
            }
        })
        .collect())
}

/// Pointwise interval at an arbitrary time, using the right-continuous step
/// value of the curve (1 before the first grid time).
pub fn pointwise_ci(est: &CurveEstimate, t: f64, alpha: f64) -> Result<PointwiseCI> {
    let all = pointwise_cis(est, alpha)?;
    let c = est.grid.count_le(t);
    if c == 0 {
        let lower = all
            .iter()
            .map(|ci| ci.lower)
            .filter(|&l| l < 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(PointwiseCI {
            t,
            arm: est.arm,
            estimate: 1.0,
            lower: if lower.is_finite() { lower } else { 1.0 },
            upper: 1.0,
            alpha,
        });
    }
    let mut ci = all[c - 1].clone();
    ci.t = t;
    Ok(ci)
}

const PATH_BATCH: usize = 256;

/// Draws `num_paths` mean-zero Gaussian vectors with covariance `sigma` and
/// returns `f(path)` for each, in path order.
///
/// Path `p` uses its own ChaCha8 stream `p` under `seed`, so the output does
/// not depend on the thread count.
pub fn simulate_gp_functionals<F>(sigma: &Array2<f64>, num_paths: usize, seed: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if num_paths == 0 {
        return Err(Error::Argument("number of sample paths must be positive".into()));
    }
    let (l, _) = psd_cholesky(sigma)?;
    let m = l.nrows();
    let batches: Vec<usize> = (0..num_paths.div_ceil(PATH_BATCH)).collect();
    let out: Vec<Vec<f64>> = batches
        .par_iter()
        .map(|&b| {
            let start = b * PATH_BATCH;
            let end = (start + PATH_BATCH).min(num_paths);
            let mut z = Array2::<f64>::zeros((end - start, m));
            for (row, p) in (start..end).enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p as u64);
                for r in 0..m {
                    z[[row, r]] = StandardNormal.sample(&mut rng);
                }
            }
            // Row p of z L' is L z_p.
            let x = z.dot(&l.t());
            x.rows()
                .into_iter()
                .map(|row| f(row.as_slice().expect("standard layout")))
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn upper_order_statistic(mut values: Vec<f64>, alpha: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite functionals"));
    let n = values.len();
    let k = (((1.0 - alpha) * n as f64).ceil() as usize).clamp(1, n);
    values[k - 1]
}

/// Empirical `(1 - alpha)`-quantile of `max_j |X_j|` for `X ~ N(0, sigma)`.
pub fn simulate_gp_sup(sigma: &Array2<f64>, alpha: f64, num_paths: usize, seed: u64) -> Result<f64> {
    check_alpha(alpha)?;
    let sups = simulate_gp_functionals(sigma, num_paths, seed, |x| x.iter().fold(0.0, |m, v| f64::max(m, v.abs())))?;
    Ok(upper_order_statistic(sups, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandStyle {
    FixedWidth,
    VariableWidth,
}

impl fmt::Display for BandStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandStyle::FixedWidth => "fixed",
            BandStyle::VariableWidth => "variable",
        })
    }
}

impl FromStr for BandStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "fixed_width" => Ok(BandStyle::FixedWidth),
            "variable" | "variable_width" => Ok(BandStyle::VariableWidth),
            _ => Err(Error::Argument(format!("unknown band style '{s}' (expected fixed or variable)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandOptions {
    pub style: BandStyle,
    pub alpha: f64,
    /// Band domain `[t0, t1]`; required for the variable-width style, and
    /// the whole grid when absent for the fixed-width style.
    pub interval: Option<(f64, f64)>,
    pub num_paths: usize,
    pub seed: u64,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions {
            style: BandStyle::FixedWidth,
            alpha: 0.05,
            interval: None,
            num_paths: DEFAULT_PATHS,
            seed: 1,
        }
    }
}

/// Simultaneous band on the grid points `indices`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBand {
    pub arm: u8,
    pub style: BandStyle,
    pub alpha: f64,
    pub t0: f64,
    pub t1: f64,
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub critical_value: f64,
    pub num_paths: usize,
}

impl UniformBand {
    /// Band limits at grid index `j`, if `j` lies in the band's domain.
    pub fn at_index(&self, j: usize) -> Option<(f64, f64)> {
        self.indices.binary_search(&j).ok().map(|k| (self.lower[k], self.upper[k]))
    }
}

/// Default variable-width interval: the 5th and 95th percentiles (linear
/// interpolation between order statistics) of the observed event times up
/// to tau.
pub fn default_band_interval(data: &Dataset) -> Result<(f64, f64)> {
    let mut ev: Vec<f64> = data
        .observations()
        .iter()
        .filter(|o| o.delta == 1 && o.y <= data.tau())
        .map(|o| o.y)
        .collect();
    if ev.is_empty() {
        return Err(Error::Argument("no observed events before tau; cannot place a band interval".into()));
    }
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok((quantile_sorted(&ev, 0.05), quantile_sorted(&ev, 0.95)))
}

fn quantile_sorted(x: &[f64], p: f64) -> f64 {
    let h = (x.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    x[lo] + (h - lo as f64) * (x[hi] - x[lo])
}

fn sub_matrix(s: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((idx.len(), idx.len()), |(u, v)| s[[idx[u], idx[v]]])
}

pub fn uniform_band(est: &CurveEstimate, opts: &BandOptions) -> Result<UniformBand> {
    check_alpha(opts.alpha)?;
    let grid = &est.grid;
    let (t0, t1) = match (opts.style, opts.interval) {
        (_, Some(iv)) => iv,
        (BandStyle::FixedWidth, None) => (0.0, grid.last()),
        (BandStyle::VariableWidth, None) => {
            return Err(Error::Argument("variable-width band needs an interval [t0, t1]".into()))
        }
    };
    if !(t0 <= t1) {
        return Err(Error::Argument(format!("band interval [{t0}, {t1}] is empty")));
    }
    let indices = grid.restrict(t0, t1);
    if indices.is_empty() {
        return Err(Error::Argument(format!("no grid times inside [{t0}, {t1}]")));
    }
    let rn = (est.n as f64).sqrt();
    let (lower, upper, c) = match opts.style {
        BandStyle::FixedWidth => {
            let c = simulate_gp_sup(&sub_matrix(&est.sigma, &indices), opts.alpha, opts.num_paths, opts.seed)?;
            let lo: Vec<f64> = indices.iter().map(|&j| (est.theta_proj[j] - c / rn).clamp(0.0, 1.0)).collect();
            let up: Vec<f64> = indices.iter().map(|&j| (est.theta_proj[j] + c / rn).clamp(0.0, 1.0)).collect();
            (lo, up, c)
        }
        BandStyle::VariableWidth => {
            let mut sd = Vec::with_capacity(indices.len());
            for &j in &indices {
                let th = est.theta_proj[j];
                let s = est.sigma2[j].sqrt();
                if !(th > 0.0 && th < 1.0) || s <= 0.0 {
                    return Err(Error::Argument(format!(
                        "variable-width band undefined at t = {}: estimate {th}, standard error {s}; shrink [t0, t1]",
                        grid.times()[j]
                    )));
                }
                sd.push(s);
            }
            let corr = Array2::from_shape_fn((indices.len(), indices.len()), |(u, v)| {
                est.sigma[[indices[u], indices[v]]] / (sd[u] * sd[v])
            });
            let c = simulate_gp_sup(&corr, opts.alpha, opts.num_paths, opts.seed)?;
            let mut lo = Vec::with_capacity(indices.len());
            let mut up = Vec::with_capacity(indices.len());
            for (k, &j) in indices.iter().enumerate() {
                let th = est.theta_proj[j];
                let half = c * sd[k] / (th * (1.0 - th)) / rn;
                lo.push(expit(logit(th) - half));
                up.push(expit(logit(th) + half));
            }
            (lo, up, c)
        }
    };
    Ok(UniformBand {
        arm: est.arm,
        style: opts.style,
        alpha: opts.alpha,
        t0,
        t1,
        times: indices.iter().map(|&j| grid.times()[j]).collect(),
        indices,
        lower: pava_decreasing(&lower),
        upper: pava_decreasing(&upper),
        critical_value: c,
        num_paths: opts.num_paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    Difference,
    SurvivalRatio,
    RiskRatio,
    Rmst,
    RmstDifference,
}

impl ContrastKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContrastKind::Difference => "difference",
            ContrastKind::SurvivalRatio => "survival_ratio",
            ContrastKind::RiskRatio => "risk_ratio",
            ContrastKind::Rmst => "rmst",
            ContrastKind::RmstDifference => "rmst_difference",
        }
    }

    /// Ratios are handled on the log scale.
    fn log_scale(self) -> bool {
        matches!(self, ContrastKind::SurvivalRatio | ContrastKind::RiskRatio)
    }
}

/// Contrast band on the transformed scale, then mapped back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastBand {
    pub style: BandStyle,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub critical_value: f64,
    pub num_paths: usize,
}

#[derive(Debug, Clone)]
pub struct ContrastEstimate {
    pub kind: ContrastKind,
    /// Arm for single-arm RMST; `None` for two-arm contrasts.
    pub arm: Option<u8>,
    pub alpha: f64,
    /// Grid times, or `[tau]` for the RMST kinds.
    pub times: Vec<f64>,
    pub estimate: Vec<f64>,
    /// Standard error on the working scale (log for ratios).
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// True where a ratio denominator is below the masking threshold; the
    /// estimate and limits are NaN there.
    pub masked: Vec<bool>,
    pub band: Option<ContrastBand>,
    /// Centered influence values on the working scale, `n x len`.
    pub influence: Array2<f64>,
}

impl ContrastEstimate {
    pub fn n(&self) -> usize {
        self.influence.nrows()
    }

    fn covariance(&self) -> Array2<f64> {
        let n = self.n() as f64;
        self.influence.t().dot(&self.influence) / n
    }
}

fn centered(est: &CurveEstimate) -> Array2<f64> {
    let mut d = est.eif.values.clone();
    for mut row in d.rows_mut() {
        for (v, t) in row.iter_mut().zip(&est.theta_proj) {
            *v -= t;
        }
    }
    d
}

fn check_pair(est0: &CurveEstimate, est1: &CurveEstimate) -> Result<()> {
    if est0.grid != est1.grid || est0.n != est1.n {
        return Err(Error::Argument("contrast requires both arms on the same data and grid".into()));
    }
    Ok(())
}

fn column_se(infl: &Array2<f64>) -> Vec<f64> {
    let n = infl.nrows() as f64;
    infl.axis_iter(Axis(1))
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / n).sqrt() / n.sqrt())
        .collect()
}

/// Two-arm contrast `est1` versus `est0` with delta-method inference.
pub fn contrast(est0: &CurveEstimate, est1: &CurveEstimate, kind: ContrastKind, alpha: f64) -> Result<ContrastEstimate> {
    check_alpha(alpha)?;
    check_pair(est0, est1)?;
    if kind == ContrastKind::Rmst {
        return Err(Error::Argument("single-arm RMST is computed by `rmst`".into()));
    }
    if kind == ContrastKind::RmstDifference {
        let r0 = rmst(est0, alpha)?;
        let r1 = rmst(est1, alpha)?;
        let infl = &r1.influence - &r0.influence;
        let est = r1.estimate[0] - r0.estimate[0];
        let se = column_se(&infl)[0];
        let z = normal_quantile(1.0 - alpha / 2.0);
        return Ok(ContrastEstimate {
            kind,
            arm: None,
            alpha,
            times: r0.times,
            estimate: vec![est],
            se: vec![se],
            lower: vec![est - z * se],
            upper: vec![est + z * se],
            masked: vec![false],
            band: None,
            influence: infl,
        });
    }
    let d0 = centered(est0);
    let d1 = centered(est1);
    let m = est0.grid.len();
    let n = est0.n;
    let mut infl = Array2::<f64>::zeros((n, m));
    let mut estimate = vec![0.0; m];
    let mut masked = vec![false; m];
    for j in 0..m {
        let (t0, t1) = (est0.theta_proj[j], est1.theta_proj[j]);
        // Working-scale value and the derivative weights on each arm.
        let (value, g1, g0) = match kind {
            ContrastKind::Difference => (t1 - t0, 1.0, -1.0),
            ContrastKind::SurvivalRatio => {
                if t0 < RATIO_DENOMINATOR_MIN || t1 < RATIO_DENOMINATOR_MIN {
                    masked[j] = true;
                    (f64::NAN, 0.0, 0.0)
                } else {
                    ((t1 / t0).ln(), 1.0 / t1, -1.0 / t0)
                }
            }
            ContrastKind::RiskRatio => {
                let (f0, f1) = (1.0 - t0, 1.0 - t1);
                if f0 < RATIO_DENOMINATOR_MIN || f1 < RATIO_DENOMINATOR_MIN {
                    masked[j] = true;
                    (f64::NAN, 0.0, 0.0)
                } else {
                    ((f1 / f0).ln(), -1.0 / f1, 1.0 / f0)
                }
            }
            ContrastKind::Rmst | ContrastKind::RmstDifference => unreachable!(),
        };
        estimate[j] = value;
        for i in 0..n {
            infl[[i, j]] = g1 * d1[[i, j]] + g0 * d0[[i, j]];
        }
    }
    let se = column_se(&infl);
    let z = normal_quantile(1.0 - alpha / 2.0);
    let mut lower = vec![f64::NAN; m];
    let mut upper = vec![f64::NAN; m];
    for j in 0..m {
        if masked[j] {
            continue;
        }
        let (lo, hi) = (estimate[j] - z * se[j], estimate[j] + z * se[j]);
        if kind.log_scale() {
            estimate[j] = estimate[j].exp();
            lower[j] = lo.exp();
            upper[j] = hi.exp();
        } else {
            lower[j] = lo.max(-1.0);
            upper[j] = hi.min(1.0);
        }
    }
    Ok(ContrastEstimate {
        kind,
        arm: None,
        alpha,
        times: est0.grid.times().to_vec(),
        estimate,
        se,
        lower,
        upper,
        masked,
        band: None,
        influence: infl,
    })
}

/// Adds a simultaneous band over the unmasked grid points of a curve
/// contrast. The variable-width style standardizes by the pointwise
/// standard errors; points with zero standard error keep a zero-width band.
pub fn contrast_band(c: &mut ContrastEstimate, style: BandStyle, num_paths: usize, seed: u64) -> Result<()> {
    if matches!(c.kind, ContrastKind::Rmst | ContrastKind::RmstDifference) {
        return Err(Error::Argument("bands apply to curve contrasts only".into()));
    }
    let m = c.times.len();
    let live: Vec<usize> = (0..m).filter(|&j| !c.masked[j]).collect();
    let cov = c.covariance();
    let sub = match style {
        BandStyle::FixedWidth => sub_matrix(&cov, &live),
        BandStyle::VariableWidth => Array2::from_shape_fn((live.len(), live.len()), |(u, v)| {
            let (a, b) = (c.se[live[u]], c.se[live[v]]);
            if a > 0.0 && b > 0.0 {
                cov[[live[u], live[v]]] / (a * b * c.n() as f64)
            } else {
                0.0
            }
        }),
    };
    let crit = if live.is_empty() {
        0.0
    } else {
        simulate_gp_sup(&sub, c.alpha, num_paths, seed)?
    };
    let rn = (c.n() as f64).sqrt();
    let mut lower = vec![f64::NAN; m];
    let mut upper = vec![f64::NAN; m];
    for &j in &live {
        let work = if c.kind.log_scale() { c.estimate[j].ln() } else { c.estimate[j] };
        let half = match style {
            BandStyle::FixedWidth => crit / rn,
            BandStyle::VariableWidth => crit * c.se[j],
        };
        if c.kind.log_scale() {
            lower[j] = (work - half).exp();
            upper[j] = (work + half).exp();
        } else {
            lower[j] = (work - half).max(-1.0);
            upper[j] = (work + half).min(1.0);
        }
    }
    c.band = Some(ContrastBand {
        style,
        lower,
        upper,
        critical_value: crit,
        num_paths,
    });
    Ok(())
}

/// Lengths of the grid steps on `[t_j, t_{j+1})`, the last one ending at
/// the final grid time (tau), plus the leading interval `[0, t_1)` on which
/// the curve equals 1.
pub fn step_weights(grid: &TimeGrid) -> (f64, Vec<f64>) {
    let t = grid.times();
    let tau = grid.last();
    let w = (0..t.len())
        .map(|j| t.get(j + 1).copied().unwrap_or(tau).min(tau) - t[j])
        .collect();
    (t[0], w)
}

/// Restricted mean survival time up to the last grid time with a Wald
/// interval clipped to `[0, tau]`.
pub fn rmst(est: &CurveEstimate, alpha: f64) -> Result<ContrastEstimate> {
    check_alpha(alpha)?;
    let (lead, w) = step_weights(&est.grid);
    let value = lead + w.iter().zip(&est.theta_proj).map(|(a, b)| a * b).sum::<f64>();
    let d = centered(est);
    let infl = d.dot(&ndarray::Array1::from(w)).insert_axis(Axis(1));
    let se = column_se(&infl)[0];
    let z = normal_quantile(1.0 - alpha / 2.0);
    let tau = est.grid.last();
    Ok(ContrastEstimate {
        kind: ContrastKind::Rmst,
        arm: Some(est.arm),
        alpha,
        times: vec![tau],
        estimate: vec![value],
        se: vec![se],
        lower: vec![(value - z * se).max(0.0)],
        upper: vec![(value + z * se).min(tau)],
        masked: vec![false],
        band: None,
        influence: infl,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Lebesgue measure on `[0, tau]`.
    Uniform,
    /// Empirical distribution of the pooled observed event times up to tau.
    IntegratedEvents,
}

impl FromStr for WeightKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightKind::Uniform),
            "integrated_events" | "events" => Ok(WeightKind::IntegratedEvents),
            _ => Err(Error::Argument(format!("unknown weight '{s}' (expected uniform or integrated_events)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualityTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub weight_kind: WeightKind,
    pub num_null_paths: usize,
    pub seed: u64,
    pub tau: f64,
}

fn equality_weights(data: &Dataset, grid: &TimeGrid, kind: WeightKind) -> Result<Vec<f64>> {
    match kind {
        WeightKind::Uniform => Ok(step_weights(grid).1),
        WeightKind::IntegratedEvents => {
            let mut w = vec![0.0; grid.len()];
            let mut total = 0.0;
            for o in data.observations() {
                if o.delta == 1 && o.y <= grid.last() {
                    let c = grid.count_le(o.y);
                    if c > 0 && grid.times()[c - 1] == o.y {
                        w[c - 1] += 1.0;
                        total += 1.0;
                    }
                }
            }
            if total == 0.0 {
                return Err(Error::Argument("no observed events on the grid for event-time weights".into()));
            }
            Ok(w.into_iter().map(|v| v / total).collect())
        }
    }
}

/// Test of equal counterfactual curves based on the weighted L1 distance
/// between the projected estimates. `data` supplies event times for the
/// event-time weights.
pub fn equality_test(
    data: &Dataset,
    est0: &CurveEstimate,
    est1: &CurveEstimate,
    weight_kind: WeightKind,
    num_null_paths: usize,
    seed: u64,
) -> Result<EqualityTestResult> {
    check_pair(est0, est1)?;
    let w = equality_weights(data, &est0.grid, weight_kind)?;
    let rn = (est0.n as f64).sqrt();
    let statistic = rn
        * w.iter()
            .zip(est1.theta_proj.iter().zip(&est0.theta_proj))
            .map(|(wj, (a, b))| wj * (a - b).abs())
            .sum::<f64>();
    let diff = &centered(est1) - &centered(est0);
    let cov = diff.t().dot(&diff) / est0.n as f64;
    let null = simulate_gp_functionals(&cov, num_null_paths, seed, |g| {
        g.iter().zip(&w).map(|(gj, wj)| wj * gj.abs()).sum::<f64>()
    })?;
    Ok(EqualityTestResult {
        statistic,
        p_value: p_value_from_null(&null, statistic),
        weight_kind,
        num_null_paths,
        seed,
        tau: est0.grid.last(),
    })
}

/// Fraction of null draws at or above the observed statistic.
pub fn p_value_from_null(null: &[f64], statistic: f64) -> f64 {
    null.iter().filter(|&&v| v >= statistic).count() as f64 / null.len() as f64
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub t: f64,
    pub a_or_contrast: String,
    pub estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub band_lower: Option<f64>,
    pub band_upper: Option<f64>,
}

pub fn curve_rows(cis: &[PointwiseCI], band: Option<&UniformBand>) -> Vec<ResultRow> {
    cis.iter()
        .enumerate()
        .map(|(j, ci)| {
            let b = band.and_then(|b| b.at_index(j));
            ResultRow {
                t: ci.t,
                a_or_contrast: ci.arm.to_string(),
                estimate: ci.estimate,
                ci_lower: ci.lower,
                ci_upper: ci.upper,
                band_lower: b.map(|x| x.0),
                band_upper: b.map(|x| x.1),
            }
        })
        .collect()
}

pub fn contrast_rows(c: &ContrastEstimate) -> Vec<ResultRow> {
    let label = match c.arm {
        Some(a) => format!("{}_{a}", c.kind.as_str()),
        None => c.kind.as_str().to_string(),
    };
    (0..c.times.len())
        .map(|j| ResultRow {
            t: c.times[j],
            a_or_contrast: label.clone(),
            estimate: c.estimate[j],
            ci_lower: c.lower[j],
            ci_upper: c.upper[j],
            band_lower: c.band.as_ref().map(|b| b.lower[j]).filter(|v| !v.is_nan()),
            band_upper: c.band.as_ref().map(|b| b.upper[j]).filter(|v| !v.is_nan()),
        })
        .collect()
}

/// CSV with columns `(t, a_or_contrast, estimate, ci_lower, ci_upper,
/// band_lower, band_upper)`; missing band limits and masked values are
/// written as empty fields.
pub fn write_results_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let fmt = |v: f64| if v.is_nan() { String::new() } else { format!("{v:?}") };
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["t", "a_or_contrast", "estimate", "ci_lower", "ci_upper", "band_lower", "band_upper"])?;
    for r in rows {
        wtr.write_record([
            fmt(r.t),
            r.a_or_contrast.clone(),
            fmt(r.estimate),
            fmt(r.ci_lower),
            fmt(r.ci_upper),
            r.band_lower.map(fmt).unwrap_or_default(),
            r.band_upper.map(fmt).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Equality-test report as pretty JSON.
pub fn write_test_report(path: impl AsRef<Path>, result: &EqualityTestResult, settings: serde_json::Value) -> Result<()> {
    let doc = serde_json::json!({
        "statistic": result.statistic,
        "p_value": result.p_value,
        "settings": {
            "weight": result.weight_kind,
            "num_null_paths": result.num_null_paths,
            "seed": result.seed,
            "tau": result.tau,
            "run": settings,
        },
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EifMatrix, TruncationCounts};
    use crate::estimator::variance_covariance;
    use proptest::prelude::*;

    /// Curve estimate assembled directly from an influence matrix.
    fn curve(times: Vec<f64>, arm: u8, phi: Array2<f64>) -> CurveEstimate {
        let n = phi.nrows();
        let m = phi.ncols();
        let theta_raw: Vec<f64> = (0..m).map(|j| phi.column(j).sum() / n as f64).collect();
        let theta_proj = crate::isotonic::monotone_project(&theta_raw);
        let eif = EifMatrix {
            arm,
            values: phi,
            fold_of: vec![0; n],
            truncation: TruncationCounts::default(),
        };
        let (sigma2, sigma) = variance_covariance(&eif, &theta_proj);
        CurveEstimate {
            grid: TimeGrid::new(times).unwrap(),
            arm,
            n,
            k: 1,
            theta_raw,
            theta_proj,
            sigma2,
            sigma,
            eif,
        }
    }

    fn const_curve(times: Vec<f64>, values: &[f64], n: usize) -> CurveEstimate {
        let phi = Array2::from_shape_fn((n, values.len()), |(_, j)| values[j]);
        curve(times, 1, phi)
    }

    #[test]
    fn degenerate_ci_and_edges() {
        let est = const_curve(vec![1.0, 2.0, 3.0], &[0.5, 0.5, 0.0], 4);
        let cis = pointwise_cis(&est, 0.05).unwrap();
        assert_eq!((cis[0].lower, cis[0].upper), (0.5, 0.5));
        // Zero estimate: [0, smallest positive upper elsewhere].
        assert_eq!((cis[2].lower, cis[2].upper), (0.0, 0.5));
        let before = pointwise_ci(&est, 0.5, 0.05).unwrap();
        assert_eq!((before.estimate, before.lower, before.upper), (1.0, 0.5, 1.0));
    }

    #[test]
    fn logit_interval_is_symmetric_at_half() {
        let phi = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let est = curve(vec![1.0], 1, phi);
        let ci = &pointwise_cis(&est, 0.05).unwrap()[0];
        assert!((ci.lower + ci.upper - 1.0).abs() < 1e-14);
        assert!(ci.lower < 0.5 && ci.upper > 0.5);
    }

    #[test]
    fn zero_edge_uses_smallest_positive_upper() {
        // Two interior points with spread, then a zero.
        let phi = Array2::from_shape_vec((4, 3), vec![
            1.0, 0.8, 0.0, //
            0.6, 0.2, 0.0, //
            1.0, 0.6, 0.0, //
            0.6, 0.2, 0.0,
        ])
        .unwrap();
        let est = curve(vec![1.0, 2.0, 3.0], 1, phi);
        let cis = pointwise_cis(&est, 0.1).unwrap();
        let min_up = cis[..2].iter().map(|c| c.upper).fold(f64::INFINITY, f64::min);
        assert_eq!(cis[2].lower, 0.0);
        assert_eq!(cis[2].upper, min_up);
    }

    #[test]
    fn gp_sup_cases() {
        let one = Array2::from_elem((1, 1), 1.0);
        let c = simulate_gp_sup(&one, 0.05, 200_000, 3).unwrap();
        assert!((c - 1.96).abs() < 0.02, "{c}");
        assert_eq!(simulate_gp_sup(&Array2::zeros((3, 3)), 0.05, 1000, 3).unwrap(), 0.0);
        let two = Array2::from_elem((2, 2), 1.0);
        let c2 = simulate_gp_sup(&two, 0.05, 200_000, 3).unwrap();
        assert!((c2 - c).abs() < 0.02, "{c2} {c}");
    }

    #[test]
    fn gp_paths_reproducible_across_thread_counts() {
        let s = Array2::from_shape_vec((2, 2), vec![1.0, 0.3, 0.3, 2.0]).unwrap();
        let a = simulate_gp_functionals(&s, 1000, 9, |x| x[0] + x[1]).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_gp_functionals(&s, 1000, 9, |x| x[0] + x[1]).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn gp_covariance_matches_target() {
        let s = Array2::from_shape_vec((2, 2), vec![1.0, 0.6, 0.6, 4.0]).unwrap();
        let xs = simulate_gp_functionals(&s, 100_000, 1, |x| x[0] * x[1]).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.6).abs() < 0.05, "{mean}");
    }

    fn noisy_curve(seed: u64, n: usize) -> CurveEstimate {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times: Vec<f64> = (1..=8).map(|k| k as f64).collect();
        let phi = Array2::from_shape_fn((n, 8), |(_, j)| {
            let base = 0.95 - 0.1 * j as f64;
            base + 0.3 * (rng.random::<f64>() - 0.5)
        });
        curve(times, 0, phi)
    }

    #[test]
    fn bands_contain_estimates_and_intervals() {
        let est = noisy_curve(4, 200);
        let cis = pointwise_cis(&est, 0.05).unwrap();
        for style in [BandStyle::FixedWidth, BandStyle::VariableWidth] {
            let opts = BandOptions {
                style,
                interval: Some((1.0, 8.0)),
                num_paths: 5000,
                ..BandOptions::default()
            };
            let band = uniform_band(&est, &opts).unwrap();
            // The sup quantile dominates every coordinate's quantile.
            let scale = match style {
                BandStyle::FixedWidth => est.sigma2.iter().cloned().fold(0.0, f64::max).sqrt(),
                BandStyle::VariableWidth => 1.0,
            };
            assert!(band.critical_value > normal_quantile(0.975) * scale);
            for (k, &j) in band.indices.iter().enumerate() {
                assert!(band.lower[k] <= est.theta_proj[j] && est.theta_proj[j] <= band.upper[k]);
                if style == BandStyle::VariableWidth {
                    assert!(band.lower[k] <= cis[j].lower && cis[j].upper <= band.upper[k]);
                    assert!(band.lower[k] > 0.0 && band.upper[k] < 1.0);
                }
            }
            assert!(band.lower.windows(2).all(|w| w[1] <= w[0]));
            assert!(band.upper.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn fixed_band_collapses_without_variance() {
        let est = const_curve(vec![1.0, 2.0], &[0.8, 0.4], 5);
        let band = uniform_band(&est, &BandOptions::default()).unwrap();
        assert_eq!(band.lower, vec![0.8, 0.4]);
        assert_eq!(band.upper, vec![0.8, 0.4]);
    }

    #[test]
    fn variable_band_rejects_zero_variance() {
        let est = const_curve(vec![1.0, 2.0], &[0.8, 0.4], 5);
        let opts = BandOptions {
            style: BandStyle::VariableWidth,
            interval: Some((1.0, 2.0)),
            ..BandOptions::default()
        };
        let err = uniform_band(&est, &opts).unwrap_err().to_string();
        assert!(err.contains("shrink"), "{err}");
    }

    #[test]
    fn contrast_arithmetic() {
        let e0 = const_curve(vec![1.0], &[0.5], 3);
        let e1 = const_curve(vec![1.0], &[0.8], 3);
        let sr = contrast(&e0, &e1, ContrastKind::SurvivalRatio, 0.05).unwrap();
        assert!((sr.estimate[0] - 1.6).abs() < 1e-12);
        let rr = contrast(&e0, &e1, ContrastKind::RiskRatio, 0.05).unwrap();
        assert!((rr.estimate[0] - 0.4).abs() < 1e-12);
        let same = contrast(&e1, &e1, ContrastKind::Difference, 0.05).unwrap();
        assert_eq!((same.estimate[0], same.lower[0], same.upper[0]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn difference_se_hand_example() {
        let p0 = Array2::from_shape_vec((2, 1), vec![0.2, 0.6]).unwrap();
        let p1 = Array2::from_shape_vec((2, 1), vec![1.0, 0.6]).unwrap();
        let e0 = curve(vec![1.0], 0, p0);
        let e1 = curve(vec![1.0], 1, p1);
        let d = contrast(&e0, &e1, ContrastKind::Difference, 0.05).unwrap();
        // phi1 - phi0 = (0.8, 0.0): mean 0.4, population SD 0.4, SE 0.4 / sqrt 2.
        assert!((d.estimate[0] - 0.4).abs() < 1e-12);
        assert!((d.se[0] - 0.4 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ratio_masks_small_denominator() {
        let e0 = const_curve(vec![1.0, 2.0], &[0.5, 0.005], 3);
        let e1 = const_curve(vec![1.0, 2.0], &[0.6, 0.3], 3);
        let sr = contrast(&e0, &e1, ContrastKind::SurvivalRatio, 0.05).unwrap();
        assert_eq!(sr.masked, vec![false, true]);
        assert!(sr.estimate[1].is_nan());
        let high = const_curve(vec![1.0, 2.0], &[0.995, 0.3], 3);
        let rr = contrast(&high, &e1, ContrastKind::RiskRatio, 0.05).unwrap();
        assert_eq!(rr.masked, vec![true, false]);
    }

    #[test]
    fn contrast_band_contains_intervals() {
        let e0 = noisy_curve(1, 300);
        let e1 = noisy_curve(2, 300);
        let mut d = contrast(&e0, &e1, ContrastKind::Difference, 0.05).unwrap();
        contrast_band(&mut d, BandStyle::VariableWidth, 4000, 5).unwrap();
        let b = d.band.as_ref().unwrap();
        for j in 0..d.times.len() {
            assert!(b.lower[j] <= d.lower[j] + 1e-12 && d.upper[j] <= b.upper[j] + 1e-12);
        }
    }

    #[test]
    fn rmst_examples() {
        let ones = const_curve(vec![1.0, 2.0], &[1.0, 1.0], 3);
        assert!((rmst(&ones, 0.05).unwrap().estimate[0] - 2.0).abs() < 1e-15);
        let step = const_curve(vec![1.0, 2.0], &[0.5, 0.5], 3);
        // 1 on [0,1), 0.5 on [1,2].
        assert!((rmst(&step, 0.05).unwrap().estimate[0] - 1.5).abs() < 1e-15);
        let d = contrast(&step, &step, ContrastKind::RmstDifference, 0.05).unwrap();
        assert_eq!((d.estimate[0], d.lower[0], d.upper[0]), (0.0, 0.0, 0.0));
    }

    fn data_for(times: &[f64]) -> Dataset {
        let obs = times
            .iter()
            .enumerate()
            .map(|(i, &y)| crate::survdata::Observation::new(vec![], (i % 2) as u8, y, 1))
            .collect();
        Dataset::new(obs, *times.last().unwrap(), vec![]).unwrap()
    }

    #[test]
    fn equality_test_closed_forms() {
        let data = data_for(&[1.0, 2.0, 3.0]);
        let e = const_curve(vec![1.0, 2.0, 3.0], &[0.9, 0.7, 0.5], 4);
        let same = equality_test(&data, &e, &e, WeightKind::Uniform, 1000, 1).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));

        let e1 = const_curve(vec![1.0, 2.0, 3.0], &[0.8, 0.6, 0.4], 4);
        let r = equality_test(&data, &e, &e1, WeightKind::Uniform, 1000, 1).unwrap();
        // |d| = 0.1 on [1, 3], none on [0, 1).
        assert!((r.statistic - 2.0 * 0.1 * 2.0).abs() < 1e-12);
        assert_eq!(r.p_value, 0.0);
        let ev = equality_test(&data, &e, &e1, WeightKind::IntegratedEvents, 1000, 1).unwrap();
        assert!((ev.statistic - 2.0 * 0.1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn p_value_monotone_in_statistic(null in proptest::collection::vec(0.0f64..5.0, 1..50), a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (plo, phi) = (p_value_from_null(&null, lo), p_value_from_null(&null, hi));
            prop_assert!(phi <= plo);
            prop_assert!((0.0..=1.0).contains(&plo));
        }

        #[test]
        fn rmst_within_zero_tau(vals in proptest::collection::vec(-0.2f64..1.2, 1..10)) {
            let times: Vec<f64> = (1..=vals.len()).map(|k| k as f64 * 0.7).collect();
            let est = const_curve(times.clone(), &vals, 2);
            let r = rmst(&est, 0.05).unwrap().estimate[0];
            prop_assert!(r >= 0.0 && r <= *times.last().unwrap() + 1e-12);
        }
    }
}
