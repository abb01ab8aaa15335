//! Cross-fitted one-step estimation of `theta(t, a) = E[S(t | a, W)]`.
//!
//! For each fold k the nuisances (S, G, pi) are trained on the other folds,
//! and the uncentered efficient influence function
//!
//! ```text
//! phi(o) = S(t|a0,w) [1 - I(a=a0)/pi(a0|w) { I(y<=t, d=1) / (S(y) G(y))
//!                                          - int_0^{t^y} dLambda(u) / (S(u) G(u)) }]
//! ```
//!
//! is evaluated on fold k's observations. `theta_n(t, a0)` is the average
//! of phi over all observations. The integral uses S discretized onto the
//! evaluation grid, with `dLambda(t_l) = 1 - S(t_l) / S(t_{l-1})`.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{iterate_superlearner, propensity_superlearner, PropensityReport, SuperLearnerConfig, SuperLearnerReport};
use crate::error::{Error, Result};
use crate::isotonic::monotone_project;
use crate::learners::{ConditionalSurvival, FittedPropensity, PropensitySpec, SurvivalLearner};
use crate::survdata::{Dataset, FoldAssignment, Observation, TimeGrid};

/// Default truncation constant: pi and G are floored at `1 / 20 = 0.05`.
pub const DEFAULT_ETA: f64 = 20.0;

/// Learner libraries and settings for the nuisance fits.
#[derive(Debug, Clone)]
pub struct NuisanceConfig {
    pub s_learners: Vec<Arc<dyn SurvivalLearner>>,
    pub g_learners: Vec<Arc<dyn SurvivalLearner>>,
    pub propensity: Vec<PropensitySpec>,
    pub superlearner: SuperLearnerConfig,
    /// Truncation constant eta; predictions of pi and G are floored at 1/eta.
    pub eta: f64,
}

/// Nuisance estimates trained without one fold.
#[derive(Debug, Clone)]
pub struct FoldNuisance {
    pub s: Arc<dyn ConditionalSurvival>,
    pub g: Arc<dyn ConditionalSurvival>,
    pub pi: FittedPropensity,
    pub survival_report: Option<SuperLearnerReport>,
    pub propensity_report: Option<PropensityReport>,
}

#[derive(Debug, Clone)]
pub struct NuisanceBundle {
    folds: FoldAssignment,
    per_fold: Vec<FoldNuisance>,
    eta: f64,
}

impl NuisanceBundle {
    /// Assembles a bundle from already fitted nuisances, one per fold.
    pub fn from_parts(folds: FoldAssignment, per_fold: Vec<FoldNuisance>, eta: f64) -> Result<Self> {
        if per_fold.len() != folds.k() {
            return Err(Error::Argument(format!(
                "{} nuisance sets for {} folds",
                per_fold.len(),
                folds.k()
            )));
        }
        if !(eta >= 1.0) {
            return Err(Error::Argument("truncation constant eta must be >= 1".into()));
        }
        Ok(NuisanceBundle { folds, per_fold, eta })
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn fold(&self, k: usize) -> &FoldNuisance {
        &self.per_fold[k]
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Lower bound applied to pi and G predictions.
    pub fn floor(&self) -> f64 {
        1.0 / self.eta
    }

    /// Nuisances used for observation `i`.
    pub fn for_observation(&self, i: usize) -> &FoldNuisance {
        &self.per_fold[self.folds.fold_of(i)]
    }
}

/// Trains the nuisances for every fold on that fold's complement.
pub fn fit_nuisances(data: &Dataset, folds: &FoldAssignment, config: &NuisanceConfig) -> Result<NuisanceBundle> {
    if folds.n() != data.len() {
        return Err(Error::Argument("fold assignment does not match the data size".into()));
    }
    let per_fold: Vec<FoldNuisance> = (0..folds.k())
        .into_par_iter()
        .map(|k| {
            let train = data.subset(&folds.training(k));
            let mut sl = config.superlearner.clone();
            sl.seed = config.superlearner.seed.wrapping_add(k as u64);
            let wrap = |e: Error| Error::Fold {
                fold: k + 1,
                source: Box::new(e),
            };
            let fit = iterate_superlearner(&train, &config.s_learners, &config.g_learners, &sl).map_err(wrap)?;
            let (pi, pi_report) =
                propensity_superlearner(&train, &config.propensity, sl.folds, sl.seed).map_err(wrap)?;
            Ok(FoldNuisance {
                s: Arc::new(fit.s),
                g: Arc::new(fit.g),
                pi,
                survival_report: Some(fit.report),
                propensity_report: Some(pi_report),
            })
        })
        .collect::<Result<_>>()?;
    NuisanceBundle::from_parts(folds.clone(), per_fold, config.eta)
}

/// Counts of predictions that hit the truncation floor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationCounts {
    pub pi_total: usize,
    pub pi_truncated: usize,
    pub g_total: usize,
    pub g_truncated: usize,
}

impl TruncationCounts {
    fn add(&mut self, o: &TruncationCounts) {
        self.pi_total += o.pi_total;
        self.pi_truncated += o.pi_truncated;
        self.g_total += o.g_total;
        self.g_truncated += o.g_truncated;
    }
}

fn floored(v: f64, floor: f64, total: &mut usize, hit: &mut usize) -> f64 {
    *total += 1;
    if v < floor {
        *hit += 1;
        floor
    } else {
        v
    }
}

/// Uncentered influence values `phi_{t, a0}(obs)` at every grid time.
///
/// `pi_a0` is the unfloored `pi(a0 | w)`; `floor` bounds pi and G from below.
pub fn eif_evaluate(
    obs: &Observation,
    grid: &TimeGrid,
    a0: u8,
    s: &dyn ConditionalSurvival,
    g: &dyn ConditionalSurvival,
    pi_a0: f64,
    floor: f64,
) -> Result<Vec<f64>> {
    let mut counts = TruncationCounts::default();
    eif_row(obs, grid, a0, s, g, pi_a0, floor, &mut counts)
}

#[allow(clippy::too_many_arguments)]
fn eif_row(
    obs: &Observation,
    grid: &TimeGrid,
    a0: u8,
    s: &dyn ConditionalSurvival,
    g: &dyn ConditionalSurvival,
    pi_a0: f64,
    floor: f64,
    counts: &mut TruncationCounts,
) -> Result<Vec<f64>> {
    let times = grid.times();
    let r = s.predict(a0, &obs.w, times);
    if obs.a != a0 {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite survival prediction".into()));
        }
        return Ok(r);
    }
    let gl = g.predict(a0, &obs.w, times);
    let pi = floored(pi_a0, floor, &mut counts.pi_total, &mut counts.pi_truncated);
    let s_y = s.predict_at(a0, &obs.w, obs.y);
    let g_y = floored(g.predict_at(a0, &obs.w, obs.y), floor, &mut counts.g_total, &mut counts.g_truncated);
    let event = obs.delta == 1;

    let mut out = Vec::with_capacity(times.len());
    // Running sum of (1/r_l - 1/r_{l-1}) / G_l over l <= j with t_l <= y,
    // and the value it takes after absorption (r = 0).
    let mut acc = 0.0;
    let mut absorbed: Option<f64> = None;
    let mut r_prev = 1.0;
    for (j, &t) in times.iter().enumerate() {
        let rj = r[j];
        if t <= obs.y && absorbed.is_none() {
            let gj = floored(gl[j], floor, &mut counts.g_total, &mut counts.g_truncated);
            if rj > 0.0 {
                acc += (1.0 / rj - 1.0 / r_prev) / gj;
            } else {
                absorbed = Some(1.0 / gj);
            }
        }
        let integral = match absorbed {
            Some(v) => v,
            None => rj * acc,
        };
        let jump = if event && obs.y <= t {
            let ratio = if s_y > 0.0 { rj / s_y } else { 1.0 };
            ratio / g_y
        } else {
            0.0
        };
        let phi = rj - (jump - integral) / pi;
        if !phi.is_finite() {
            return Err(Error::Numerical(format!("non-finite influence value at t = {t}")));
        }
        out.push(phi);
        if rj > 0.0 {
            r_prev = rj;
        }
    }
    Ok(out)
}

/// Influence values for one arm: rows are observations, columns grid times.
#[derive(Debug, Clone)]
pub struct EifMatrix {
    pub arm: u8,
    pub values: Array2<f64>,
    pub fold_of: Vec<usize>,
    pub truncation: TruncationCounts,
}

/// Evaluates phi for every observation with its own fold's nuisances and
/// returns the matrix together with the raw one-step curve.
pub fn one_step_curve(data: &Dataset, bundle: &NuisanceBundle, grid: &TimeGrid, a0: u8) -> Result<(EifMatrix, Vec<f64>)> {
    let n = data.len();
    if bundle.folds().n() != n {
        return Err(Error::Argument("nuisance bundle does not match the data size".into()));
    }
    let floor = bundle.floor();
    let rows: Vec<(Vec<f64>, TruncationCounts)> = data
        .observations()
        .par_iter()
        .enumerate()
        .map(|(i, o)| {
            let nu = bundle.for_observation(i);
            let mut counts = TruncationCounts::default();
            let pi = nu.pi.predict_arm(a0, &o.w);
            let row = eif_row(o, grid, a0, nu.s.as_ref(), nu.g.as_ref(), pi, floor, &mut counts)?;
            Ok((row, counts))
        })
        .collect::<Result<_>>()?;
    let m = grid.len();
    let mut values = Array2::<f64>::zeros((n, m));
    let mut truncation = TruncationCounts::default();
    for (i, (row, c)) in rows.iter().enumerate() {
        values.row_mut(i).assign(&ndarray::ArrayView1::from(row));
        truncation.add(c);
    }
    let theta: Vec<f64> = (0..m).map(|j| values.column(j).sum() / n as f64).collect();
    Ok((
        EifMatrix {
            arm: a0,
            values,
            fold_of: bundle.folds().labels().to_vec(),
            truncation,
        },
        theta,
    ))
}

/// Centered second moments of the influence values around `theta_proj`:
/// returns the pointwise variances and the full covariance matrix.
pub fn variance_covariance(eif: &EifMatrix, theta_proj: &[f64]) -> (Vec<f64>, Array2<f64>) {
    let n = eif.values.nrows();
    let mut centered = eif.values.clone();
    for mut row in centered.rows_mut() {
        for (v, t) in row.iter_mut().zip(theta_proj) {
            *v -= t;
        }
    }
    let mut sigma = centered.t().dot(&centered) / n as f64;
    // Exact symmetry regardless of summation order.
    let m = sigma.nrows();
    for u in 0..m {
        for v in 0..u {
            let avg = 0.5 * (sigma[[u, v]] + sigma[[v, u]]);
            sigma[[u, v]] = avg;
            sigma[[v, u]] = avg;
        }
    }
    let sigma2 = (0..m).map(|j| sigma[[j, j]].max(0.0)).collect();
    (sigma2, sigma)
}

/// One arm's estimated survival curve with its influence values.
#[derive(Debug, Clone)]
pub struct CurveEstimate {
    pub grid: TimeGrid,
    pub arm: u8,
    pub n: usize,
    pub k: usize,
    pub theta_raw: Vec<f64>,
    pub theta_proj: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub sigma: Array2<f64>,
    pub eif: EifMatrix,
}

impl CurveEstimate {
    /// Right-continuous step interpolation of the projected curve; 1 before
    /// the first grid time.
    pub fn theta_at(&self, t: f64) -> f64 {
        let c = self.grid.count_le(t);
        if c == 0 {
            1.0
        } else {
            self.theta_proj[c - 1]
        }
    }

    /// Fraction of pi and G predictions raised to the truncation floor.
    pub fn truncated_fraction(&self) -> f64 {
        let t = &self.eif.truncation;
        let total = t.pi_total + t.g_total;
        if total == 0 {
            0.0
        } else {
            (t.pi_truncated + t.g_truncated) as f64 / total as f64
        }
    }
}

/// Full curve estimate for arm `a0`: raw one-step values, monotone
/// projection, and influence-function variance and covariance.
pub fn estimate_curve(data: &Dataset, bundle: &NuisanceBundle, grid: &TimeGrid, a0: u8) -> Result<CurveEstimate> {
    let (eif, theta_raw) = one_step_curve(data, bundle, grid, a0)?;
    let theta_proj = monotone_project(&theta_raw);
    let (sigma2, sigma) = variance_covariance(&eif, &theta_proj);
    Ok(CurveEstimate {
        grid: grid.clone(),
        arm: a0,
        n: data.len(),
        k: bundle.folds().k(),
        theta_raw,
        theta_proj,
        sigma2,
        sigma,
        eif,
    })
}

/// CSV with columns `(t, a, theta_raw, theta_proj, sigma2)`.
pub fn write_curves_csv(path: impl AsRef<Path>, curves: &[&CurveEstimate]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["t", "a", "theta_raw", "theta_proj", "sigma2"])?;
    for c in curves {
        for j in 0..c.grid.len() {
            wtr.write_record([
                format!("{:?}", c.grid.times()[j]),
                c.arm.to_string(),
                format!("{:?}", c.theta_raw[j]),
                format!("{:?}", c.theta_proj[j]),
                format!("{:?}", c.sigma2[j]),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Square covariance matrix as CSV, with grid times as the header.
pub fn write_covariance_csv(path: impl AsRef<Path>, curve: &CurveEstimate) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(curve.grid.times().iter().map(|t| format!("{t:?}")))?;
    for row in curve.sigma.rows() {
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard::{km_fit, Target};
    use crate::learners::{fit_km_marginal, PropensityKind};
    use crate::survdata::event_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug)]
    struct Constant(f64, Target);

    impl ConditionalSurvival for Constant {
        fn name(&self) -> &str {
            "constant"
        }
        fn target(&self) -> Target {
            self.1
        }
        fn predict_into(&self, _a: u8, _w: &[f64], _t: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|o| *o = self.0);
        }
        fn summary(&self) -> serde_json::Value {
            serde_json::json!({})
        }
    }

    #[test]
    fn eif_trivial_cases() {
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        let s = Constant(1.0, Target::Event);
        let g = Constant(1.0, Target::Censoring);
        let alive = Observation::new(vec![], 1, 5.0, 0);
        assert_eq!(eif_evaluate(&alive, &grid, 1, &s, &g, 1.0, 0.05).unwrap(), vec![1.0, 1.0]);
        let died = Observation::new(vec![], 1, 1.5, 1);
        assert_eq!(eif_evaluate(&died, &grid, 1, &s, &g, 1.0, 0.05).unwrap(), vec![1.0, 0.0]);
        let other = Observation::new(vec![], 0, 0.5, 1);
        let s7 = Constant(0.7, Target::Event);
        assert_eq!(eif_evaluate(&other, &grid, 1, &s7, &g, 0.3, 0.05).unwrap(), vec![0.7, 0.7]);
    }

    #[test]
    fn oracle_nuisances_give_empirical_survival() {
        let ys = [0.5, 1.2, 2.0, 2.7, 3.3];
        let obs: Vec<Observation> = ys.iter().map(|&y| Observation::new(vec![], 1, y, 1)).collect();
        let data = Dataset::new_unchecked_arms(obs, 4.0, vec![]).unwrap();
        let grid = event_grid(&data);
        let nu = FoldNuisance {
            s: Arc::new(Constant(1.0, Target::Event)),
            g: Arc::new(Constant(1.0, Target::Censoring)),
            pi: FittedPropensity::MarginalMean { p: 1.0 },
            survival_report: None,
            propensity_report: None,
        };
        // The propensity clamp sits at 0.99; use a floor-free constant via eta.
        let bundle = NuisanceBundle::from_parts(FoldAssignment::single(5), vec![nu], 1e12).unwrap();
        let (_, theta) = one_step_curve(&data, &bundle, &grid, 1).unwrap();
        for (j, &t) in grid.times().iter().enumerate() {
            let emp = ys.iter().filter(|&&y| y > t).count() as f64 / 5.0;
            let expected = 1.0 - (1.0 - emp) / 0.99;
            assert!((theta[j] - expected).abs() < 1e-12, "{t}: {} vs {expected}", theta[j]);
        }
    }

    pub(crate) fn km_bundle(data: &Dataset) -> NuisanceBundle {
        let nu = FoldNuisance {
            s: Arc::new(fit_km_marginal(data, Target::Event).unwrap()),
            g: Arc::new(fit_km_marginal(data, Target::Censoring).unwrap()),
            pi: crate::learners::fit_propensity(data, &PropensitySpec::new(PropensityKind::MarginalMean)).unwrap(),
            survival_report: None,
            propensity_report: None,
        };
        NuisanceBundle::from_parts(FoldAssignment::single(data.len()), vec![nu], 1e12).unwrap()
    }

    #[test]
    fn km_plug_in_reproduces_km() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let obs: Vec<Observation> = (0..100)
            .map(|_| {
                let a = u8::from(rng.random::<f64>() < 0.4);
                let t = -rng.random::<f64>().ln() * if a == 1 { 3.0 } else { 2.0 };
                let c = rng.random::<f64>() * 6.0;
                Observation::new(vec![], a, t.min(c), u8::from(t <= c))
            })
            .collect();
        let data = Dataset::new(obs, 4.0, vec![]).unwrap();
        let grid = event_grid(&data);
        let bundle = km_bundle(&data);
        for a in 0..2u8 {
            let (_, theta) = one_step_curve(&data, &bundle, &grid, a).unwrap();
            let km = km_fit(&data, Target::Event, Some(a)).unwrap();
            for (j, &t) in grid.times().iter().enumerate() {
                assert!((theta[j] - km.eval(t)).abs() < 1e-10, "arm {a} t {t}: {} vs {}", theta[j], km.eval(t));
            }
        }
    }

    #[test]
    fn variance_hand_example() {
        let eif = EifMatrix {
            arm: 1,
            values: Array2::from_shape_vec((2, 2), vec![0.0, 0.5, 2.0, 0.5]).unwrap(),
            fold_of: vec![0, 0],
            truncation: TruncationCounts::default(),
        };
        let (s2, sig) = variance_covariance(&eif, &[1.0, 0.5]);
        assert_eq!(s2, vec![1.0, 0.0]);
        assert_eq!(sig[[0, 0]], s2[0]);
        assert_eq!(sig[[1, 1]], s2[1]);
        assert_eq!(sig[[0, 1]], sig[[1, 0]]);
    }

    #[test]
    fn floor_applies_to_pi_and_g() {
        let grid = TimeGrid::new(vec![1.0]).unwrap();
        let s = Constant(1.0, Target::Event);
        let g = Constant(0.001, Target::Censoring);
        let died = Observation::new(vec![], 1, 0.5, 1);
        let phi = eif_evaluate(&died, &grid, 1, &s, &g, 0.001, 0.05).unwrap();
        // 1 - (1/0.05)(1/0.05 - 0): both pi and G(y) floored.
        assert!((phi[0] - (1.0 - 20.0 * 20.0)).abs() < 1e-9);
    }
}
