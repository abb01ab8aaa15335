//! Monte Carlo harness: replicate datasets, run each estimator, aggregate
//! bias, variance, MSE and coverage with Monte Carlo standard errors.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{augment_features, covariate_sample, fine_grid, marginalized_cox, simulate_with, true_params_from, DgpConfig, TrueParams};
use crate::ensemble::SuperLearnerConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate_curve, fit_nuisances, NuisanceConfig, DEFAULT_ETA};
use crate::inference::{contrast, pointwise_ci, uniform_band, BandOptions, BandStyle, ContrastKind};
use crate::learners::{PropensitySpec, SurvivalLearner, SurvivalLearnerSpec};
use crate::survdata::{event_grid, make_folds, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyEstimator {
    Cfsurv,
    MarginalCox,
}

impl StudyEstimator {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyEstimator::Cfsurv => "cfsurv",
            StudyEstimator::MarginalCox => "marginal_cox",
        }
    }
}

/// Parameters tracked at the evaluation time.
pub const PARAMETERS: [&str; 3] = ["theta0", "theta1", "risk_ratio"];

fn specs(list: &[&str]) -> Vec<Arc<dyn SurvivalLearner>> {
    list.iter()
        .map(|s| Arc::new(s.parse::<SurvivalLearnerSpec>().expect("valid built-in spec")) as Arc<dyn SurvivalLearner>)
        .collect()
}

/// Nuisance libraries for data passed through [`augment_features`]:
/// columns 0-2 are `(w1, w2, w3)` and 3-8 the derived features.
pub fn cf_library() -> NuisanceConfig {
    NuisanceConfig {
        s_learners: specs(&["km", "exp@3,4,2", "cox@3,4,2", "exp.int@3,4,2,6,7", "cox.int@3,4,2,6,7", "weibull.int@3,4,2,6,7"]),
        g_learners: specs(&["km", "exp@5,2", "cox@5,2", "exp@0,1,2"]),
        propensity: ["mean", "logistic@8", "logistic@0,2"]
            .iter()
            .map(|s| s.parse::<PropensitySpec>().expect("valid built-in spec"))
            .collect(),
        superlearner: SuperLearnerConfig::default(),
        eta: DEFAULT_ETA,
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub dgp: DgpConfig,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub estimators: Vec<StudyEstimator>,
    pub seed: u64,
    /// Time at which point parameters are evaluated.
    pub t_eval: f64,
    pub alpha: f64,
    pub folds: usize,
    pub num_paths: usize,
    pub num_boot: usize,
    /// Covariate draws for the truth at `t_eval`; the band truth uses a
    /// fifth of these.
    pub truth_mc: usize,
    /// Pass data through [`augment_features`] before estimation.
    pub augment: bool,
    pub nuisance: NuisanceConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            dgp: DgpConfig::default(),
            ns: vec![500, 1000],
            reps: 200,
            estimators: vec![StudyEstimator::Cfsurv, StudyEstimator::MarginalCox],
            seed: 1,
            t_eval: 12.0,
            alpha: 0.05,
            folds: 5,
            num_paths: 2000,
            num_boot: 100,
            truth_mc: 1_000_000,
            augment: true,
            nuisance: cf_library(),
        }
    }
}

/// One estimator's result for one parameter on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub estimator: StudyEstimator,
    pub parameter: String,
    pub n: usize,
    pub rep: usize,
    pub estimate: f64,
    pub truth: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub band_covered: Option<bool>,
    /// Error message when the replicate failed; the numeric fields are NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub estimator: String,
    pub parameter: String,
    pub n: usize,
    pub metric: String,
    pub value: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub rows: Vec<McRow>,
    pub records: Vec<ReplicateRecord>,
    pub truth: BTreeMap<String, f64>,
}

impl McSummary {
    pub fn get(&self, estimator: StudyEstimator, parameter: &str, n: usize, metric: &str) -> Option<&McRow> {
        self.rows.iter().find(|r| {
            r.estimator == estimator.as_str() && r.parameter == parameter && r.n == n && r.metric == metric
        })
    }
}

struct Truth {
    point: [f64; 3],
    curve: TrueParams,
}

fn data_rng(seed: u64, n: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(rep as u64);
    rng
}

/// The dataset used for replicate `rep` at sample size `n`.
pub fn replicate_dataset(cfg: &StudyConfig, n: usize, rep: usize) -> Result<Dataset> {
    let dgp = DgpConfig { n, ..cfg.dgp.clone() };
    simulate_with(&dgp, &mut data_rng(cfg.seed, n, rep))
}

fn failed(est: StudyEstimator, n: usize, rep: usize, truth: &Truth, msg: String) -> Vec<ReplicateRecord> {
    PARAMETERS
        .iter()
        .zip(truth.point)
        .map(|(p, t)| ReplicateRecord {
            estimator: est,
            parameter: p.to_string(),
            n,
            rep,
            estimate: f64::NAN,
            truth: t,
            ci_lower: f64::NAN,
            ci_upper: f64::NAN,
            band_covered: None,
            error: Some(msg.clone()),
        })
        .collect()
}

fn cf_replicate(cfg: &StudyConfig, data: &Dataset, n: usize, rep: usize, truth: &Truth) -> Result<Vec<ReplicateRecord>> {
    let data = if cfg.augment { augment_features(data)? } else { data.clone() };
    let rep_seed = cfg.seed.wrapping_add(rep as u64);
    let folds = make_folds(data.len(), cfg.folds, rep_seed)?;
    let mut nuisance = cfg.nuisance.clone();
    nuisance.superlearner.seed = rep_seed;
    let bundle = fit_nuisances(&data, &folds, &nuisance)?;
    let grid = event_grid(&data);
    let est = [estimate_curve(&data, &bundle, &grid, 0)?, estimate_curve(&data, &bundle, &grid, 1)?];
    let mut out = Vec::with_capacity(3);
    for a in 0..2 {
        let ci = pointwise_ci(&est[a], cfg.t_eval, cfg.alpha)?;
        let band = uniform_band(
            &est[a],
            &BandOptions {
                style: BandStyle::FixedWidth,
                alpha: cfg.alpha,
                interval: Some((0.0, cfg.t_eval)),
                num_paths: cfg.num_paths,
                seed: rep_seed,
            },
        )?;
        let covered = band
            .times
            .iter()
            .enumerate()
            .all(|(k, &t)| {
                let th = truth.curve.theta(t, a as u8);
                band.lower[k] <= th && th <= band.upper[k]
            });
        out.push(ReplicateRecord {
            estimator: StudyEstimator::Cfsurv,
            parameter: PARAMETERS[a].into(),
            n,
            rep,
            estimate: ci.estimate,
            truth: truth.point[a],
            ci_lower: ci.lower,
            ci_upper: ci.upper,
            band_covered: Some(covered),
            error: None,
        });
    }
    let rr = contrast(&est[0], &est[1], ContrastKind::RiskRatio, cfg.alpha)?;
    let j = grid.count_le(cfg.t_eval);
    if j == 0 || rr.masked[j - 1] {
        return Err(Error::Numerical("risk ratio undefined at the evaluation time".into()));
    }
    out.push(ReplicateRecord {
        estimator: StudyEstimator::Cfsurv,
        parameter: PARAMETERS[2].into(),
        n,
        rep,
        estimate: rr.estimate[j - 1],
        truth: truth.point[2],
        ci_lower: rr.lower[j - 1],
        ci_upper: rr.upper[j - 1],
        band_covered: None,
        error: None,
    });
    Ok(out)
}

fn cox_replicate(cfg: &StudyConfig, data: &Dataset, n: usize, rep: usize, truth: &Truth) -> Result<Vec<ReplicateRecord>> {
    let r = marginalized_cox(data, &[cfg.t_eval], cfg.num_boot, cfg.alpha, cfg.seed.wrapping_add(rep as u64))?;
    let vals = [
        (r.theta[0][0], r.lower[0][0], r.upper[0][0]),
        (r.theta[1][0], r.lower[1][0], r.upper[1][0]),
        (r.risk_ratio[0], r.rr_lower[0], r.rr_upper[0]),
    ];
    Ok((0..3)
        .map(|k| ReplicateRecord {
            estimator: StudyEstimator::MarginalCox,
            parameter: PARAMETERS[k].into(),
            n,
            rep,
            estimate: vals[k].0,
            truth: truth.point[k],
            ci_lower: vals[k].1,
            ci_upper: vals[k].2,
            band_covered: None,
            error: None,
        })
        .collect())
}

fn compute_truth(cfg: &StudyConfig) -> Truth {
    let covs = covariate_sample(cfg.truth_mc, cfg.seed ^ 0x5EED);
    let at = true_params_from(&cfg.dgp, &covs, &[cfg.t_eval]);
    let band_covs = &covs[..(cfg.truth_mc / 5).max(1)];
    let curve = true_params_from(&cfg.dgp, band_covs, &fine_grid(cfg.t_eval, 480));
    Truth {
        point: [at.theta0[0], at.theta1[0], at.risk_ratio(cfg.t_eval)],
        curve,
    }
}

/// Runs every estimator on `reps` datasets per sample size. Replicates that
/// fail are kept with their error and counted in the `failures` metric.
pub fn run_study(cfg: &StudyConfig) -> Result<McSummary> {
    if cfg.ns.is_empty() || cfg.ns.iter().any(|&n| n < 2 * cfg.folds.max(2)) {
        return Err(Error::Argument("every sample size must allow the requested folds".into()));
    }
    if cfg.reps == 0 {
        return Err(Error::Argument("need at least one replicate".into()));
    }
    let truth = compute_truth(cfg);
    let jobs: Vec<(usize, usize)> = cfg.ns.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
    let mut records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let data = replicate_dataset(cfg, n, rep);
            let mut out = Vec::new();
            for &e in &cfg.estimators {
                let res = match &data {
                    Err(err) => Err(Error::Numerical(err.to_string())),
                    Ok(d) => match e {
                        StudyEstimator::Cfsurv => cf_replicate(cfg, d, n, rep, &truth),
                        StudyEstimator::MarginalCox => cox_replicate(cfg, d, n, rep, &truth),
                    },
                };
                out.extend(res.unwrap_or_else(|err| failed(e, n, rep, &truth, err.to_string())));
            }
            out
        })
        .flatten()
        .collect();
    records.sort_by(|a, b| {
        (a.estimator, &a.parameter, a.n, a.rep).cmp(&(b.estimator, &b.parameter, b.n, b.rep))
    });
    let rows = summarize(&records);
    let mut tmap = BTreeMap::new();
    for (p, v) in PARAMETERS.iter().zip(truth.point) {
        tmap.insert(p.to_string(), v);
    }
    Ok(McSummary {
        rows,
        records,
        truth: tmap,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Aggregates records into metric rows. Variance uses divisor R so that
/// `mse = bias^2 + variance` holds exactly up to rounding.
pub fn summarize(records: &[ReplicateRecord]) -> Vec<McRow> {
    let mut groups: BTreeMap<(StudyEstimator, String, usize), Vec<&ReplicateRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.estimator, r.parameter.clone(), r.n)).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((est, param, n), recs) in groups {
        let mut push = |metric: &str, value: f64, mc_se: f64| {
            rows.push(McRow {
                estimator: est.as_str().into(),
                parameter: param.clone(),
                n,
                metric: metric.into(),
                value,
                mc_se,
            })
        };
        let ok: Vec<&&ReplicateRecord> = recs.iter().filter(|r| r.error.is_none() && r.estimate.is_finite()).collect();
        let failures = recs.len() - ok.len();
        push("replicates", ok.len() as f64, 0.0);
        push("failures", failures as f64, 0.0);
        if ok.is_empty() {
            continue;
        }
        let r = ok.len() as f64;
        let truth = ok[0].truth;
        let e: Vec<f64> = ok.iter().map(|x| x.estimate - x.truth).collect();
        let bias = mean(&e);
        let dev: Vec<f64> = e.iter().map(|v| v - bias).collect();
        let var = dev.iter().map(|d| d * d).sum::<f64>() / r;
        let sd = if ok.len() > 1 { (var * r / (r - 1.0)).sqrt() } else { f64::NAN };
        let m4 = dev.iter().map(|d| d.powi(4)).sum::<f64>() / r;
        let sq: Vec<f64> = e.iter().map(|v| v * v).collect();
        let mse = mean(&sq);
        let sq_sd = (sq.iter().map(|v| (v - mse).powi(2)).sum::<f64>() / (r - 1.0).max(1.0)).sqrt();
        push("bias", bias, sd / r.sqrt());
        push("percent_bias", 100.0 * bias / truth, 100.0 * sd / r.sqrt() / truth.abs());
        push("variance", var, ((m4 - var * var).max(0.0) / r).sqrt());
        push("mse", mse, sq_sd / r.sqrt());
        let hits: Vec<f64> = ok
            .iter()
            .filter(|x| x.ci_lower.is_finite() && x.ci_upper.is_finite())
            .map(|x| f64::from(u8::from(x.ci_lower <= x.truth && x.truth <= x.ci_upper)))
            .collect();
        if !hits.is_empty() {
            let p = mean(&hits);
            push("coverage", p, (p * (1.0 - p) / hits.len() as f64).sqrt());
        }
        let bands: Vec<f64> = ok.iter().filter_map(|x| x.band_covered).map(|b| f64::from(u8::from(b))).collect();
        if !bands.is_empty() {
            let p = mean(&bands);
            push("band_coverage", p, (p * (1.0 - p) / bands.len() as f64).sqrt());
        }
    }
    rows
}

/// Tidy CSV `(estimator, parameter, n, metric, value, mc_se)`.
pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[McRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
