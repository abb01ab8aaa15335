use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_simplex_weights, EnsembleSurvival, LossGrid, QuadraticRisk, SuperLearnerConfig};
use crate::error::{Error, Result};
use crate::hazard::{km_fit, Target};
use crate::learners::{ConditionalSurvival, SurvivalLearner};
use crate::survdata::{make_folds, Dataset, FoldAssignment};

/// Weights below this are treated as exact zeros.
const WEIGHT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedCandidate {
    pub role: Target,
    pub name: String,
    pub reason: String,
}

/// Out-of-fold predictions of one role's candidates.
#[derive(Debug, Clone)]
struct RoleCube {
    names: Vec<String>,
    /// `[(i * p + j) * m + k]`: observation i, candidate j, grid point k.
    grid_values: Vec<f64>,
    /// `[i * p + j]`: prediction at the observation's own follow-up time.
    at_y: Vec<f64>,
}

impl RoleCube {
    fn p(&self) -> usize {
        self.names.len()
    }
}

/// Cross-validated candidate predictions for both roles on a common loss
/// grid. Every prediction for observation `i` comes from a fit that
/// excluded `i`'s fold.
#[derive(Debug, Clone)]
pub struct CvPredictionCube {
    grid: LossGrid,
    n: usize,
    s: RoleCube,
    g: RoleCube,
    /// Out-of-fold stratified censoring Kaplan-Meier at each `y_i`.
    g0_at_y: Vec<f64>,
}

fn role_of(cube: &CvPredictionCube, role: Target) -> &RoleCube {
    match role {
        Target::Event => &cube.s,
        Target::Censoring => &cube.g,
    }
}

impl CvPredictionCube {
    /// Fits every candidate on each fold's training set and predicts the
    /// held-out fold. Candidates failing on any fold are dropped.
    pub fn build(
        data: &Dataset,
        s_learners: &[Arc<dyn SurvivalLearner>],
        g_learners: &[Arc<dyn SurvivalLearner>],
        folds: &FoldAssignment,
        grid: LossGrid,
    ) -> Result<(Self, Vec<DroppedCandidate>)> {
        let n = data.len();
        let fold_data: Vec<(Dataset, Vec<usize>)> = (0..folds.k())
            .map(|f| (data.subset(&folds.training(f)), folds.members(f)))
            .collect();
        let mut dropped = Vec::new();
        let s = build_role(data, s_learners, Target::Event, &fold_data, &grid, &mut dropped)?;
        let g = build_role(data, g_learners, Target::Censoring, &fold_data, &grid, &mut dropped)?;

        let mut g0_at_y = vec![1.0; n];
        for (train, members) in &fold_data {
            let arms = [
                km_fit(train, Target::Censoring, Some(0)).map_err(|e| fold_err(members, folds, e))?,
                km_fit(train, Target::Censoring, Some(1)).map_err(|e| fold_err(members, folds, e))?,
            ];
            for &i in members {
                let o = &data.observations()[i];
                g0_at_y[i] = arms[usize::from(o.a)].eval(o.y);
            }
        }
        Ok((CvPredictionCube { grid, n, s, g, g0_at_y }, dropped))
    }

    pub fn grid(&self) -> &LossGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn candidate_names(&self, role: Target) -> &[String] {
        &role_of(self, role).names
    }

    /// Prediction of candidate `j` for observation `i` at grid point `k`.
    pub fn value(&self, role: Target, i: usize, j: usize, k: usize) -> f64 {
        let r = role_of(self, role);
        r.grid_values[(i * r.p() + j) * self.grid.len() + k]
    }

    /// Prediction of candidate `j` for observation `i` at its own `y_i`.
    pub fn at_y(&self, role: Target, i: usize, j: usize) -> f64 {
        let r = role_of(self, role);
        r.at_y[i * r.p() + j]
    }
}

fn fold_err(members: &[usize], folds: &FoldAssignment, e: Error) -> Error {
    let fold = members.first().map(|&i| folds.fold_of(i) + 1).unwrap_or(0);
    Error::Fold {
        fold,
        source: Box::new(e),
    }
}

fn build_role(
    data: &Dataset,
    learners: &[Arc<dyn SurvivalLearner>],
    role: Target,
    fold_data: &[(Dataset, Vec<usize>)],
    grid: &LossGrid,
    dropped: &mut Vec<DroppedCandidate>,
) -> Result<RoleCube> {
    let n = data.len();
    let m = grid.len();
    let tasks: Vec<(usize, usize)> = (0..learners.len())
        .flat_map(|j| (0..fold_data.len()).map(move |f| (j, f)))
        .collect();
    // Each task yields the held-out rows' predictions: (grid values, at_y).
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = tasks
        .par_iter()
        .map(|&(j, f)| {
            let (train, members) = &fold_data[f];
            let model = learners[j].fit(train, role)?;
            let mut gv = vec![0.0; members.len() * m];
            let mut ay = Vec::with_capacity(members.len());
            for (r, &i) in members.iter().enumerate() {
                let o = &data.observations()[i];
                model.predict_into(o.a, &o.w, grid.points(), &mut gv[r * m..(r + 1) * m]);
                ay.push(model.predict_at(o.a, &o.w, o.y));
            }
            if gv.iter().chain(&ay).any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite prediction".into()));
            }
            Ok((gv, ay))
        })
        .collect();

    let mut keep = Vec::new();
    let mut per_learner: Vec<Vec<(Vec<f64>, Vec<f64>)>> = vec![Vec::new(); learners.len()];
    let mut failed: Vec<Option<String>> = vec![None; learners.len()];
    for (&(j, _), res) in tasks.iter().zip(results) {
        match res {
            Ok(v) => per_learner[j].push(v),
            Err(e) => {
                if failed[j].is_none() {
                    failed[j] = Some(e.to_string());
                }
            }
        }
    }
    for j in 0..learners.len() {
        match &failed[j] {
            Some(reason) => dropped.push(DroppedCandidate {
                role,
                name: learners[j].name(),
                reason: reason.clone(),
            }),
            None => keep.push(j),
        }
    }
    if keep.is_empty() {
        return Err(Error::fit(
            "superlearner",
            format!("every {role:?} candidate failed during cross-validation"),
        ));
    }
    let p = keep.len();
    let mut grid_values = vec![0.0; n * p * m];
    let mut at_y = vec![0.0; n * p];
    for (jj, &j) in keep.iter().enumerate() {
        for (f, (gv, ay)) in per_learner[j].iter().enumerate() {
            for (r, &i) in fold_data[f].1.iter().enumerate() {
                grid_values[(i * p + jj) * m..(i * p + jj + 1) * m].copy_from_slice(&gv[r * m..(r + 1) * m]);
                at_y[i * p + jj] = ay[r];
            }
        }
    }
    Ok(RoleCube {
        names: keep.iter().map(|&j| learners[j].name()).collect(),
        grid_values,
        at_y,
    })
}

/// Pieces of one role's quadratic risk that do not depend on the opponent.
struct RiskParts {
    q: Vec<f64>,
    a: Vec<f64>,
    /// `[i * p + j]`: grid mass of candidate j where the jump term is active.
    b: Vec<f64>,
    /// 1 where observation i carries this role's jump term.
    ind: Vec<f64>,
}

fn risk_parts(cube: &CvPredictionCube, data: &Dataset, role: Target) -> RiskParts {
    let r = role_of(cube, role);
    let (n, p, m) = (cube.n, r.p(), cube.grid.len());
    let h = cube.grid.weight();
    let pts = cube.grid.points();
    let nf = n as f64;
    let mut q = vec![0.0; p * p];
    let mut a = vec![0.0; p];
    let mut b = vec![0.0; n * p];
    let mut ind = vec![0.0; n];
    for (i, o) in data.observations().iter().enumerate() {
        let row = &r.grid_values[i * p * m..(i + 1) * p * m];
        for j in 0..p {
            let sj = &row[j * m..(j + 1) * m];
            a[j] += h * sj.iter().sum::<f64>() / nf;
            for l in 0..=j {
                let sl = &row[l * m..(l + 1) * m];
                q[j * p + l] += h * sj.iter().zip(sl).map(|(x, y)| x * y).sum::<f64>() / nf;
            }
        }
        let active = role.indicator(o.delta);
        ind[i] = f64::from(u8::from(active));
        if active {
            // Event role: I(y <= t). Censoring role: I(y < t).
            let start = match role {
                Target::Event => pts.partition_point(|&t| t < o.y),
                Target::Censoring => pts.partition_point(|&t| t <= o.y),
            };
            for j in 0..p {
                b[i * p + j] = h * row[j * m + start..(j + 1) * m].iter().sum::<f64>();
            }
        }
    }
    for j in 0..p {
        for l in 0..j {
            q[l * p + j] = q[j * p + l];
        }
    }
    RiskParts { q, a, b, ind }
}

impl RiskParts {
    /// Risk given the opponent's (unfloored) prediction at each `y_i`.
    fn risk(&self, opponent_at_y: &[f64], floor: f64) -> QuadraticRisk {
        let p = self.a.len();
        let n = opponent_at_y.len();
        let mut c = self.a.clone();
        for i in 0..n {
            if self.ind[i] == 0.0 {
                continue;
            }
            let inv = 1.0 / opponent_at_y[i].max(floor);
            for j in 0..p {
                c[j] -= self.b[i * p + j] * inv / n as f64;
            }
        }
        QuadraticRisk {
            q: self.q.clone(),
            c,
            constant: 0.0,
            p,
        }
    }
}

fn combine_at_y(r: &RoleCube, alpha: &[f64], n: usize) -> Vec<f64> {
    let p = r.p();
    (0..n)
        .map(|i| (0..p).map(|j| alpha[j] * r.at_y[i * p + j]).sum())
        .collect()
}

/// Largest change of the combined prediction over the cube.
fn sup_change(r: &RoleCube, old: &[f64], new: &[f64], n: usize, m: usize) -> f64 {
    let p = r.p();
    let diff: Vec<f64> = old.iter().zip(new).map(|(a, b)| b - a).collect();
    let mut sup: f64 = 0.0;
    for i in 0..n {
        for k in 0..m {
            let v: f64 = (0..p).map(|j| diff[j] * r.grid_values[(i * p + j) * m + k]).sum();
            sup = sup.max(v.abs());
        }
        let v: f64 = (0..p).map(|j| diff[j] * r.at_y[i * p + j]).sum();
        sup = sup.max(v.abs());
    }
    sup
}

fn clean_weights(alpha: &mut [f64]) {
    for a in alpha.iter_mut() {
        if *a < WEIGHT_EPS {
            *a = 0.0;
        }
    }
    let s: f64 = alpha.iter().sum();
    for a in alpha.iter_mut() {
        *a /= s;
    }
}

/// Risk of the S update at one alternation step: the previous S and the
/// new S, both scored against the same (previous) G.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskStep {
    pub previous: Option<f64>,
    pub updated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperLearnerReport {
    pub s_candidates: Vec<String>,
    pub s_weights: Vec<f64>,
    /// Cross-validated risk of each candidate against the final G.
    pub s_cv_risks: Vec<f64>,
    pub s_risk: f64,
    pub g_candidates: Vec<String>,
    pub g_weights: Vec<f64>,
    pub g_cv_risks: Vec<f64>,
    pub g_risk: f64,
    pub steps: usize,
    pub converged: bool,
    pub s_risk_trace: Vec<RiskStep>,
    pub g_risk_trace: Vec<RiskStep>,
    pub dropped: Vec<DroppedCandidate>,
}

#[derive(Debug, Clone)]
pub struct SuperLearnerFit {
    pub s: EnsembleSurvival,
    pub g: EnsembleSurvival,
    pub report: SuperLearnerReport,
}

fn refit(
    data: &Dataset,
    learners: &[Arc<dyn SurvivalLearner>],
    names: &[String],
    weights: &[f64],
    role: Target,
) -> Result<EnsembleSurvival> {
    let members: Vec<Option<Arc<dyn ConditionalSurvival>>> = names
        .par_iter()
        .zip(weights)
        .map(|(name, &w)| {
            if w <= 0.0 {
                return Ok(None);
            }
            let learner = learners
                .iter()
                .find(|l| &l.name() == name)
                .expect("candidate names come from the learner list");
            learner.fit(data, role).map(Some)
        })
        .collect::<Result<_>>()?;
    EnsembleSurvival::new(role, names.to_vec(), weights.to_vec(), members)
}

/// Alternating ensemble for the event and censoring survival functions.
///
/// Step 0 takes the cross-validated treatment-stratified censoring
/// Kaplan-Meier as G. Step k solves the S weights against G from step k-1,
/// then the G weights against the new S. The loop stops once both combined
/// predictions move by less than `tol` in sup-norm over the cube, or after
/// `max_iter` steps (reported as not converged). With `tol = inf` the
/// step-1 result is returned.
pub fn iterate_superlearner(
    data: &Dataset,
    s_learners: &[Arc<dyn SurvivalLearner>],
    g_learners: &[Arc<dyn SurvivalLearner>],
    config: &SuperLearnerConfig,
) -> Result<SuperLearnerFit> {
    if s_learners.is_empty() || g_learners.is_empty() {
        return Err(Error::Argument("each role needs at least one candidate".into()));
    }
    if s_learners.len() == 1 && g_learners.len() == 1 {
        let s = EnsembleSurvival::single(s_learners[0].fit(data, Target::Event)?);
        let g = EnsembleSurvival::single(g_learners[0].fit(data, Target::Censoring)?);
        let report = SuperLearnerReport {
            s_candidates: vec![s_learners[0].name()],
            s_weights: vec![1.0],
            s_cv_risks: vec![],
            s_risk: f64::NAN,
            g_candidates: vec![g_learners[0].name()],
            g_weights: vec![1.0],
            g_cv_risks: vec![],
            g_risk: f64::NAN,
            steps: 0,
            converged: true,
            s_risk_trace: vec![],
            g_risk_trace: vec![],
            dropped: vec![],
        };
        return Ok(SuperLearnerFit { s, g, report });
    }

    let folds = make_folds(data.len(), config.folds, config.seed)?;
    let grid = LossGrid::new(data.tau(), config.grid_points)?;
    let (cube, dropped) = CvPredictionCube::build(data, s_learners, g_learners, &folds, grid)?;
    let (n, m) = (cube.n, cube.grid.len());
    let s_parts = risk_parts(&cube, data, Target::Event);
    let g_parts = risk_parts(&cube, data, Target::Censoring);
    let s_names = cube.s.names.clone();
    let g_names = cube.g.names.clone();

    let mut g_at_y = cube.g0_at_y.clone();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut s_trace = Vec::new();
    let mut g_trace = Vec::new();
    let mut steps = 0;
    let mut converged = false;
    let (mut s_alpha, mut g_alpha) = (Vec::new(), Vec::new());
    let (mut s_risk, mut g_risk) = (QuadraticRisk { q: vec![], c: vec![], constant: 0.0, p: 0 }, None);
    for step in 1..=config.max_iter.max(1) {
        steps = step;
        s_risk = s_parts.risk(&g_at_y, config.loss_floor);
        let mut sw = solve_simplex_weights(&s_risk, &s_names)?.alpha;
        clean_weights(&mut sw);
        s_trace.push(RiskStep {
            previous: prev.as_ref().map(|(ps, _)| s_risk.value(ps)),
            updated: s_risk.value(&sw),
        });
        let s_at_y = combine_at_y(&cube.s, &sw, n);

        let gr = g_parts.risk(&s_at_y, config.loss_floor);
        let mut gw = solve_simplex_weights(&gr, &g_names)?.alpha;
        clean_weights(&mut gw);
        g_trace.push(RiskStep {
            previous: prev.as_ref().map(|(_, pg)| gr.value(pg)),
            updated: gr.value(&gw),
        });
        g_at_y = combine_at_y(&cube.g, &gw, n);
        g_risk = Some(gr);

        let done = if config.tol.is_infinite() {
            true
        } else if let Some((ps, pg)) = &prev {
            sup_change(&cube.s, ps, &sw, n, m) < config.tol && sup_change(&cube.g, pg, &gw, n, m) < config.tol
        } else {
            false
        };
        s_alpha = sw.clone();
        g_alpha = gw.clone();
        prev = Some((sw, gw));
        if done {
            converged = true;
            break;
        }
    }
    let g_risk = g_risk.expect("at least one step");
    let report = SuperLearnerReport {
        s_cv_risks: (0..s_names.len()).map(|j| s_risk.vertex(j)).collect(),
        s_risk: s_risk.value(&s_alpha),
        g_cv_risks: (0..g_names.len()).map(|j| g_risk.vertex(j)).collect(),
        g_risk: g_risk.value(&g_alpha),
        s_candidates: s_names.clone(),
        s_weights: s_alpha.clone(),
        g_candidates: g_names.clone(),
        g_weights: g_alpha.clone(),
        steps,
        converged,
        s_risk_trace: s_trace,
        g_risk_trace: g_trace,
        dropped,
    };
    let s = refit(data, s_learners, &s_names, &s_alpha, Target::Event)?;
    let g = refit(data, g_learners, &g_names, &g_alpha, Target::Censoring)?;
    Ok(SuperLearnerFit { s, g, report })
}
