use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_simplex_weights, QuadraticRisk};
use crate::error::{Error, Result};
use crate::learners::{fit_propensity, FittedPropensity, PropensitySpec};
use crate::survdata::{make_folds, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityReport {
    pub candidates: Vec<String>,
    pub weights: Vec<f64>,
    /// Cross-validated mean squared error of each candidate.
    pub cv_risks: Vec<f64>,
    pub risk: f64,
    pub dropped: Vec<(String, String)>,
}

/// Convex combination of propensity candidates minimizing cross-validated
/// squared error of A. Candidates that fail on any fold are dropped.
pub fn propensity_superlearner(
    data: &Dataset,
    candidates: &[PropensitySpec],
    folds: usize,
    seed: u64,
) -> Result<(FittedPropensity, PropensityReport)> {
    if candidates.is_empty() {
        return Err(Error::Argument("propensity ensemble needs at least one candidate".into()));
    }
    if candidates.len() == 1 {
        let fit = fit_propensity(data, &candidates[0])?;
        let report = PropensityReport {
            candidates: vec![candidates[0].to_string()],
            weights: vec![1.0],
            cv_risks: vec![],
            risk: f64::NAN,
            dropped: vec![],
        };
        return Ok((fit, report));
    }
    let n = data.len();
    let fa = make_folds(n, folds, seed)?;
    let per_candidate: Vec<Result<Vec<f64>>> = candidates
        .par_iter()
        .map(|spec| {
            let mut pred = vec![0.0; n];
            for f in 0..fa.k() {
                let model = fit_propensity(&data.subset(&fa.training(f)), spec)?;
                for i in fa.members(f) {
                    pred[i] = model.predict(&data.observations()[i].w);
                }
            }
            Ok(pred)
        })
        .collect();
    let mut keep = Vec::new();
    let mut preds = Vec::new();
    let mut dropped = Vec::new();
    for (j, r) in per_candidate.into_iter().enumerate() {
        match r {
            Ok(p) => {
                keep.push(j);
                preds.push(p);
            }
            Err(e) => dropped.push((candidates[j].to_string(), e.to_string())),
        }
    }
    if keep.is_empty() {
        return Err(Error::fit("propensity ensemble", "every candidate failed"));
    }
    let p = keep.len();
    let nf = n as f64;
    let a: Vec<f64> = data.observations().iter().map(|o| f64::from(o.a)).collect();
    let mut q = vec![0.0; p * p];
    let mut c = vec![0.0; p];
    for j in 0..p {
        c[j] = preds[j].iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() / nf;
        for l in 0..p {
            q[j * p + l] = preds[j].iter().zip(&preds[l]).map(|(x, y)| x * y).sum::<f64>() / nf;
        }
    }
    let risk = QuadraticRisk {
        q,
        c,
        constant: a.iter().map(|v| v * v).sum::<f64>() / nf,
        p,
    };
    let names: Vec<String> = keep.iter().map(|&j| candidates[j].to_string()).collect();
    let sol = solve_simplex_weights(&risk, &names)?;
    let members = keep
        .iter()
        .zip(&sol.alpha)
        .map(|(&j, &w)| {
            if w > 0.0 {
                fit_propensity(data, &candidates[j])
            } else {
                Ok(FittedPropensity::MarginalMean { p: 0.5 })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let report = PropensityReport {
        cv_risks: (0..p).map(|j| risk.vertex(j)).collect(),
        risk: sol.achieved_risk,
        candidates: names.clone(),
        weights: sol.alpha.clone(),
        dropped,
    };
    let fit = FittedPropensity::Ensemble {
        names,
        weights: sol.alpha,
        members,
    };
    Ok((fit, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{PropensityKind, PROPENSITY_FLOOR};
    use crate::survdata::Observation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_wins_on_covariate_driven_treatment() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let obs = (0..2000)
            .map(|_| {
                let w = rng.random::<f64>() * 6.0 - 3.0;
                let a = u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-1.5 * w).exp()));
                Observation::new(vec![w], a, 1.0, 1)
            })
            .collect();
        let data = Dataset::new(obs, 2.0, vec!["w".into()]).unwrap();
        let (fit, report) = propensity_superlearner(&data, &PropensitySpec::default_library(), 5, 3).unwrap();
        assert!(report.weights[1] > 0.5, "{:?}", report.weights);
        assert!(report.risk <= report.cv_risks.iter().cloned().fold(f64::INFINITY, f64::min) + 1e-8);
        let p = fit.predict(&[2.9]);
        assert!(p > 0.9 && p <= 1.0 - PROPENSITY_FLOOR);
    }

    #[test]
    fn single_candidate_has_unit_weight() {
        let obs = (0..10).map(|i| Observation::new(vec![i as f64], (i % 2) as u8, 1.0, 1)).collect();
        let data = Dataset::new(obs, 2.0, vec!["w".into()]).unwrap();
        let (_, report) =
            propensity_superlearner(&data, &[PropensitySpec::new(PropensityKind::MarginalMean)], 2, 1).unwrap();
        assert_eq!(report.weights, vec![1.0]);
    }

    #[test]
    fn failing_logistic_is_dropped() {
        // Treated rows all fall in one fold, so some training sets see one class.
        let obs = (0..12).map(|i| Observation::new(vec![i as f64], u8::from(i == 0), 1.0, 1)).collect();
        let data = Dataset::new(obs, 2.0, vec!["w".into()]).unwrap();
        let (fit, report) = propensity_superlearner(&data, &PropensitySpec::default_library(), 3, 1).unwrap();
        assert_eq!(report.candidates, vec!["mean".to_string()]);
        assert_eq!(report.dropped.len(), 1);
        assert!((fit.predict(&[0.0]) - 1.0 / 12.0).abs() < 1e-12);
    }
}
