//! Candidate nuisance learners.
//!
//! Survival learners fit either the event distribution (`Target::Event`,
//! right-continuous S) or the censoring distribution (`Target::Censoring`,
//! left-continuous G) and return a [`ConditionalSurvival`] that can be
//! evaluated on any time grid. Propensity learners return a
//! [`FittedPropensity`].

mod cox;
mod design;
mod km;
mod parametric;
mod piecewise;
mod propensity;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::hazard::Target;
use crate::survdata::Dataset;

pub use cox::{fit_cox_breslow, CoxFit};
pub use design::Design;
pub use km::{fit_km_marginal, KmMarginalFit};
pub use parametric::{fit_parametric_aft, Family, ParametricFit};
pub use piecewise::{fit_piecewise_hazard, PiecewiseFit};
pub use propensity::{
    fit_logistic, fit_marginal_mean, fit_propensity, FittedPropensity, LogisticFit, PropensityKind,
    PropensitySpec, PROPENSITY_FLOOR,
};

pub(crate) use propensity::logistic_irls;

/// A fitted conditional survival function `t -> P(T > t | a, w)` (event
/// role) or `t -> P(C >= t | a, w)` (censoring role).
pub trait ConditionalSurvival: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Which distribution was fitted; fixes the continuity convention.
    fn target(&self) -> Target;

    /// Writes predictions at ascending `times` into `out`.
    fn predict_into(&self, a: u8, w: &[f64], times: &[f64], out: &mut [f64]);

    fn predict(&self, a: u8, w: &[f64], times: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; times.len()];
        self.predict_into(a, w, times, &mut out);
        out
    }

    fn predict_at(&self, a: u8, w: &[f64], t: f64) -> f64 {
        let mut out = [0.0];
        self.predict_into(a, w, &[t], &mut out);
        out[0]
    }

    /// Parameter summary for reporting.
    fn summary(&self) -> serde_json::Value;
}

/// Anything that can be trained into a [`ConditionalSurvival`].
pub trait SurvivalLearner: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn fit(&self, data: &Dataset, target: Target) -> Result<Arc<dyn ConditionalSurvival>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SurvivalKind {
    KmMarginal,
    ParametricAft { family: Family },
    CoxBreslow,
    PiecewiseHazard { bins: usize },
}

/// Declarative survival learner: kind, covariate subset (all covariates
/// when `None`) and whether to add treatment-by-covariate interactions.
///
/// The text form used in config files is `kind[.int][@i,j,...]` with kind
/// one of `km`, `exp`, `weibull`, `loglogistic`, `cox`, `pch<bins>`; for
/// example `cox.int` or `exp@0,2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurvivalLearnerSpec {
    pub kind: SurvivalKind,
    pub covariate_subset: Option<Vec<usize>>,
    pub include_treatment_interactions: bool,
}

impl SurvivalLearnerSpec {
    pub fn new(kind: SurvivalKind) -> Self {
        SurvivalLearnerSpec {
            kind,
            covariate_subset: None,
            include_treatment_interactions: false,
        }
    }

    pub fn with_interactions(mut self) -> Self {
        self.include_treatment_interactions = true;
        self
    }

    pub fn with_covariates(mut self, subset: Vec<usize>) -> Self {
        self.covariate_subset = Some(subset);
        self
    }

    /// The default candidate library used by the CLI.
    pub fn default_library() -> Vec<SurvivalLearnerSpec> {
        ["km", "exp", "weibull", "loglogistic", "cox", "exp.int", "cox.int", "pch3"]
            .iter()
            .map(|s| s.parse().expect("valid built-in spec"))
            .collect()
    }
}

impl fmt::Display for SurvivalLearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SurvivalKind::KmMarginal => write!(f, "km")?,
            SurvivalKind::ParametricAft { family } => write!(f, "{}", family.short_name())?,
            SurvivalKind::CoxBreslow => write!(f, "cox")?,
            SurvivalKind::PiecewiseHazard { bins } => write!(f, "pch{bins}")?,
        }
        if self.include_treatment_interactions {
            write!(f, ".int")?;
        }
        if let Some(sub) = &self.covariate_subset {
            let parts: Vec<String> = sub.iter().map(|j| j.to_string()).collect();
            write!(f, "@{}", parts.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for SurvivalLearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, subset) = match s.split_once('@') {
            Some((h, sub)) => {
                let idx = sub
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| {
                        p.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Config(format!("bad covariate index in learner '{s}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (h, Some(idx))
            }
            None => (s, None),
        };
        let (kind_str, interactions) = match head.strip_suffix(".int") {
            Some(k) => (k, true),
            None => (head, false),
        };
        let kind = match kind_str {
            "km" | "km_marginal" => SurvivalKind::KmMarginal,
            "exp" | "exponential" => SurvivalKind::ParametricAft {
                family: Family::Exponential,
            },
            "weibull" => SurvivalKind::ParametricAft {
                family: Family::Weibull,
            },
            "loglogistic" => SurvivalKind::ParametricAft {
                family: Family::LogLogistic,
            },
            "cox" | "coxph" => SurvivalKind::CoxBreslow,
            other => match other.strip_prefix("pch") {
                Some(b) => {
                    let bins: usize = b
                        .parse()
                        .map_err(|_| Error::Config(format!("bad bin count in learner '{s}'")))?;
                    if bins == 0 {
                        return Err(Error::Config("piecewise hazard needs at least one bin".into()));
                    }
                    SurvivalKind::PiecewiseHazard { bins }
                }
                None => return Err(Error::Config(format!("unknown survival learner '{s}'"))),
            },
        };
        Ok(SurvivalLearnerSpec {
            kind,
            covariate_subset: subset,
            include_treatment_interactions: interactions,
        })
    }
}

impl SurvivalLearner for SurvivalLearnerSpec {
    fn name(&self) -> String {
        self.to_string()
    }

    fn fit(&self, data: &Dataset, target: Target) -> Result<Arc<dyn ConditionalSurvival>> {
        Ok(match self.kind {
            SurvivalKind::KmMarginal => Arc::new(fit_km_marginal(data, target)?),
            SurvivalKind::ParametricAft { family } => {
                Arc::new(fit_parametric_aft(data, family, target, self)?)
            }
            SurvivalKind::CoxBreslow => Arc::new(fit_cox_breslow(data, target, self)?),
            SurvivalKind::PiecewiseHazard { .. } => Arc::new(fit_piecewise_hazard(data, target, self)?),
        })
    }
}
