//! Step-function survival primitives: product integrals, the inverse map
//! from survival to cumulative hazard, and Kaplan-Meier fits for the event
//! and censoring distributions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survdata::Dataset;

/// Which distribution a survival fit targets. `Censoring` swaps the role of
/// the event indicator (1 - delta) and yields a left-continuous curve
/// G(t) = P(C >= t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Event,
    Censoring,
}

impl Target {
    /// Indicator of having observed *this* target's time.
    pub fn indicator(self, delta: u8) -> bool {
        match self {
            Target::Event => delta == 1,
            Target::Censoring => delta == 0,
        }
    }

    pub fn continuity(self) -> Continuity {
        match self {
            Target::Event => Continuity::Right,
            Target::Censoring => Continuity::Left,
        }
    }
}

/// Evaluation convention at a jump time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuity {
    /// S(t) = P(T > t): the jump at t is included.
    Right,
    /// G(t) = P(C >= t): the jump at t is excluded.
    Left,
}

/// Discrete cumulative hazard with increments in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCumHazard {
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
}

impl StepCumHazard {
    pub fn new(jump_times: Vec<f64>, jump_sizes: Vec<f64>) -> Result<Self> {
        if jump_times.len() != jump_sizes.len() {
            return Err(Error::Argument("jump times and sizes differ in length".into()));
        }
        if jump_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("jump times must be strictly increasing".into()));
        }
        if let Some(s) = jump_sizes.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Domain(format!("hazard increment {s} outside [0, 1]")));
        }
        Ok(StepCumHazard {
            jump_times,
            jump_sizes,
        })
    }

    pub fn empty() -> Self {
        StepCumHazard {
            jump_times: Vec::new(),
            jump_sizes: Vec::new(),
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn jump_sizes(&self) -> &[f64] {
        &self.jump_sizes
    }

    /// Cumulative hazard Λ(t) = Σ_{t_j <= t} dΛ(t_j).
    pub fn cumulative(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.jump_sizes[..k].iter().sum()
    }
}

/// ∏_{t_j <= t} (1 - dΛ(t_j)).
pub fn product_integral(haz: &StepCumHazard, t: f64) -> Result<f64> {
    let mut s = 1.0;
    for (&u, &d) in haz.jump_times.iter().zip(&haz.jump_sizes) {
        if u > t {
            break;
        }
        if d > 1.0 || d < 0.0 {
            return Err(Error::Domain(format!("hazard increment {d} outside [0, 1] at t = {u}")));
        }
        s *= 1.0 - d;
    }
    Ok(s)
}

/// Survival step function. Values are the levels after each jump; the level
/// before the first jump is 1 and the last level is carried forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    jump_times: Vec<f64>,
    values: Vec<f64>,
    convention: Continuity,
}

impl StepSurvival {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>, convention: Continuity) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::Argument("jump times and values differ in length".into()));
        }
        if jump_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("jump times must be strictly increasing".into()));
        }
        let mut prev = 1.0;
        for &v in &values {
            if !(0.0..=1.0).contains(&v) || v > prev {
                return Err(Error::Domain("survival values must be non-increasing in [0, 1]".into()));
            }
            prev = v;
        }
        Ok(StepSurvival {
            jump_times,
            values,
            convention,
        })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn convention(&self) -> Continuity {
        self.convention
    }

    pub fn with_convention(mut self, convention: Continuity) -> Self {
        self.convention = convention;
        self
    }

    /// Evaluates under the curve's own convention.
    pub fn eval(&self, t: f64) -> f64 {
        let k = match self.convention {
            Continuity::Right => self.jump_times.partition_point(|&s| s <= t),
            Continuity::Left => self.jump_times.partition_point(|&s| s < t),
        };
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit S(t-).
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Two-column CSV `(time, survival)` of the jump levels.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["time", "survival"])?;
        for (t, v) in self.jump_times.iter().zip(&self.values) {
            wtr.write_record([format!("{t:?}"), format!("{v:?}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// dΛ(t_j) = [S(t_j-) - S(t_j)] / S(t_j-) over the jumps of `surv`.
pub fn hazard_from_survival(surv: &StepSurvival) -> Result<StepCumHazard> {
    let mut times = Vec::with_capacity(surv.values.len());
    let mut sizes = Vec::with_capacity(surv.values.len());
    let mut prev = 1.0;
    for (&t, &v) in surv.jump_times.iter().zip(&surv.values) {
        if prev <= 0.0 {
            return Err(Error::Domain(format!(
                "hazard undefined at t = {t}: survival already reached zero"
            )));
        }
        times.push(t);
        sizes.push(((prev - v) / prev).clamp(0.0, 1.0));
        prev = v;
    }
    StepCumHazard::new(times, sizes)
}

/// Product-limit estimator within a treatment stratum (`None` pools both
/// arms). At tied times events are processed before censorings, so that
/// S(u-) G(u) equals the at-risk proportion.
pub fn km_fit(data: &Dataset, target: Target, stratum: Option<u8>) -> Result<StepSurvival> {
    let mut rows: Vec<(f64, u8)> = data
        .observations()
        .iter()
        .filter(|o| stratum.is_none_or(|a| o.a == a))
        .map(|o| (o.y, o.delta))
        .collect();
    if rows.is_empty() {
        return Err(Error::fit("kaplan_meier", format!("empty stratum {stratum:?}")));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));

    let mut at_risk = rows.len() as f64;
    let mut surv = 1.0;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let u = rows[i].0;
        let mut events = 0.0;
        let mut censored = 0.0;
        while i < rows.len() && rows[i].0 == u {
            if rows[i].1 == 1 {
                events += 1.0;
            } else {
                censored += 1.0;
            }
            i += 1;
        }
        let factor = match target {
            Target::Event if events > 0.0 => 1.0 - events / at_risk,
            Target::Censoring if censored > 0.0 => 1.0 - censored / (at_risk - events),
            _ => 1.0,
        };
        if factor < 1.0 {
            surv *= factor;
            times.push(u);
            values.push(surv);
        }
        at_risk -= events + censored;
    }
    StepSurvival::new(times, values, target.continuity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survdata::Observation;

    fn data(rows: &[(f64, u8, u8)]) -> Dataset {
        let obs = rows
            .iter()
            .map(|&(y, d, a)| Observation::new(vec![], a, y, d))
            .collect();
        Dataset::new_unchecked_arms(obs, 10.0, vec![]).unwrap()
    }

    #[test]
    fn product_integral_examples() {
        let h = StepCumHazard::new(vec![1.0], vec![0.5]).unwrap();
        assert_eq!(product_integral(&h, 1.0).unwrap(), 0.5);
        assert_eq!(product_integral(&h, 0.9).unwrap(), 1.0);
        assert_eq!(product_integral(&StepCumHazard::empty(), 3.0).unwrap(), 1.0);
        let h2 = StepCumHazard::new(vec![1.0, 2.0], vec![0.5, 1.0]).unwrap();
        assert_eq!(product_integral(&h2, 2.0).unwrap(), 0.0);
        assert!(StepCumHazard::new(vec![1.0], vec![1.5]).is_err());
    }

    #[test]
    fn hazard_from_survival_examples() {
        let s = StepSurvival::new(vec![1.0], vec![0.5], Continuity::Right).unwrap();
        assert_eq!(hazard_from_survival(&s).unwrap().jump_sizes(), &[0.5]);

        let flat = StepSurvival::new(vec![], vec![], Continuity::Right).unwrap();
        assert!(hazard_from_survival(&flat).unwrap().jump_times().is_empty());

        let s3 = StepSurvival::new(vec![1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0], Continuity::Right).unwrap();
        let h = hazard_from_survival(&s3).unwrap();
        assert!((h.jump_sizes()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.jump_sizes()[1] - 0.5).abs() < 1e-15);
        for &t in &[1.0, 2.0] {
            assert!((product_integral(&h, t).unwrap() - s3.eval(t)).abs() < 1e-12);
        }

        let absorbed = StepSurvival::new(vec![1.0, 2.0], vec![0.0, 0.0], Continuity::Right).unwrap();
        assert!(matches!(hazard_from_survival(&absorbed), Err(Error::Domain(_))));
    }

    #[test]
    fn km_examples() {
        let d = data(&[(1.0, 1, 0), (2.0, 0, 0), (3.0, 1, 0)]);
        let s = km_fit(&d, Target::Event, None).unwrap();
        assert!((s.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.eval(3.0), 0.0);
        assert_eq!(s.eval(0.5), 1.0);

        let cens = data(&[(1.0, 0, 0), (2.0, 0, 0)]);
        let s = km_fit(&cens, Target::Event, None).unwrap();
        assert_eq!(s.eval(5.0), 1.0);

        let one = data(&[(1.0, 1, 1)]);
        let s = km_fit(&one, Target::Event, Some(1)).unwrap();
        assert_eq!(s.eval(0.99), 1.0);
        assert_eq!(s.eval(1.0), 0.0);
        assert!(km_fit(&one, Target::Event, Some(0)).is_err());
    }

    #[test]
    fn censoring_curve_is_left_continuous() {
        let d = data(&[(1.0, 1, 0), (2.0, 0, 0), (3.0, 1, 0)]);
        let g = km_fit(&d, Target::Censoring, None).unwrap();
        assert_eq!(g.eval(2.0), 1.0);
        assert!((g.eval(2.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn at_risk_identity_with_ties() {
        let d = data(&[
            (1.0, 1, 0),
            (1.0, 0, 0),
            (2.0, 1, 0),
            (2.0, 1, 0),
            (2.0, 0, 0),
            (3.0, 0, 0),
            (4.0, 1, 0),
            (4.0, 0, 0),
        ]);
        let s = km_fit(&d, Target::Event, None).unwrap();
        let g = km_fit(&d, Target::Censoring, None).unwrap();
        let n = d.len() as f64;
        for &u in &[1.0, 2.0, 3.0, 4.0] {
            let r = d.observations().iter().filter(|o| o.y >= u).count() as f64 / n;
            assert!((s.eval_left(u) * g.eval(u) - r).abs() < 1e-12, "u = {u}");
        }
    }
}
