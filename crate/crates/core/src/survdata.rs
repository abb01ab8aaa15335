//! Observed-data model: right-censored observations with a binary
//! treatment, CSV ingestion, evaluation grids and balanced fold splits.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject: covariates `w`, treatment `a`, follow-up `y = min(T, C)`
/// and event indicator `delta = 1{T <= C}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub w: Vec<f64>,
    pub a: u8,
    pub y: f64,
    pub delta: u8,
}

impl Observation {
    pub fn new(w: Vec<f64>, a: u8, y: f64, delta: u8) -> Self {
        Observation { w, a, y, delta }
    }

    pub fn is_event(&self) -> bool {
        self.delta == 1
    }

    fn check(&self, d: usize) -> std::result::Result<(), String> {
        if self.a > 1 {
            return Err(format!("treatment must be 0 or 1, got {}", self.a));
        }
        if self.delta > 1 {
            return Err(format!("event indicator must be 0 or 1, got {}", self.delta));
        }
        if !self.y.is_finite() || self.y < 0.0 {
            return Err(format!("follow-up time must be finite and >= 0, got {}", self.y));
        }
        if self.w.len() != d {
            return Err(format!("expected {} covariates, got {}", d, self.w.len()));
        }
        if let Some(j) = self.w.iter().position(|v| !v.is_finite()) {
            return Err(format!("covariate {j} is not a finite number"));
        }
        Ok(())
    }
}

/// A validated sample together with its analysis horizon `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    observations: Vec<Observation>,
    tau: f64,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>, tau: f64, covariate_names: Vec<String>) -> Result<Self> {
        let data = Self::new_unchecked_arms(observations, tau, covariate_names)?;
        for arm in [0u8, 1] {
            if !data.observations.iter().any(|o| o.a == arm) {
                return Err(Error::Validation(format!("no observations with a = {arm}")));
            }
        }
        Ok(data)
    }

    /// Validates rows and `tau` but allows a single treatment arm; used for
    /// training subsets and stratum-level fits.
    pub fn new_unchecked_arms(
        observations: Vec<Observation>,
        tau: f64,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Validation(format!("tau must be positive and finite, got {tau}")));
        }
        let d = covariate_names.len();
        for (row, obs) in observations.iter().enumerate() {
            obs.check(d).map_err(|msg| Error::Row { row, msg })?;
        }
        Ok(Dataset {
            observations,
            tau,
            covariate_names,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            observations: idx.iter().map(|&i| self.observations[i].clone()).collect(),
            tau: self.tau,
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Same rows with a different horizon.
    pub fn with_tau(&self, tau: f64) -> Result<Dataset> {
        Dataset::new_unchecked_arms(self.observations.clone(), tau, self.covariate_names.clone())
    }

    pub fn count_arm(&self, arm: u8) -> usize {
        self.observations.iter().filter(|o| o.a == arm).count()
    }

    /// Writes the dataset with columns `w..., a, y, delta`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.covariate_names.clone();
        header.extend(["a", "y", "delta"].map(String::from));
        wtr.write_record(&header)?;
        for o in &self.observations {
            let mut rec: Vec<String> = o.w.iter().map(|v| format!("{v:?}")).collect();
            rec.push(o.a.to_string());
            rec.push(format!("{:?}", o.y));
            rec.push(o.delta.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub covariates: Vec<String>,
    pub treatment: String,
    pub time: String,
    pub event: String,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            covariates: Vec::new(),
            treatment: "a".into(),
            time: "y".into(),
            event: "delta".into(),
        }
    }
}

fn parse_binary(field: &str, what: &str) -> std::result::Result<u8, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("{what} value {field:?} is not numeric"))?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(format!("{what} must be 0 or 1, got {field}"))
    }
}

fn parse_real(field: &str, what: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("{what} value {field:?} is not numeric"))?;
    if !v.is_finite() {
        return Err(format!("{what} value {field:?} is not finite"));
    }
    Ok(v)
}

/// Reads a header-bearing CSV. Any row with a missing or malformed
/// declared field is rejected; nothing is imputed. `row` in errors is the
/// 0-based data row (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>, columns: &ColumnSpec, tau: f64) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
    };
    let cov_idx = columns
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let a_idx = find(&columns.treatment)?;
    let y_idx = find(&columns.time)?;
    let d_idx = find(&columns.event)?;

    let mut observations = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let parsed = (|| -> std::result::Result<Observation, String> {
            let w = cov_idx
                .iter()
                .zip(&columns.covariates)
                .map(|(&i, name)| parse_real(get(i), name))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let a = parse_binary(get(a_idx), &columns.treatment)?;
            let y = parse_real(get(y_idx), &columns.time)?;
            if y < 0.0 {
                return Err(format!("{} must be >= 0, got {y}", columns.time));
            }
            let delta = parse_binary(get(d_idx), &columns.event)?;
            Ok(Observation { w, a, y, delta })
        })();
        observations.push(parsed.map_err(|msg| Error::Row { row, msg })?);
    }
    Dataset::new(observations, tau, columns.covariates.clone())
}

/// Assignment of observation indices to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldAssignment {
    /// Every observation in a single fold. Nuisances attached to such an
    /// assignment are plug-in (not cross-fitted) estimates.
    pub fn single(n: usize) -> Self {
        FoldAssignment {
            fold_of: vec![0; n],
            k: 1,
            seed: 0,
        }
    }

    /// Builds an assignment from explicit 0-based fold labels.
    pub fn from_labels(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || fold_of.iter().any(|&f| f >= k) {
            return Err(Error::Argument("fold label out of range".into()));
        }
        Ok(FoldAssignment { fold_of, k, seed: 0 })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// 0-based fold of observation `i`.
    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.fold_of
    }

    /// Held-out indices V_k.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Training indices: the complement of V_k. For a single-fold
    /// assignment this is every index.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        if self.k == 1 {
            return (0..self.n()).collect();
        }
        (0..self.n()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }

    /// Two-column CSV `(index, fold)` with 1-based folds.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["index", "fold"])?;
        for (i, f) in self.fold_of.iter().enumerate() {
            wtr.write_record([i.to_string(), (f + 1).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Uniformly random balanced partition of `0..n` into `k` folds; fold sizes
/// differ by at most one. Deterministic in `seed`.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n / 2 {
        return Err(Error::Argument(format!(
            "fold count must satisfy 2 <= K <= floor(n/2) (n = {n}, K = {k})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

/// Strictly increasing evaluation times in (0, tau].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Argument("time grid must be non-empty".into()));
        }
        if times[0] <= 0.0 || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument("grid times must be finite and > 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("grid times must be strictly increasing".into()));
        }
        Ok(TimeGrid { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    /// Number of grid points `<= t`; the right-continuous step value at `t`
    /// is the one stored at index `count_le(t) - 1` (none before the first
    /// point).
    pub fn count_le(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// Sub-grid of the points lying in `[lo, hi]`, with their indices.
    pub fn restrict(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.times[j] >= lo && self.times[j] <= hi).collect()
    }
}

/// Unique observed follow-up times in (0, tau], sorted, with tau appended
/// when it is not itself an observed time.
pub fn event_grid(data: &Dataset) -> TimeGrid {
    let tau = data.tau();
    let mut times: Vec<f64> = data
        .observations()
        .iter()
        .map(|o| o.y)
        .filter(|&y| y > 0.0 && y <= tau)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    if times.last().is_none_or(|&t| t < tau) {
        times.push(tau);
    }
    TimeGrid { times }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn obs(y: f64) -> Observation {
        Observation::new(vec![0.0], (y as u64 % 2) as u8, y, 1)
    }

    fn ds(ys: &[f64], tau: f64) -> Dataset {
        let mut o: Vec<Observation> = ys.iter().map(|&y| obs(y)).collect();
        o[0].a = 0;
        o.last_mut().unwrap().a = 1;
        Dataset::new(o, tau, vec!["w1".into()]).unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn cols() -> ColumnSpec {
        ColumnSpec {
            covariates: vec!["w1".into()],
            ..Default::default()
        }
    }

    #[test]
    fn loads_valid_file() {
        let f = write_tmp("w1,a,y,delta\n0.5,1,2.0,1\n1.5,0,3.0,0\n-2,1,0.5,1\n");
        let d = load_csv(f.path(), &cols(), 5.0).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.observations()[2].w, vec![-2.0]);
    }

    #[test]
    fn rejects_non_binary_treatment_with_row() {
        let f = write_tmp("w1,a,y,delta\n0.5,1,2.0,1\n1.5,2,3.0,0\n");
        match load_csv(f.path(), &cols(), 5.0) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_na_time() {
        let f = write_tmp("w1,a,y,delta\n0.5,1,NA,1\n1.5,0,3.0,0\n");
        match load_csv(f.path(), &cols(), 5.0) {
            Err(Error::Row { row, msg }) => {
                assert_eq!(row, 0);
                assert!(msg.contains("NA"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_time_and_missing_column() {
        let f = write_tmp("w1,a,y,delta\n0.5,1,-1,1\n1.5,0,3.0,0\n");
        assert!(matches!(load_csv(f.path(), &cols(), 5.0), Err(Error::Row { row: 0, .. })));
        let g = write_tmp("w1,a,time,delta\n0.5,1,1,1\n");
        assert!(matches!(load_csv(g.path(), &cols(), 5.0), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_round_trip_is_idempotent() {
        let f = write_tmp("w1,a,y,delta\n0.1,1,2.25,1\n1.5,0,3.0,0\n");
        let d = load_csv(f.path(), &cols(), 4.0).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        d.write_csv(out.path()).unwrap();
        let again = load_csv(out.path(), &cols(), 4.0).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn fold_sizes() {
        let f = make_folds(10, 3, 7).unwrap();
        let mut s = f.sizes();
        s.sort();
        assert_eq!(s, vec![3, 3, 4]);
        assert_eq!(make_folds(6, 3, 1).unwrap().sizes(), vec![2, 2, 2]);
        assert_eq!(make_folds(10, 3, 7).unwrap(), f);
        assert!(make_folds(10, 6, 1).is_err());
        assert!(make_folds(10, 1, 1).is_err());
    }

    #[test]
    fn grid_examples() {
        assert_eq!(event_grid(&ds(&[3.0, 1.0, 3.0, 2.0], 5.0)).times(), &[1.0, 2.0, 3.0, 5.0]);
        assert_eq!(event_grid(&ds(&[6.0, 7.0], 5.0)).times(), &[5.0]);
        assert_eq!(event_grid(&ds(&[0.0, 1.0], 1.0)).times(), &[1.0]);
    }

    #[test]
    fn accepts_zero_follow_up() {
        let d = Dataset::new(
            vec![Observation::new(vec![], 0, 0.0, 0), Observation::new(vec![], 1, 1.0, 1)],
            2.0,
            vec![],
        );
        assert!(d.is_ok());
    }

    #[test]
    fn count_le_is_right_continuous_index() {
        let g = TimeGrid::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.count_le(0.5), 0);
        assert_eq!(g.count_le(1.0), 1);
        assert_eq!(g.count_le(2.5), 2);
        assert_eq!(g.count_le(9.0), 3);
    }
}
