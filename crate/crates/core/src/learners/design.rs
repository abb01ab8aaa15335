use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survdata::Dataset;

/// Design-matrix recipe for regression learners: optional intercept,
/// treatment column, a covariate subset and treatment-by-covariate
/// interactions. Non-intercept columns are standardized with training
/// moments; collinear columns are dropped at fit time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Design {
    intercept: bool,
    treatment: bool,
    interactions: bool,
    covariates: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    keep: Vec<usize>,
    names: Vec<String>,
    pub dropped: Vec<String>,
}

impl Design {
    /// Builds the recipe from training data and returns it together with
    /// the row-major `n x p` training matrix.
    pub fn fit(
        data: &Dataset,
        covariates: Option<&[usize]>,
        intercept: bool,
        treatment: bool,
        interactions: bool,
    ) -> Result<(Design, Vec<f64>)> {
        let d = data.dim();
        let covariates: Vec<usize> = match covariates {
            Some(c) => c.to_vec(),
            None => (0..d).collect(),
        };
        if let Some(&bad) = covariates.iter().find(|&&j| j >= d) {
            return Err(Error::Argument(format!("covariate index {bad} out of range (d = {d})")));
        }
        let cov_names = data.covariate_names();
        let mut raw_names = Vec::new();
        if intercept {
            raw_names.push("(intercept)".to_string());
        }
        if treatment {
            raw_names.push("a".to_string());
        }
        for &j in &covariates {
            raw_names.push(cov_names[j].clone());
        }
        if treatment && interactions {
            for &j in &covariates {
                raw_names.push(format!("a:{}", cov_names[j]));
            }
        }
        let p_raw = raw_names.len();
        let n = data.len();

        let mut proto = Design {
            intercept,
            treatment,
            interactions: treatment && interactions,
            covariates,
            center: vec![0.0; p_raw],
            scale: vec![1.0; p_raw],
            keep: (0..p_raw).collect(),
            names: raw_names.clone(),
            dropped: Vec::new(),
        };
        let mut raw = vec![0.0; n * p_raw];
        for (i, o) in data.observations().iter().enumerate() {
            proto.raw_row(o.a, &o.w, &mut raw[i * p_raw..(i + 1) * p_raw]);
        }
        let first = usize::from(intercept);
        for c in first..p_raw {
            let mean = (0..n).map(|i| raw[i * p_raw + c]).sum::<f64>() / n.max(1) as f64;
            let var = (0..n).map(|i| (raw[i * p_raw + c] - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
            proto.center[c] = mean;
            proto.scale[c] = if var > 0.0 { var.sqrt() } else { 0.0 };
        }

        // Standardize; constant columns become zero columns and are dropped
        // by the rank check below.
        let mut z = vec![0.0; n * p_raw];
        for i in 0..n {
            for c in 0..p_raw {
                let v = raw[i * p_raw + c];
                z[i * p_raw + c] = if c < first {
                    v
                } else if proto.scale[c] > 0.0 {
                    (v - proto.center[c]) / proto.scale[c]
                } else {
                    0.0
                };
            }
        }

        // Modified Gram-Schmidt against an implicit intercept (the
        // standardized columns are already centered).
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let ones = vec![1.0 / (n.max(1) as f64).sqrt(); n];
        basis.push(ones);
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for c in 0..p_raw {
            if c < first {
                keep.push(c);
                continue;
            }
            let mut v: Vec<f64> = (0..n).map(|i| z[i * p_raw + c]).collect();
            let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm0 == 0.0 || norm < 1e-8 * norm0 {
                dropped.push(raw_names[c].clone());
                continue;
            }
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
            keep.push(c);
        }

        let p = keep.len();
        let mut x = vec![0.0; n * p];
        for i in 0..n {
            for (k, &c) in keep.iter().enumerate() {
                x[i * p + k] = z[i * p_raw + c];
            }
        }
        proto.names = keep.iter().map(|&c| raw_names[c].clone()).collect();
        proto.keep = keep;
        proto.dropped = dropped;
        Ok((proto, x))
    }

    fn raw_row(&self, a: u8, w: &[f64], out: &mut [f64]) {
        let af = f64::from(a);
        let mut k = 0;
        if self.intercept {
            out[k] = 1.0;
            k += 1;
        }
        if self.treatment {
            out[k] = af;
            k += 1;
        }
        for &j in &self.covariates {
            out[k] = w[j];
            k += 1;
        }
        if self.interactions {
            for &j in &self.covariates {
                out[k] = af * w[j];
                k += 1;
            }
        }
    }

    /// Number of retained columns.
    pub fn p(&self) -> usize {
        self.keep.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Linear predictor `x(a, w)' beta` for retained columns.
    pub fn linear_predictor(&self, a: u8, w: &[f64], beta: &[f64]) -> f64 {
        let first = usize::from(self.intercept);
        let mut raw = [0.0; 64];
        let p_raw = self.center.len();
        let buf: &mut [f64] = if p_raw <= 64 {
            &mut raw[..p_raw]
        } else {
            return self.linear_predictor_alloc(a, w, beta);
        };
        self.raw_row(a, w, buf);
        self.keep
            .iter()
            .zip(beta)
            .map(|(&c, b)| b * self.standardize(c, first, buf[c]))
            .sum()
    }

    fn linear_predictor_alloc(&self, a: u8, w: &[f64], beta: &[f64]) -> f64 {
        let first = usize::from(self.intercept);
        let mut buf = vec![0.0; self.center.len()];
        self.raw_row(a, w, &mut buf);
        self.keep
            .iter()
            .zip(beta)
            .map(|(&c, b)| b * self.standardize(c, first, buf[c]))
            .sum()
    }

    /// Coefficients on the original covariate scale, keyed by column name.
    pub fn raw_coefficients(&self, beta: &[f64]) -> Vec<(String, f64)> {
        let first = usize::from(self.intercept);
        let mut out: Vec<(String, f64)> = Vec::with_capacity(beta.len());
        let mut shift = 0.0;
        for (k, (&c, &b)) in self.keep.iter().zip(beta).enumerate() {
            if c < first {
                out.push((self.names[k].clone(), b));
            } else {
                let s = self.scale[c];
                shift += b * self.center[c] / s;
                out.push((self.names[k].clone(), b / s));
            }
        }
        if self.intercept {
            if let Some(first) = out.first_mut() {
                first.1 -= shift;
            }
        }
        out
    }

    fn standardize(&self, c: usize, first: usize, v: f64) -> f64 {
        if c < first {
            v
        } else if self.scale[c] > 0.0 {
            (v - self.center[c]) / self.scale[c]
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survdata::Observation;

    #[test]
    fn drops_collinear_columns() {
        let obs = (0..6)
            .map(|i| {
                let x = i as f64;
                Observation::new(vec![x, 2.0 * x + 1.0, 3.0], (i % 2) as u8, 1.0, 1)
            })
            .collect();
        let data = Dataset::new(obs, 2.0, vec!["x".into(), "x2".into(), "c".into()]).unwrap();
        let (design, x) = Design::fit(&data, None, true, true, false).unwrap();
        assert_eq!(design.names(), &["(intercept)", "a", "x"]);
        assert_eq!(design.dropped, vec!["x2".to_string(), "c".to_string()]);
        assert_eq!(x.len(), 6 * 3);
        let beta = [0.5, 1.0, -2.0];
        let o = &data.observations()[4];
        let lp = design.linear_predictor(o.a, &o.w, &beta);
        let direct: f64 = (0..3).map(|k| x[4 * 3 + k] * beta[k]).sum();
        assert!((lp - direct).abs() < 1e-12);
    }
}
