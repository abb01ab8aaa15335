//! Small dense helpers: SPD solves for Newton steps, a damped Newton
//! maximizer, and a semidefinite-tolerant Cholesky for covariance matrices.

use ndarray::Array2;

use crate::error::{Error, Result};

/// In-place Cholesky of a row-major `p x p` SPD matrix (lower factor).
/// Returns `false` if a pivot is not strictly positive.
pub(crate) fn cholesky_in_place(a: &mut [f64], p: usize) -> bool {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let l = d.sqrt();
        a[j * p + j] = l;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / l;
        }
    }
    true
}

/// Solves `L L^T x = b` given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            y[i] -= l[i * p + k] * y[k];
        }
        y[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            y[i] -= l[k * p + i] * y[k];
        }
        y[i] /= l[i * p + i];
    }
    y
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub(crate) fn solve_spd(a: &[f64], p: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut l = a.to_vec();
    cholesky_in_place(&mut l, p).then(|| cholesky_solve(&l, p, b))
}

/// Objective value, gradient and (row-major) Hessian at a point.
pub(crate) struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Stop (and flag) once the parameter norm exceeds this.
    pub max_norm: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 100,
            max_norm: None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub capped: bool,
    /// Objective after each accepted iterate, starting with `x0`.
    pub trace: Vec<f64>,
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Maximizes a smooth concave-ish objective by Newton steps with
/// step-halving. When the Hessian is not negative definite the step is
/// Levenberg-damped. Converges when the gradient sup-norm drops below `tol`.
pub(crate) fn newton_maximize<F>(
    learner: &str,
    x0: Vec<f64>,
    opts: &NewtonOptions,
    mut eval: F,
) -> Result<NewtonResult>
where
    F: FnMut(&[f64]) -> Eval,
{
    let p = x0.len();
    let mut x = x0;
    let mut cur = eval(&x);
    if !cur.value.is_finite() {
        return Err(Error::fit(learner, "objective is not finite at the starting point"));
    }
    let mut trace = vec![cur.value];
    for iter in 0..opts.max_iter {
        let gnorm = sup_norm(&cur.grad);
        if gnorm < opts.tol {
            // One undamped polishing step: quadratic convergence takes the
            // iterate from the tolerance to near machine precision.
            let neg_h: Vec<f64> = cur.hess.iter().map(|h| -h).collect();
            if let Some(d) = solve_spd(&neg_h, p, &cur.grad) {
                let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
                let ev = eval(&cand);
                if ev.value.is_finite()
                    && ev.value >= cur.value - 1e-12 * (1.0 + cur.value.abs())
                    && sup_norm(&ev.grad) <= gnorm
                {
                    x = cand;
                    cur = ev;
                    trace.push(cur.value);
                }
            }
            let gnorm = sup_norm(&cur.grad);
            return Ok(NewtonResult {
                x,
                value: cur.value,
                grad_norm: gnorm,
                iterations: iter,
                capped: false,
                trace,
            });
        }
        let neg_h: Vec<f64> = cur.hess.iter().map(|h| -h).collect();
        let scale = (0..p).map(|i| neg_h[i * p + i].abs()).fold(1e-12, f64::max);
        let mut mu = 0.0;
        let dir = loop {
            let mut m = neg_h.clone();
            for i in 0..p {
                m[i * p + i] += mu;
            }
            if let Some(d) = solve_spd(&m, p, &cur.grad) {
                break d;
            }
            mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
            if mu > 1e12 * scale {
                return Err(Error::fit(learner, "could not form an ascent direction"));
            }
        };

        let slack = 1e-12 * (1.0 + cur.value.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ev = eval(&cand);
            if ev.value.is_finite() && ev.value >= cur.value - slack {
                accepted = Some((cand, ev));
                break;
            }
            step *= 0.5;
        }
        let Some((nx, nev)) = accepted else {
            // No representable improvement: accept the current point if the
            // gradient is already tiny relative to the objective scale.
            if gnorm < 1e-6 {
                return Ok(NewtonResult {
                    x,
                    value: cur.value,
                    grad_norm: gnorm,
                    iterations: iter,
                    capped: false,
                    trace,
                });
            }
            return Err(Error::NonConvergence {
                learner: learner.into(),
                iterations: iter,
                grad_norm: gnorm,
            });
        };
        x = nx;
        cur = nev;
        trace.push(cur.value);
        if let Some(cap) = opts.max_norm {
            let norm = l2_norm(&x);
            if norm > cap {
                for v in x.iter_mut() {
                    *v *= cap / norm;
                }
                let ev = eval(&x);
                let gnorm = sup_norm(&ev.grad);
                trace.push(ev.value);
                return Ok(NewtonResult {
                    x,
                    value: ev.value,
                    grad_norm: gnorm,
                    iterations: iter + 1,
                    capped: true,
                    trace,
                });
            }
        }
    }
    let gnorm = sup_norm(&cur.grad);
    if gnorm < opts.tol {
        return Ok(NewtonResult {
            x,
            value: cur.value,
            grad_norm: gnorm,
            iterations: opts.max_iter,
            capped: false,
            trace,
        });
    }
    Err(Error::NonConvergence {
        learner: learner.into(),
        iterations: opts.max_iter,
        grad_norm: gnorm,
    })
}

/// Lower Cholesky factor of a symmetric positive semidefinite matrix.
///
/// The input is symmetrized first. Pivots that vanish up to rounding give a
/// zero column, so exactly singular covariances (e.g. all zeros) factor
/// without jitter. If a pivot is clearly negative, diagonal jitter
/// 1e-12, 1e-11, ..., 1e-8 is tried in turn. Returns the factor and the
/// jitter that was used.
pub fn psd_cholesky(sigma: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
    let m = sigma.nrows();
    if sigma.ncols() != m {
        return Err(Error::Argument("covariance matrix must be square".into()));
    }
    let sym = (sigma + &sigma.t()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariance matrix has non-finite entries".into()));
    }
    let scale = (0..m).map(|i| sym[[i, i]].abs()).fold(0.0, f64::max);
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    for jitter in [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8] {
        if let Some(l) = try_psd_cholesky(&sym, jitter, tol) {
            return Ok((l, jitter));
        }
    }
    Err(Error::Numerical("covariance is not positive semidefinite even with 1e-8 jitter".into()))
}

fn try_psd_cholesky(a: &Array2<f64>, jitter: f64, tol: f64) -> Option<Array2<f64>> {
    let m = a.nrows();
    let mut l = Array2::<f64>::zeros((m, m));
    for j in 0..m {
        let mut d = a[[j, j]] + jitter;
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..m {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = solve_spd(&a, 2, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        assert!(solve_spd(&[1.0, 2.0, 2.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn newton_finds_quadratic_max() {
        let r = newton_maximize("q", vec![0.0, 0.0], &NewtonOptions::default(), |x| Eval {
            value: -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 3.0).powi(2),
            grad: vec![-2.0 * (x[0] - 1.0), -4.0 * (x[1] + 3.0)],
            hess: vec![-2.0, 0.0, 0.0, -4.0],
        })
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] + 3.0).abs() < 1e-12);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn psd_cholesky_handles_singular() {
        let z = Array2::<f64>::zeros((3, 3));
        let (l, j) = psd_cholesky(&z).unwrap();
        assert_eq!(j, 0.0);
        assert!(l.iter().all(|&v| v == 0.0));

        let ones = array![[1.0, 1.0], [1.0, 1.0]];
        let (l, _) = psd_cholesky(&ones).unwrap();
        let back = l.dot(&l.t());
        assert!((&back - &ones).iter().all(|v| v.abs() < 1e-12));

        let bad = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(psd_cholesky(&bad).is_err());
    }
}
