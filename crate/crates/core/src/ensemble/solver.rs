//! Minimization of a convex quadratic `a'Qa - 2c'a` over the probability
//! simplex by accelerated projected gradient with adaptive restart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convex weights over candidates and the risk they achieve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    pub alpha: Vec<f64>,
    pub achieved_risk: f64,
    /// Gradient-mapping residual at the returned point.
    pub kkt_residual: f64,
}

/// Quadratic risk `R(a) = a'Qa - 2c'a + constant`.
#[derive(Debug, Clone)]
pub struct QuadraticRisk {
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub constant: f64,
    pub p: usize,
}

impl QuadraticRisk {
    pub fn value(&self, a: &[f64]) -> f64 {
        let p = self.p;
        let mut v = self.constant;
        for j in 0..p {
            let mut qa = 0.0;
            for k in 0..p {
                qa += self.q[j * p + k] * a[k];
            }
            v += a[j] * qa - 2.0 * self.c[j] * a[j];
        }
        v
    }

    fn grad(&self, a: &[f64], out: &mut [f64]) {
        let p = self.p;
        for j in 0..p {
            let mut qa = 0.0;
            for k in 0..p {
                qa += self.q[j * p + k] * a[k];
            }
            out[j] = 2.0 * (qa - self.c[j]);
        }
    }

    /// Risk at the `j`-th vertex of the simplex.
    pub fn vertex(&self, j: usize) -> f64 {
        self.q[j * self.p + j] - 2.0 * self.c[j] + self.constant
    }
}

/// Euclidean projection onto `{a >= 0, sum a = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn largest_eigenvalue(q: &[f64], p: usize) -> f64 {
    let mut x = vec![1.0 / (p as f64).sqrt(); p];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut y = vec![0.0; p];
        for j in 0..p {
            for k in 0..p {
                y[j] += q[j * p + k] * x[k];
            }
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    lambda
}

const KKT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500_000;

/// Minimizes the risk over the simplex starting from uniform weights.
/// `names` label candidates in error messages.
pub fn solve_simplex_weights(risk: &QuadraticRisk, names: &[String]) -> Result<SimplexWeights> {
    let p = risk.p;
    if p == 0 {
        return Err(Error::Argument("no candidates to weight".into()));
    }
    for j in 0..p {
        let bad = !risk.c[j].is_finite() || (0..p).any(|k| !risk.q[j * p + k].is_finite());
        if bad {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
            return Err(Error::Numerical(format!("non-finite cross-validated loss for candidate {name}")));
        }
    }
    if p == 1 {
        return Ok(SimplexWeights {
            alpha: vec![1.0],
            achieved_risk: risk.vertex(0),
            kkt_residual: 0.0,
        });
    }
    // The scale of Q sets the Lipschitz constant of the gradient.
    let lip = 2.0 * largest_eigenvalue(&risk.q, p) * 1.01 + 1e-300;
    let step = 1.0 / lip;
    let mut x = vec![1.0 / p as f64; p];
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    let mut g = vec![0.0; p];
    let mut residual = f64::INFINITY;
    let mut fx = risk.value(&x);
    for _ in 0..MAX_ITER {
        risk.grad(&y, &mut g);
        let cand: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let x_new = project_simplex(&cand);
        let f_new = risk.value(&x_new);
        // Restart momentum whenever the objective goes up.
        if f_new > fx {
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = x_new;
        fx = f_new;
        t = t_new;

        risk.grad(&x, &mut g);
        let probe: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let px = project_simplex(&probe);
        residual = x.iter().zip(&px).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) * lip;
        if residual < KKT_TOL {
            break;
        }
    }
    // The simplex contains every vertex; never report worse than the best.
    let (best_j, best_v) = (0..p)
        .map(|j| (j, risk.vertex(j)))
        .fold((0, f64::INFINITY), |m, (j, v)| if v < m.1 { (j, v) } else { m });
    if best_v < fx {
        let mut alpha = vec![0.0; p];
        alpha[best_j] = 1.0;
        return Ok(SimplexWeights {
            alpha,
            achieved_risk: best_v,
            kkt_residual: residual,
        });
    }
    Ok(SimplexWeights {
        alpha: x,
        achieved_risk: fx,
        kkt_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.3, 0.3, 0.3]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn identical_candidates_stay_uniform() {
        let risk = QuadraticRisk {
            q: vec![2.0, 2.0, 2.0, 2.0],
            c: vec![1.0, 1.0],
            constant: 0.0,
            p: 2,
        };
        let w = solve_simplex_weights(&risk, &names(2)).unwrap();
        assert_eq!(w.alpha, vec![0.5, 0.5]);
        assert!((w.achieved_risk - risk.vertex(0)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_names_candidate() {
        let risk = QuadraticRisk {
            q: vec![1.0, 0.0, 0.0, f64::NAN],
            c: vec![0.0, 0.0],
            constant: 0.0,
            p: 2,
        };
        let err = solve_simplex_weights(&risk, &names(2)).unwrap_err().to_string();
        assert!(err.contains("c1"), "{err}");
    }

    proptest! {
        #[test]
        fn two_candidates_match_grid(
            a in proptest::collection::vec(-1.0f64..1.0, 6),
            b in proptest::collection::vec(-1.0f64..1.0, 6),
            target in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            // Least squares of `target` on two columns, as a quadratic risk.
            let q = vec![
                a.iter().map(|v| v * v).sum::<f64>(),
                a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>(),
                a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>(),
                b.iter().map(|v| v * v).sum::<f64>(),
            ];
            let c = vec![
                a.iter().zip(&target).map(|(x, y)| x * y).sum::<f64>(),
                b.iter().zip(&target).map(|(x, y)| x * y).sum::<f64>(),
            ];
            let risk = QuadraticRisk { q, c, constant: 0.0, p: 2 };
            let w = solve_simplex_weights(&risk, &names(2)).unwrap();
            let grid_best = (0..=100)
                .map(|k| {
                    let a1 = k as f64 / 100.0;
                    risk.value(&[a1, 1.0 - a1])
                })
                .fold(f64::INFINITY, f64::min);
            prop_assert!(w.achieved_risk <= grid_best + 1e-6);
            prop_assert!(w.achieved_risk <= risk.vertex(0) + 1e-8);
            prop_assert!(w.achieved_risk <= risk.vertex(1) + 1e-8);
            prop_assert!((w.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(w.alpha.iter().all(|&v| v >= 0.0));
        }
    }
}
