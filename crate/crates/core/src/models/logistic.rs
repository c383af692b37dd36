//! L2-regularized logistic and softmax regression fitted by damped Newton.
//!
//! Class 0 is the reference: in the binary case it carries no parameters
//! at all (plain logistic regression on class 1); in the multiclass case
//! every class has weights but class 0's intercept is pinned to zero.
//! Intercepts are never penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// One row per class, on standardized features.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value before the first step and after every step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

struct Layout {
    p: usize,
    k: usize,
    free_classes: Vec<usize>,
}

impl Layout {
    fn dim(&self) -> usize {
        self.free_classes.len() * (self.p + 1) - usize::from(self.free_classes.first() == Some(&0))
    }

    /// Parameter index of (class, column) where column 0 is the intercept.
    fn index(&self, class: usize, col: usize) -> Option<usize> {
        let pos = self.free_classes.iter().position(|&c| c == class)?;
        let pinned = usize::from(self.free_classes[0] == 0);
        if class == 0 && col == 0 {
            return None;
        }
        Some(pos * (self.p + 1) + col - pinned)
    }

    fn unpack(&self, theta: &DVector<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut w = vec![vec![0.0; self.p]; self.k];
        let mut b = vec![0.0; self.k];
        for &c in &self.free_classes {
            if let Some(i) = self.index(c, 0) {
                b[c] = theta[i];
            }
            for j in 0..self.p {
                w[c][j] = theta[self.index(c, j + 1).unwrap()];
            }
        }
        (w, b)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

struct Problem<'a> {
    z: &'a [Vec<f64>],
    y: &'a [usize],
    lambda: f64,
    layout: Layout,
}

impl Problem<'_> {
    fn logits(&self, w: &[Vec<f64>], b: &[f64], row: &[f64]) -> Vec<f64> {
        (0..self.layout.k)
            .map(|c| b[c] + w[c].iter().zip(row).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let (w, b) = self.layout.unpack(theta);
        let n = self.z.len() as f64;
        let nll: f64 = self
            .z
            .iter()
            .zip(self.y)
            .map(|(row, &y)| {
                let l = self.logits(&w, &b, row);
                log_sum_exp(&l) - l[y]
            })
            .sum();
        let pen: f64 = w.iter().flatten().map(|v| v * v).sum();
        nll / n + 0.5 * self.lambda * pen
    }

    fn gradient_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let lay = &self.layout;
        let d = lay.dim();
        let (w, b) = lay.unpack(theta);
        let n = self.z.len();
        let inv_n = 1.0 / n as f64;
        let cols = lay.p + 1;
        let x = DMatrix::from_fn(n, cols, |i, j| if j == 0 { 1.0 } else { self.z[i][j - 1] });
        let probs: Vec<Vec<f64>> = self.z.iter().map(|row| softmax(&self.logits(&w, &b, row))).collect();
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for &c in &lay.free_classes {
            let resid = DVector::from_fn(n, |i, _| probs[i][c] - f64::from(u8::from(self.y[i] == c)));
            let block = x.tr_mul(&resid) * inv_n;
            for j in 0..cols {
                if let Some(i) = lay.index(c, j) {
                    g[i] = block[j];
                }
            }
            for &c2 in lay.free_classes.iter().filter(|&&c2| c2 >= c) {
                let mut xw = x.clone();
                for (i, mut row) in xw.row_iter_mut().enumerate() {
                    let pr = &probs[i];
                    row *= pr[c] * (f64::from(u8::from(c == c2)) - pr[c2]) * inv_n;
                }
                let block = x.tr_mul(&xw);
                for j in 0..cols {
                    let Some(i) = lay.index(c, j) else { continue };
                    for j2 in 0..cols {
                        if let Some(i2) = lay.index(c2, j2) {
                            h[(i, i2)] = block[(j, j2)];
                            h[(i2, i)] = block[(j, j2)];
                        }
                    }
                }
            }
        }
        for &c in &lay.free_classes {
            for j in 1..cols {
                let i = lay.index(c, j).unwrap();
                g[i] += self.lambda * theta[i];
                h[(i, i)] += self.lambda;
            }
        }
        (g, h)
    }
}

/// Solves `(h + mu I) x = g`, raising `mu` until the factorization succeeds.
fn damped_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let mut mu = 0.0;
    for _ in 0..40 {
        let mut m = h.clone();
        if mu > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += mu;
            }
        }
        if let Some(ch) = m.cholesky() {
            let x = ch.solve(g);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        mu = if mu == 0.0 { 1e-10 } else { mu * 10.0 };
    }
    None
}

/// Mean and population standard deviation of each column; a zero spread
/// is replaced by 1 so the column standardizes to all zeros.
pub fn column_scaling(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let p = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scale = (0..p)
        .map(|j| {
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            if s > 1e-12 * mean[j].abs().max(1.0) {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

pub fn fit(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, l2_strength: f64) -> Result<LogisticModel> {
    let (mean, scale) = column_scaling(rows);
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) / s).collect())
        .collect();
    let p = mean.len();
    let free_classes: Vec<usize> = if n_classes == 2 {
        vec![1]
    } else {
        (0..n_classes).collect()
    };
    let problem = Problem {
        z: &z,
        y: labels,
        lambda: l2_strength,
        layout: Layout {
            p,
            k: n_classes,
            free_classes,
        },
    };
    let mut theta = DVector::zeros(problem.layout.dim());
    let mut f = problem.objective(&theta);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let (g, h) = problem.gradient_hessian(&theta);
        if g.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        let step = damped_solve(&h, &g).ok_or_else(|| Error::Numeric("Newton system could not be solved".into()))?;
        let slope = -g.dot(&step);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-16 {
            let cand = &theta - alpha * &step;
            let fc = problem.objective(&cand);
            if fc.is_finite() && fc <= f + 1e-4 * alpha * slope {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        let Some((cand, fc)) = accepted else {
            // No representable decrease left: we are at the optimum to
            // machine precision.
            converged = g.amax() < 1e-6;
            break;
        };
        theta = cand;
        f = fc;
        trace.push(f);
    }
    let (weights, intercepts) = problem.layout.unpack(&theta);
    Ok(LogisticModel {
        mean,
        scale,
        weights,
        intercepts,
        iterations,
        converged,
        objective_trace: trace,
    })
}

impl LogisticModel {
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| {
                b + w
                    .iter()
                    .zip(row)
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|((wj, x), (m, s))| wj * (x - m) / s)
                    .sum::<f64>()
            })
            .collect();
        softmax(&logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_indices() {
        let bin = Layout {
            p: 2,
            k: 2,
            free_classes: vec![1],
        };
        assert_eq!(bin.dim(), 3);
        assert_eq!(bin.index(0, 0), None);
        assert_eq!(bin.index(1, 0), Some(0));
        assert_eq!(bin.index(1, 2), Some(2));
        let tri = Layout {
            p: 2,
            k: 3,
            free_classes: vec![0, 1, 2],
        };
        assert_eq!(tri.dim(), 8);
        assert_eq!(tri.index(0, 0), None);
        assert_eq!(tri.index(0, 1), Some(0));
        assert_eq!(tri.index(1, 0), Some(2));
        assert_eq!(tri.index(2, 2), Some(7));
    }

    /// Finite-difference check of the analytic gradient.
    #[test]
    fn gradient_matches_finite_differences() {
        let rows = vec![
            vec![0.3, -1.0],
            vec![1.2, 0.4],
            vec![-0.7, 0.9],
            vec![0.1, 0.2],
            vec![2.0, -0.3],
        ];
        let y = vec![0, 1, 2, 1, 0];
        let problem = Problem {
            z: &rows,
            y: &y,
            lambda: 0.3,
            layout: Layout {
                p: 2,
                k: 3,
                free_classes: vec![0, 1, 2],
            },
        };
        let theta = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.05, -0.4, 0.2, 0.1, -0.3]);
        let (g, h) = problem.gradient_hessian(&theta);
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += 1e-6;
            tm[i] -= 1e-6;
            let fd = (problem.objective(&tp) - problem.objective(&tm)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7, "component {i}: {fd} vs {}", g[i]);
            let (gp, _) = problem.gradient_hessian(&tp);
            let (gm, _) = problem.gradient_hessian(&tm);
            for j in 0..theta.len() {
                let fdh = (gp[j] - gm[j]) / 2e-6;
                assert!((fdh - h[(j, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn objective_non_increasing() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![f64::from(i % 7), f64::from((i * 3) % 5)])
            .collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from((i % 7) + (i * 3) % 5 > 5)).collect();
        let m = fit(&rows, &y, 2, 0.01).unwrap();
        assert!(m.converged);
        for w in m.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
