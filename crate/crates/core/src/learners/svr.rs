//! Epsilon-insensitive support vector regression.
//!
//! The dual over `2n` variables `(alpha, alpha*)` is solved by sequential
//! minimal optimization: each step picks the maximal violating pair under
//! first-order selection (lowest index on ties) and solves the two-variable
//! subproblem analytically with box clipping. Targets are standardized
//! internally, so `c` and `epsilon` are in units of the target's standard
//! deviation.

use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use super::{Learner, LearnerError, ModelState, ParamDecl, ResolvedParams};
use crate::matrix::Matrix;
use crate::tuning::{Distribution, SearchSpace};

pub struct Svr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrState {
    pub kernel: Kernel,
    /// Rows with a nonzero coefficient.
    pub support: Matrix,
    /// `alpha_i - alpha*_i` per support row.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub y_mean: f64,
    pub y_scale: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvrState {
    /// Decision value in standardized target units.
    pub fn decision(&self, row: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, c) in self.coef.iter().enumerate() {
            s += c * self.kernel.eval(self.support.row(i), row);
        }
        s - self.rho
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.y_mean + self.y_scale * self.decision(row)
    }
}

/// Raw dual solution on standardized targets.
pub(crate) struct Dual {
    /// `alpha` for `t < n`, `alpha*` for `t >= n`.
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

const TAU: f64 = 1e-12;

pub(crate) fn solve_dual(k: &[f64], n: usize, y: &[f64], c: f64, eps: f64, tol: f64, max_iter: usize) -> Dual {
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let kk = |s: usize, t: usize| k[(s % n) * n + (t % n)];
    let mut alpha = vec![0.0; l];
    // Gradient of 0.5 a'Qa + p'a at a = 0 is p.
    let mut grad: Vec<f64> = (0..l).map(|t| if t < n { eps - y[t] } else { eps + y[t - n] }).collect();

    let in_up = |t: usize, a: f64| if t < n { a < c } else { a > 0.0 };
    let in_low = |t: usize, a: f64| if t < n { a > 0.0 } else { a < c };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        for t in 0..l {
            let v = -sign(t) * grad[t];
            if in_up(t, alpha[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(t, alpha[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (yi, yj) = (sign(i), sign(j));
        let qii = kk(i, i);
        let qjj = kk(j, j);
        let qij = yi * yj * kk(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut ai = old_i;
        let mut aj = old_j;
        if yi != yj {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let di = ai - old_i;
        let dj = aj - old_j;
        for t in 0..l {
            let yt = sign(t);
            grad[t] += yt * yi * kk(t, i) * di + yt * yj * kk(t, j) * dj;
        }
    }

    // Offset from free variables, or the middle of the feasible interval.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum = 0.0;
    for t in 0..l {
        let yg = sign(t) * grad[t];
        let a = alpha[t];
        if a >= c {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a <= 0.0 {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    Dual {
        alpha,
        rho,
        iterations,
        converged,
    }
}

impl Learner for Svr {
    fn name(&self) -> &'static str {
        "svr"
    }

    fn label(&self) -> &'static str {
        "SVM"
    }

    fn params(&self) -> Vec<ParamDecl> {
        vec![
            ParamDecl::positive("c", 0.0, f64::INFINITY, Some(1.0)),
            ParamDecl::float("epsilon", 0.0, f64::INFINITY, 0.1),
            ParamDecl::choice("kernel", &["rbf", "linear"], "rbf"),
            ParamDecl::positive("gamma", 0.0, f64::INFINITY, None),
            ParamDecl::positive("tol", 0.0, f64::INFINITY, Some(1e-3)),
            ParamDecl::int("max_iter", 1, 1_000_000_000, 100_000),
        ]
    }

    fn default_space(&self) -> SearchSpace {
        SearchSpace::new()
            .with("c", Distribution::LogUniform { lo: 0.1, hi: 100.0 })
            .with("epsilon", Distribution::LogUniform { lo: 0.005, hi: 0.3 })
            .with("gamma", Distribution::LogUniform { lo: 1e-3, hi: 0.1 })
    }

    fn standardize_features(&self) -> bool {
        true
    }

    fn min_samples(&self) -> usize {
        2
    }

    fn fit_state(&self, p: &ResolvedParams, _seed: u64, x: &Matrix, y: &[f64]) -> Result<ModelState, LearnerError> {
        let n = x.nrows();
        let kernel = Kernel::from_params(p, x.ncols());
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64).sqrt();
        let y_scale = if sd > 0.0 { sd } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

        let k = kernel.gram(x);
        let dual = solve_dual(&k, n, &ys, p.float("c"), p.float("epsilon"), p.float("tol"), p.usize("max_iter"));

        let mut rows = Vec::new();
        let mut coef = Vec::new();
        for i in 0..n {
            let beta = dual.alpha[i] - dual.alpha[i + n];
            if beta != 0.0 {
                rows.push(i);
                coef.push(beta);
            }
        }
        Ok(ModelState::Svr(SvrState {
            kernel,
            support: x.select_rows(&rows),
            coef,
            rho: dual.rho,
            y_mean,
            y_scale,
            iterations: dual.iterations,
            converged: dual.converged,
        }))
    }
}
