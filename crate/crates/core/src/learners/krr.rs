use serde::{Deserialize, Serialize};

use super::kernel::{cholesky_solve, Kernel};
use super::{Learner, LearnerError, ModelState, ParamDecl, ResolvedParams};
use crate::matrix::Matrix;
use crate::tuning::{Distribution, SearchSpace};

/// Kernel ridge regression on standardized features: solves
/// `(K + alpha I) a = y - c` and predicts `c + sum_i a_i k(x, x_i)`, where
/// `c` is the training mean when `center` is set and 0 otherwise.
pub struct Krr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrState {
    pub kernel: Kernel,
    pub x: Matrix,
    pub dual_coef: Vec<f64>,
    pub intercept: f64,
}

impl KrrState {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, a) in self.dual_coef.iter().enumerate() {
            s += a * self.kernel.eval(self.x.row(i), row);
        }
        self.intercept + s
    }
}

impl Learner for Krr {
    fn name(&self) -> &'static str {
        "krr"
    }

    fn label(&self) -> &'static str {
        "KRR"
    }

    fn params(&self) -> Vec<ParamDecl> {
        vec![
            ParamDecl::float("alpha", 0.0, f64::INFINITY, 1.0),
            ParamDecl::choice("kernel", &["rbf", "linear"], "rbf"),
            ParamDecl::positive("gamma", 0.0, f64::INFINITY, None),
            ParamDecl::boolean("center", false),
        ]
    }

    fn default_space(&self) -> SearchSpace {
        SearchSpace::new()
            .with("alpha", Distribution::LogUniform { lo: 1e-3, hi: 1.0 })
            .with("gamma", Distribution::LogUniform { lo: 1e-3, hi: 0.1 })
            .with("center", Distribution::choice([true]))
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
        let alpha = p.float("alpha");
        let intercept = if p.boolean("center") { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let mut k = kernel.gram(x);
        for i in 0..n {
            k[i * n + i] += alpha;
        }
        let rhs: Vec<f64> = y.iter().map(|v| v - intercept).collect();
        let dual_coef = cholesky_solve(&k, n, &rhs)?;
        Ok(ModelState::Krr(KrrState {
            kernel,
            x: x.clone(),
            dual_coef,
            intercept,
        }))
    }
}
