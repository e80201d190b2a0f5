//! AdaBoost.R2 (Drucker 1997) with CART base estimators.
//!
//! Round `m` draws a weighted bootstrap sample, fits a tree, and scores every
//! training row with a loss `L_i` in `[0, 1]` relative to the largest error.
//! With average loss `Lbar`, `beta = Lbar / (1 - Lbar)`, the estimator weight
//! is `ln(1 / beta)` and sample weights are multiplied by `beta^(1 - L_i)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::stream_rng;
use super::tree::{grow, Presort, Tree, TreeConfig};
use super::{Learner, LearnerError, ModelState, ParamDecl, ResolvedParams};
use crate::matrix::Matrix;
use crate::tuning::{Distribution, SearchSpace};

pub struct AdaBoost;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaLoss {
    Linear,
    Square,
    Exponential,
}

impl AdaLoss {
    fn parse(s: &str) -> Self {
        match s {
            "square" => AdaLoss::Square,
            "exponential" => AdaLoss::Exponential,
            _ => AdaLoss::Linear,
        }
    }

    /// Loss for a relative error in `[0, 1]`.
    pub fn apply(self, rel: f64) -> f64 {
        match self {
            AdaLoss::Linear => rel,
            AdaLoss::Square => rel * rel,
            AdaLoss::Exponential => 1.0 - (-rel).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaState {
    pub estimators: Vec<Tree>,
    pub weights: Vec<f64>,
}

impl AdaState {
    /// Weighted median of the estimator predictions: the smallest prediction
    /// whose cumulative weight reaches half the total.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut preds: Vec<(f64, f64)> = self
            .estimators
            .iter()
            .zip(&self.weights)
            .map(|(t, &w)| (t.predict_row(row), w))
            .collect();
        preds.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = self.weights.iter().sum();
        let mut cum = 0.0;
        for (p, w) in &preds {
            cum += w;
            if cum >= 0.5 * total {
                return *p;
            }
        }
        preds.last().expect("at least one estimator").0
    }
}

fn weighted_bootstrap(rng: &mut impl Rng, weights: &[f64]) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    let n = weights.len();
    (0..n)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(n - 1)
        })
        .collect()
}

impl Learner for AdaBoost {
    fn name(&self) -> &'static str {
        "adaboost"
    }

    fn label(&self) -> &'static str {
        "Adaboost"
    }

    fn params(&self) -> Vec<ParamDecl> {
        vec![
            ParamDecl::int("n_estimators", 1, 100_000, 50),
            ParamDecl::choice("loss", &["linear", "square", "exponential"], "linear"),
            ParamDecl::int("max_depth", 0, 1000, 3),
            ParamDecl::int("min_samples_leaf", 1, 1_000_000, 1),
        ]
    }

    fn default_space(&self) -> SearchSpace {
        SearchSpace::new()
            .with("n_estimators", Distribution::IntUniform { lo: 20, hi: 120 })
            .with("loss", Distribution::choice(["linear", "square", "exponential"]))
            .with("max_depth", Distribution::IntUniform { lo: 2, hi: 6 })
    }

    fn fit_state(&self, p: &ResolvedParams, seed: u64, x: &Matrix, y: &[f64]) -> Result<ModelState, LearnerError> {
        let n = x.nrows();
        let loss = AdaLoss::parse(p.string("loss"));
        let cfg = TreeConfig {
            max_depth: p.limit("max_depth"),
            min_samples_leaf: p.usize("min_samples_leaf"),
            ..Default::default()
        };
        let presort = Presort::new(x);
        let mut w = vec![1.0 / n as f64; n];
        let mut estimators = Vec::new();
        let mut weights = Vec::new();
        let mut err = vec![0.0; n];

        for m in 0..p.usize("n_estimators") {
            let mut rng = stream_rng(seed, m as u64);
            let rows = weighted_bootstrap(&mut rng, &w);
            let tree = grow(x, y, &rows, &cfg, None, Some(&presort));
            for i in 0..n {
                err[i] = (tree.predict_row(x.row(i)) - y[i]).abs();
            }
            let max_err = err.iter().copied().fold(0.0, f64::max);
            if max_err == 0.0 {
                estimators.push(tree);
                weights.push(1.0);
                break;
            }
            let losses: Vec<f64> = err.iter().map(|e| loss.apply(e / max_err)).collect();
            let avg: f64 = losses.iter().zip(&w).map(|(l, wi)| l * wi).sum();
            if avg <= 0.0 {
                estimators.push(tree);
                weights.push(1.0);
                break;
            }
            if avg >= 0.5 {
                if estimators.is_empty() {
                    estimators.push(tree);
                    weights.push(1.0);
                }
                break;
            }
            let beta = avg / (1.0 - avg);
            estimators.push(tree);
            weights.push((1.0 / beta).ln());
            let mut total = 0.0;
            for (wi, l) in w.iter_mut().zip(&losses) {
                *wi *= beta.powf(1.0 - l);
                total += *wi;
            }
            for wi in &mut w {
                *wi /= total;
            }
        }
        Ok(ModelState::AdaBoost(AdaState { estimators, weights }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DesignMatrix;
    use crate::learners::{LearnerSpec, TrainedRegressor};

    #[test]
    fn weighted_median() {
        let leaf = |v| Tree::leaf(v);
        let s = AdaState {
            estimators: vec![leaf(5.0), leaf(1.0), leaf(3.0)],
            weights: vec![1.0, 1.0, 3.0],
        };
        assert_eq!(s.predict_row(&[]), 3.0);
        let s = AdaState {
            estimators: vec![leaf(5.0), leaf(1.0), leaf(3.0)],
            weights: vec![1.0, 2.0, 1.0],
        };
        // cumulative 2 at value 1 reaches half of 4
        assert_eq!(s.predict_row(&[]), 1.0);
    }

    #[test]
    fn losses() {
        assert_eq!(AdaLoss::Linear.apply(0.5), 0.5);
        assert_eq!(AdaLoss::Square.apply(0.5), 0.25);
        assert!((AdaLoss::Exponential.apply(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn perfect_first_estimator_stops() {
        let x = DesignMatrix::from_matrix(Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]));
        let y = [1.0, 1.0, 1.0, 1.0];
        let m = TrainedRegressor::fit(&LearnerSpec::new("adaboost"), &x, &y).unwrap();
        let ModelState::AdaBoost(s) = &m.state else { panic!() };
        assert_eq!(s.estimators.len(), 1);
        assert_eq!(s.weights, vec![1.0]);
        assert_eq!(m.predict(&x).unwrap(), y.to_vec());
    }

    #[test]
    fn fits_a_smooth_signal() {
        let rows: Vec<[f64; 2]> = (0..100).map(|i| [i as f64 / 10.0, ((i * 37) % 100) as f64 / 100.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin() * 5.0 + r[1]).collect();
        let x = DesignMatrix::from_matrix(Matrix::from_rows(&rows));
        let m = TrainedRegressor::fit(&LearnerSpec::new("adaboost").seeded(1), &x, &y).unwrap();
        let pred = m.predict(&x).unwrap();
        let mse = pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 100.0;
        let var = {
            let mu = y.iter().sum::<f64>() / 100.0;
            y.iter().map(|t| (t - mu).powi(2)).sum::<f64>() / 100.0
        };
        assert!(mse < 0.1 * var, "mse {mse} var {var}");
        let ModelState::AdaBoost(s) = &m.state else { panic!() };
        assert!(s.weights.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn bootstrap_follows_weights() {
        let mut rng = stream_rng(0, 0);
        let rows = weighted_bootstrap(&mut rng, &[0.0, 1.0, 0.0]);
        assert_eq!(rows, vec![1, 1, 1]);
    }
}
