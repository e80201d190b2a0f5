use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::rng::stream_rng;
use super::tree::{grow, Presort, Tree, TreeConfig};
use super::{Learner, LearnerError, ModelState, ParamDecl, ResolvedParams};
use crate::matrix::Matrix;
use crate::tuning::{Distribution, SearchSpace};

/// How each boosting tree is grown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Split the leaf with the largest gain until `max_leaves` is reached.
    LeafWise,
    /// Split every splittable node level by level down to `max_depth`.
    LevelWise,
}

/// Least-squares gradient boosting on residuals.
pub struct Gbm(pub Growth);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmState {
    pub base: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<Tree>,
}

impl GbmState {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut f = self.base;
        for t in &self.trees {
            f += t.predict_row(row);
        }
        f
    }

    /// Predictions after the first `rounds` trees.
    pub fn staged_predict_row(&self, row: &[f64], rounds: usize) -> f64 {
        let mut f = self.base;
        for t in self.trees.iter().take(rounds) {
            f += t.predict_row(row);
        }
        f
    }
}

impl Learner for Gbm {
    fn name(&self) -> &'static str {
        match self.0 {
            Growth::LeafWise => "gbm_leafwise",
            Growth::LevelWise => "gbm_levelwise",
        }
    }

    fn label(&self) -> &'static str {
        match self.0 {
            Growth::LeafWise => "LightGBM",
            Growth::LevelWise => "XGB",
        }
    }

    fn params(&self) -> Vec<ParamDecl> {
        let (max_leaves, max_depth, l2) = match self.0 {
            Growth::LeafWise => (31, 0, 0.0),
            Growth::LevelWise => (0, 6, 1.0),
        };
        vec![
            ParamDecl::int("n_rounds", 1, 100_000, 200),
            ParamDecl::positive("learning_rate", 0.0, 1.0, Some(0.1)),
            // 0 = unlimited for both limits
            ParamDecl::int("max_leaves", 0, 1_000_000, max_leaves),
            ParamDecl::int("max_depth", 0, 1000, max_depth),
            ParamDecl::float("l2_leaf_reg", 0.0, f64::INFINITY, l2),
            ParamDecl::positive("subsample_fraction", 0.0, 1.0, Some(1.0)),
            ParamDecl::int("min_samples_leaf", 1, 1_000_000, 3),
        ]
    }

    fn default_space(&self) -> SearchSpace {
        let s = SearchSpace::new()
            .with("n_rounds", Distribution::IntUniform { lo: 50, hi: 300 })
            .with("learning_rate", Distribution::LogUniform { lo: 0.02, hi: 0.2 })
            .with("subsample_fraction", Distribution::Uniform { lo: 0.7, hi: 1.0 })
            .with("min_samples_leaf", Distribution::IntUniform { lo: 1, hi: 8 });
        match self.0 {
            Growth::LeafWise => s
                .with("max_leaves", Distribution::IntUniform { lo: 4, hi: 31 })
                .with("l2_leaf_reg", Distribution::choice([0.0, 0.1, 1.0])),
            Growth::LevelWise => s
                .with("max_depth", Distribution::IntUniform { lo: 2, hi: 6 })
                .with("l2_leaf_reg", Distribution::LogUniform { lo: 0.1, hi: 10.0 }),
        }
    }

    fn fit_state(&self, p: &ResolvedParams, seed: u64, x: &Matrix, y: &[f64]) -> Result<ModelState, LearnerError> {
        let n = x.nrows();
        let lr = p.float("learning_rate");
        let frac = p.float("subsample_fraction");
        let cfg = TreeConfig {
            max_depth: p.limit("max_depth"),
            max_leaves: match self.0 {
                Growth::LeafWise => p.limit("max_leaves"),
                Growth::LevelWise => None,
            },
            min_samples_leaf: p.usize("min_samples_leaf"),
            l2: p.float("l2_leaf_reg"),
            max_features: None,
        };
        let cfg = match (self.0, p.limit("max_leaves")) {
            // A leaf cap still applies to level-wise growth when given explicitly.
            (Growth::LevelWise, Some(cap)) => TreeConfig {
                max_leaves: Some(cap),
                ..cfg
            },
            _ => cfg,
        };

        let base = y.iter().sum::<f64>() / n as f64;
        let mut fitted = vec![base; n];
        let mut residual = vec![0.0; n];
        let mut trees = Vec::new();
        let all: Vec<usize> = (0..n).collect();
        let presort = Presort::new(x);
        let n_sub = ((frac * n as f64).round() as usize).clamp(1, n);
        for round in 0..p.usize("n_rounds") {
            for i in 0..n {
                residual[i] = y[i] - fitted[i];
            }
            let rows = if n_sub < n {
                let mut rng = stream_rng(seed, round as u64);
                let mut r = index::sample(&mut rng, n, n_sub).into_vec();
                r.sort_unstable();
                r
            } else {
                all.clone()
            };
            let mut tree = grow(x, &residual, &rows, &cfg, None, Some(&presort));
            tree.scale_values(lr);
            for (i, f) in fitted.iter_mut().enumerate() {
                *f += tree.predict_row(x.row(i));
            }
            trees.push(tree);
        }
        Ok(ModelState::Gbm(GbmState { base, trees }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DesignMatrix;
    use crate::learners::{LearnerSpec, TrainedRegressor};

    #[test]
    fn one_unregularized_round_fits_distinct_rows_exactly() {
        let rows: Vec<[f64; 2]> = (0..16).map(|i| [i as f64, ((i * 5) % 16) as f64]).collect();
        // Integer targets with a dyadic mean keep every residual exact.
        let y: Vec<f64> = (0..16).map(|i| ((i * 7) % 16) as f64).collect();
        let x = DesignMatrix::from_matrix(Matrix::from_rows(&rows));
        for name in ["gbm_leafwise", "gbm_levelwise"] {
            let spec = LearnerSpec::new(name)
                .with("n_rounds", 1)
                .with("learning_rate", 1.0)
                .with("l2_leaf_reg", 0.0)
                .with("max_depth", 0)
                .with("max_leaves", 0)
                .with("min_samples_leaf", 1);
            let m = TrainedRegressor::fit(&spec, &x, &y).unwrap();
            assert_eq!(m.predict(&x).unwrap(), y, "{name}");
        }
    }

    #[test]
    fn growth_policies_respect_limits() {
        let rows: Vec<[f64; 3]> = (0..80).map(|i| [(i as f64 * 0.3).sin(), (i % 9) as f64, (i * i % 31) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 3.0 + r[1] - 0.1 * r[2]).collect();
        let x = DesignMatrix::from_matrix(Matrix::from_rows(&rows));
        let m = TrainedRegressor::fit(&LearnerSpec::new("gbm_leafwise").with("max_leaves", 5).with("n_rounds", 10), &x, &y).unwrap();
        let ModelState::Gbm(s) = &m.state else { panic!() };
        assert!(s.trees.iter().all(|t| t.n_leaves() <= 5));
        let m = TrainedRegressor::fit(&LearnerSpec::new("gbm_levelwise").with("max_depth", 2).with("n_rounds", 10), &x, &y).unwrap();
        let ModelState::Gbm(s) = &m.state else { panic!() };
        assert!(s.trees.iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn training_mse_never_increases() {
        let rows: Vec<[f64; 4]> = (0..120)
            .map(|i| {
                let t = i as f64;
                [(t * 0.21).sin(), (t * 0.77).cos(), (t * 0.05).sin(), t % 5.0]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 3.0).sin() + r[1] * r[3] + r[2]).collect();
        let x = DesignMatrix::from_matrix(Matrix::from_rows(&rows));
        for name in ["gbm_leafwise", "gbm_levelwise"] {
            let m = TrainedRegressor::fit(&LearnerSpec::new(name).with("n_rounds", 60), &x, &y).unwrap();
            let ModelState::Gbm(s) = &m.state else { panic!() };
            let mut prev = f64::INFINITY;
            for r in 0..=60 {
                let mse = (0..120).map(|i| (s.staged_predict_row(x.data.row(i), r) - y[i]).powi(2)).sum::<f64>() / 120.0;
                assert!(mse <= prev, "{name} round {r}");
                prev = mse;
            }
        }
    }

    #[test]
    fn subsampling_is_seeded() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.2).sin()).collect();
        let x = DesignMatrix::from_matrix(Matrix::from_rows(&rows));
        let spec = LearnerSpec::new("gbm_leafwise").with("subsample_fraction", 0.6).with("n_rounds", 20).seeded(2);
        let a = TrainedRegressor::fit(&spec, &x, &y).unwrap();
        assert_eq!(a, TrainedRegressor::fit(&spec, &x, &y).unwrap());
        assert_ne!(a, TrainedRegressor::fit(&spec.clone().seeded(3), &x, &y).unwrap());
    }
}
