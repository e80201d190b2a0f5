use rand::Rng;
use rayon::prelude::*;

use super::rng::stream_rng;
use super::tree::{grow, Presort, Tree, TreeConfig};
use super::{Learner, LearnerError, ModelState, ParamDecl, ResolvedParams};
use crate::matrix::Matrix;
use crate::tuning::{Distribution, SearchSpace};

/// Bagged regression trees with per-split feature subsampling.
///
/// Tree `t` draws its bootstrap sample and feature subsets from stream `t`
/// of the spec seed, so trees can be grown in any order.
pub struct RandomForest;

pub(crate) fn predict_row(trees: &[Tree], row: &[f64]) -> f64 {
    let mut s = 0.0;
    for t in trees {
        s += t.predict_row(row);
    }
    s / trees.len() as f64
}

/// Features tried per split: `max(1, floor(fraction * d))`.
pub fn features_per_split(fraction: f64, d: usize) -> usize {
    ((fraction * d as f64).floor() as usize).clamp(1, d.max(1))
}

impl Learner for RandomForest {
    fn name(&self) -> &'static str {
        "rf"
    }

    fn label(&self) -> &'static str {
        "RF"
    }

    fn params(&self) -> Vec<ParamDecl> {
        vec![
            ParamDecl::int("n_trees", 1, 100_000, 100),
            ParamDecl::positive("max_features_fraction", 0.0, 1.0, Some(0.5)),
            ParamDecl::boolean("bootstrap", true),
            ParamDecl::int("max_depth", 0, 1000, 0),
            ParamDecl::int("min_samples_leaf", 1, 1_000_000, 1),
        ]
    }

    fn default_space(&self) -> SearchSpace {
        SearchSpace::new()
            .with("n_trees", Distribution::IntUniform { lo: 50, hi: 200 })
            .with("max_features_fraction", Distribution::Uniform { lo: 0.2, hi: 1.0 })
            .with("min_samples_leaf", Distribution::IntUniform { lo: 1, hi: 4 })
    }

    fn fit_state(&self, p: &ResolvedParams, seed: u64, x: &Matrix, y: &[f64]) -> Result<ModelState, LearnerError> {
        let n = x.nrows();
        let d = x.ncols();
        let m = features_per_split(p.float("max_features_fraction"), d);
        let cfg = TreeConfig {
            max_depth: p.limit("max_depth"),
            min_samples_leaf: p.usize("min_samples_leaf"),
            max_features: (m < d).then_some(m),
            ..Default::default()
        };
        let bootstrap = p.boolean("bootstrap");
        let presort = Presort::new(x);
        let trees = (0..p.usize("n_trees"))
            .into_par_iter()
            .map(|t| {
                let mut rng = stream_rng(seed, t as u64);
                let rows: Vec<usize> = if bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                grow(x, y, &rows, &cfg, Some(&mut rng), Some(&presort))
            })
            .collect();
        Ok(ModelState::Forest { trees })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DesignMatrix;
    use crate::learners::{LearnerSpec, TrainedRegressor};

    fn data() -> (DesignMatrix, Vec<f64>) {
        let rows: Vec<[f64; 4]> = (0..60)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin(), (t * 1.3).cos(), t % 7.0, (t * 0.11).sin() * 3.0]
            })
            .collect();
        let y = rows.iter().map(|r| r[0] * 4.0 + r[2] * r[1] + r[3]).collect();
        (DesignMatrix::from_matrix(Matrix::from_rows(&rows)), y)
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let (x, y) = data();
        let m = TrainedRegressor::fit(&LearnerSpec::new("rf").with("n_trees", 7).seeded(9), &x, &y).unwrap();
        let ModelState::Forest { trees } = &m.state else { panic!() };
        assert_eq!(trees.len(), 7);
        let pred = m.predict(&x).unwrap();
        for (i, p) in pred.iter().enumerate() {
            let mean = trees.iter().map(|t| t.predict_row(x.data.row(i))).sum::<f64>() / 7.0;
            assert_eq!(*p, mean);
        }
    }

    #[test]
    fn seeded_and_thread_independent() {
        let (x, y) = data();
        let spec = LearnerSpec::new("rf").with("n_trees", 20).seeded(4);
        let a = TrainedRegressor::fit(&spec, &x, &y).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| TrainedRegressor::fit(&spec, &x, &y).unwrap());
        assert_eq!(a, b);
        let c = TrainedRegressor::fit(&spec.clone().seeded(5), &x, &y).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn averaging_beats_worst_tree() {
        let (x, y) = data();
        for seed in 0..5 {
            let m = TrainedRegressor::fit(&LearnerSpec::new("rf").with("n_trees", 10).seeded(seed), &x, &y).unwrap();
            let ModelState::Forest { trees } = &m.state else { panic!() };
            let mse = |pred: &dyn Fn(&[f64]) -> f64| {
                (0..x.nrows()).map(|i| (pred(x.data.row(i)) - y[i]).powi(2)).sum::<f64>() / x.nrows() as f64
            };
            let forest = mse(&|r| predict_row(trees, r));
            let worst = trees.iter().map(|t| mse(&|r| t.predict_row(r))).fold(0.0, f64::max);
            assert!(forest <= worst);
        }
    }

    #[test]
    fn split_feature_count() {
        assert_eq!(features_per_split(0.5, 51), 25);
        assert_eq!(features_per_split(0.01, 10), 1);
        assert_eq!(features_per_split(1.0, 10), 10);
    }
}
