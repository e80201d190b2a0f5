use super::tree::{grow, TreeConfig};
use super::{Learner, LearnerError, ModelState, ParamDecl, ResolvedParams};
use crate::matrix::Matrix;
use crate::tuning::{Distribution, SearchSpace};

/// Single regression tree.
pub struct Cart;

impl Learner for Cart {
    fn name(&self) -> &'static str {
        "cart"
    }

    fn label(&self) -> &'static str {
        "CART"
    }

    fn params(&self) -> Vec<ParamDecl> {
        vec![
            // 0 = unlimited
            ParamDecl::int("max_depth", 0, 1000, 0),
            ParamDecl::int("min_samples_leaf", 1, 1_000_000, 1),
        ]
    }

    fn default_space(&self) -> SearchSpace {
        SearchSpace::new()
            .with("max_depth", Distribution::IntUniform { lo: 2, hi: 12 })
            .with("min_samples_leaf", Distribution::IntUniform { lo: 1, hi: 8 })
    }

    fn fit_state(&self, p: &ResolvedParams, _seed: u64, x: &Matrix, y: &[f64]) -> Result<ModelState, LearnerError> {
        let cfg = TreeConfig {
            max_depth: p.limit("max_depth"),
            min_samples_leaf: p.usize("min_samples_leaf"),
            ..Default::default()
        };
        let rows: Vec<usize> = (0..x.nrows()).collect();
        Ok(ModelState::Tree {
            tree: grow(x, y, &rows, &cfg, None, None),
        })
    }
}
