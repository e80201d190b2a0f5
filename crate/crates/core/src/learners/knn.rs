use serde::{Deserialize, Serialize};

use super::{Learner, LearnerError, ModelState, ParamDecl, ResolvedParams};
use crate::matrix::{squared_distance, Matrix};
use crate::tuning::{Distribution, SearchSpace};

/// Offset in the inverse-distance weight `1 / (d + DISTANCE_EPS)`.
pub const DISTANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    Distance,
}

/// k-nearest-neighbour regression on standardized features.
pub struct Knn(pub Weighting);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnState {
    pub k: usize,
    pub weighting: Weighting,
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl KnnState {
    /// Indices and distances of the `k` nearest training rows, nearest first,
    /// lower index first on equal distance.
    pub fn neighbors(&self, row: &[f64]) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = (0..self.x.nrows())
            .map(|i| (i, squared_distance(self.x.row(i), row).sqrt()))
            .collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(self.k);
        d
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let nb = self.neighbors(row);
        match self.weighting {
            Weighting::Uniform => {
                let mut s = 0.0;
                for &(i, _) in &nb {
                    s += self.y[i];
                }
                s / nb.len() as f64
            }
            Weighting::Distance => {
                // Exact matches take all the weight.
                let exact: Vec<usize> = nb.iter().filter(|(_, d)| *d == 0.0).map(|(i, _)| *i).collect();
                if !exact.is_empty() {
                    let mut s = 0.0;
                    for &i in &exact {
                        s += self.y[i];
                    }
                    return s / exact.len() as f64;
                }
                let mut num = 0.0;
                let mut den = 0.0;
                for &(i, d) in &nb {
                    let w = 1.0 / (d + DISTANCE_EPS);
                    num += w * self.y[i];
                    den += w;
                }
                num / den
            }
        }
    }
}

impl Learner for Knn {
    fn name(&self) -> &'static str {
        match self.0 {
            Weighting::Uniform => "knn_uniform",
            Weighting::Distance => "knn_distance",
        }
    }

    fn label(&self) -> &'static str {
        match self.0 {
            Weighting::Uniform => "KNN_Uniform",
            Weighting::Distance => "KNN_Distance",
        }
    }

    fn params(&self) -> Vec<ParamDecl> {
        vec![ParamDecl::int("k", 1, 100_000, 5)]
    }

    fn default_space(&self) -> SearchSpace {
        SearchSpace::new().with("k", Distribution::IntUniform { lo: 1, hi: 10 })
    }

    fn standardize_features(&self) -> bool {
        true
    }

    fn fit_state(&self, p: &ResolvedParams, _seed: u64, x: &Matrix, y: &[f64]) -> Result<ModelState, LearnerError> {
        let k = p.usize("k");
        if k > x.nrows() {
            return Err(LearnerError::KTooLarge { k, n: x.nrows() });
        }
        Ok(ModelState::Knn(KnnState {
            k,
            weighting: self.0,
            x: x.clone(),
            y: y.to_vec(),
        }))
    }
}
