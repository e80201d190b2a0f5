//! Regression learners behind one trait, selected by name at runtime.
//!
//! Every learner declares its hyperparameters, a default search space and a
//! fitting routine producing a serializable [`ModelState`]. [`TrainedRegressor`]
//! wraps a state with the column layout and optional feature scaler it was
//! trained with, and is the unit persisted to disk.

mod adaboost;
mod cart;
mod forest;
mod gbm;
mod kernel;
mod knn;
mod krr;
mod params;
mod registry;
mod rng;
mod svr;
mod tree;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{apply_scaler, fit_scaler, DesignMatrix, ScalerStats};
use crate::matrix::Matrix;
use crate::tuning::SearchSpace;

pub use adaboost::{AdaBoost, AdaLoss, AdaState};
pub use cart::Cart;
pub use forest::RandomForest;
pub use gbm::{Gbm, GbmState, Growth};
pub use kernel::Kernel;
pub use knn::{Knn, KnnState, Weighting};
pub use krr::{Krr, KrrState};
pub use params::{Domain, ParamDecl, ParamValue, Params, ResolvedParams};
pub use registry::{registry, Registry};
pub use rng::stream_rng;
pub use svr::{Svr, SvrState};
pub use tree::{Tree, TreeConfig};

/// Version of the persisted model document layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("unknown learner `{0}`")]
    UnknownLearner(String),
    #[error("learner `{learner}` has no parameter `{param}`")]
    UnknownParam { learner: String, param: String },
    #[error("parameter `{param}`: {reason}")]
    BadParam { param: String, reason: String },
    #[error("`{learner}` needs at least {need} training rows, got {got}")]
    TooFewSamples { learner: String, need: usize, got: usize },
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("k = {k} exceeds the {n} training rows")]
    KTooLarge { k: usize, n: usize },
    #[error("kernel matrix is singular; increase alpha or remove duplicate rows")]
    SingularKernel,
    #[error("column mismatch: model expects {expected} columns, got {found}")]
    ColumnMismatch { expected: usize, found: usize },
    #[error("column {index} is `{found}`, model expects `{expected}`")]
    ColumnName { index: usize, expected: String, found: String },
    #[error("`{0}` does not provide feature importances")]
    Unsupported(String),
    #[error("model document: {0}")]
    Persist(String),
}

/// A learner name, its parameters and the seed for any resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub learner: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(learner: impl Into<String>) -> Self {
        Self {
            learner: learner.into(),
            params: Params::new(),
            seed: 0,
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<ParamValue>) -> Self {
        self.params.insert(name.to_string(), value.into());
        self
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A regression algorithm.
pub trait Learner: Send + Sync {
    /// Registry key, e.g. `gbm_leafwise`.
    fn name(&self) -> &'static str;
    /// Name used in report tables, e.g. `LightGBM`.
    fn label(&self) -> &'static str;
    fn params(&self) -> Vec<ParamDecl>;
    /// Project-default hyperparameter search space.
    fn default_space(&self) -> SearchSpace;
    /// Whether features are z-scored with training statistics before fitting.
    fn standardize_features(&self) -> bool {
        false
    }
    fn min_samples(&self) -> usize {
        1
    }
    fn fit_state(&self, params: &ResolvedParams, seed: u64, x: &Matrix, y: &[f64]) -> Result<ModelState, LearnerError>;
}

/// Fitted parameters of any learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    Tree { tree: Tree },
    Forest { trees: Vec<Tree> },
    Gbm(GbmState),
    AdaBoost(AdaState),
    Knn(KnnState),
    Krr(KrrState),
    Svr(SvrState),
}

impl ModelState {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            ModelState::Tree { tree } => tree.predict_row(row),
            ModelState::Forest { trees } => forest::predict_row(trees, row),
            ModelState::Gbm(s) => s.predict_row(row),
            ModelState::AdaBoost(s) => s.predict_row(row),
            ModelState::Knn(s) => s.predict_row(row),
            ModelState::Krr(s) => s.predict_row(row),
            ModelState::Svr(s) => s.predict_row(row),
        }
    }

    /// Impurity-decrease importances per encoded column, normalized to sum 1
    /// (all zero when nothing split). `None` for non-tree models.
    pub fn importance(&self, ncols: usize) -> Option<Vec<f64>> {
        let raw = match self {
            ModelState::Tree { tree } => tree.raw_importance(ncols),
            ModelState::Forest { trees } => tree::mean_normalized(trees.iter().map(|t| (t, 1.0)), ncols),
            ModelState::Gbm(s) => {
                let mut acc = vec![0.0; ncols];
                for t in &s.trees {
                    for (a, v) in acc.iter_mut().zip(t.raw_importance(ncols)) {
                        *a += v;
                    }
                }
                acc
            }
            ModelState::AdaBoost(s) => tree::mean_normalized(s.estimators.iter().zip(s.weights.iter().copied()), ncols),
            _ => return None,
        };
        Some(tree::normalize(raw))
    }
}

/// A fitted learner with the column layout and scaler it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRegressor {
    pub format_version: u32,
    pub spec: LearnerSpec,
    pub columns: Vec<String>,
    /// Source schema feature for each column.
    pub provenance: Vec<String>,
    pub scaler: Option<ScalerStats>,
    pub state: ModelState,
}

fn check_training(x: &Matrix, y: &[f64]) -> Result<(), LearnerError> {
    if x.nrows() != y.len() {
        return Err(LearnerError::LengthMismatch {
            rows: x.nrows(),
            targets: y.len(),
        });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite);
    }
    Ok(())
}

impl TrainedRegressor {
    /// Fits a learner from the built-in registry.
    pub fn fit(spec: &LearnerSpec, x: &DesignMatrix, y: &[f64]) -> Result<Self, LearnerError> {
        Self::fit_with(registry(), spec, x, y)
    }

    pub fn fit_with(reg: &Registry, spec: &LearnerSpec, x: &DesignMatrix, y: &[f64]) -> Result<Self, LearnerError> {
        let learner = reg.get(&spec.learner)?;
        let params = ResolvedParams::resolve(learner, &spec.params)?;
        check_training(&x.data, y)?;
        if x.nrows() < learner.min_samples() {
            return Err(LearnerError::TooFewSamples {
                learner: spec.learner.clone(),
                need: learner.min_samples(),
                got: x.nrows(),
            });
        }
        let (scaler, state) = if learner.standardize_features() {
            let stats = fit_scaler(&x.data).expect("non-empty, checked above");
            let z = apply_scaler(&x.data, &stats).expect("same width");
            let state = learner.fit_state(&params, spec.seed, &z, y)?;
            (Some(stats), state)
        } else {
            (None, learner.fit_state(&params, spec.seed, &x.data, y)?)
        };
        Ok(Self {
            format_version: FORMAT_VERSION,
            spec: spec.clone(),
            columns: x.columns.clone(),
            provenance: x.provenance.clone(),
            scaler,
            state,
        })
    }

    /// Predicts after checking the column names match the training layout.
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>, LearnerError> {
        if x.columns.len() != self.columns.len() {
            return Err(LearnerError::ColumnMismatch {
                expected: self.columns.len(),
                found: x.columns.len(),
            });
        }
        if let Some((index, (e, f))) = self.columns.iter().zip(&x.columns).enumerate().find(|(_, (e, f))| e != f) {
            return Err(LearnerError::ColumnName {
                index,
                expected: e.clone(),
                found: f.clone(),
            });
        }
        self.predict_matrix(&x.data)
    }

    /// Predicts on a bare matrix laid out like the training columns.
    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>, LearnerError> {
        if x.ncols() != self.columns.len() {
            return Err(LearnerError::ColumnMismatch {
                expected: self.columns.len(),
                found: x.ncols(),
            });
        }
        let scaler = self.scaler.as_ref();
        Ok((0..x.nrows())
            .into_par_iter()
            .map_init(
                || vec![0.0; x.ncols()],
                |buf, i| match scaler {
                    Some(s) => {
                        s.transform_row(x.row(i), buf);
                        self.state.predict_row(buf)
                    }
                    None => self.state.predict_row(x.row(i)),
                },
            )
            .collect())
    }

    /// Importance per encoded column.
    pub fn feature_importance(&self) -> Result<BTreeMap<String, f64>, LearnerError> {
        let imp = self
            .state
            .importance(self.columns.len())
            .ok_or_else(|| LearnerError::Unsupported(self.spec.learner.clone()))?;
        Ok(self.columns.iter().cloned().zip(imp).collect())
    }

    /// Importance summed over the encoded columns of each source feature.
    pub fn feature_importance_by_source(&self) -> Result<BTreeMap<String, f64>, LearnerError> {
        let per_col = self.feature_importance()?;
        let mut out = BTreeMap::new();
        for (col, src) in self.columns.iter().zip(&self.provenance) {
            *out.entry(src.clone()).or_insert(0.0) += per_col[col];
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnerError> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| LearnerError::Persist(e.to_string()))?;
        let version = probe.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(LearnerError::Persist(format!(
                "unsupported format version {version:?}, expected {FORMAT_VERSION}"
            )));
        }
        serde_json::from_value(probe).map_err(|e| LearnerError::Persist(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LearnerError> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| LearnerError::Persist(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LearnerError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| LearnerError::Persist(e.to_string()))?;
        Self::from_json(&text)
    }
}
