//! Two-layer stacked generalization.
//!
//! Base learners produce one prediction column each; the meta-learner is
//! trained on those columns, optionally appended to the original features.
//! In out-of-fold mode the column entry for row `i` comes from a base model
//! fitted without the fold containing `i`. After the meta-learner is trained,
//! bases are refit on all training rows for inference.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DesignMatrix, TargetKind};
use crate::learners::{LearnerError, LearnerSpec, TrainedRegressor};
use crate::matrix::Matrix;
use crate::split::Folds;

pub const STACK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StackError {
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("fold {0} is empty")]
    EmptyFold(usize),
    #[error("architecture expects {expected} folds, got {found}")]
    FoldCount { expected: usize, found: usize },
    #[error("folds cover {folds} rows but the data has {rows}")]
    FoldRows { folds: usize, rows: usize },
    #[error("a stack needs at least one base learner")]
    NoBases,
    #[error("stack document: {0}")]
    Persist(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaFeatures {
    BasePredictionsOnly,
    FeaturesPlusBasePredictions,
}

/// How base predictions for the meta-learner's training rows are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OofMode {
    /// Each row predicted by a model fitted without its fold.
    OutOfFold { k: usize },
    /// Each row predicted by a model fitted on all rows, including itself.
    InSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackArchitecture {
    pub bases: Vec<LearnerSpec>,
    pub meta: LearnerSpec,
    pub meta_features: MetaFeatures,
    pub oof: OofMode,
}

impl StackArchitecture {
    /// Boosted-tree base with an SVR meta-learner over features plus prediction.
    pub fn wavelength() -> Self {
        Self {
            bases: vec![LearnerSpec::new("gbm_leafwise")],
            meta: LearnerSpec::new("svr"),
            meta_features: MetaFeatures::FeaturesPlusBasePredictions,
            oof: OofMode::OutOfFold { k: 10 },
        }
    }

    /// Four ensemble bases with a distance-weighted KNN meta-learner over
    /// their predictions only.
    pub fn kr() -> Self {
        Self {
            bases: ["adaboost", "gbm_leafwise", "rf", "gbm_levelwise"].map(LearnerSpec::new).to_vec(),
            meta: LearnerSpec::new("knn_distance"),
            meta_features: MetaFeatures::BasePredictionsOnly,
            oof: OofMode::OutOfFold { k: 10 },
        }
    }

    /// Random-forest base and meta over features plus prediction.
    pub fn plqy() -> Self {
        Self {
            bases: vec![LearnerSpec::new("rf")],
            meta: LearnerSpec::new("rf"),
            meta_features: MetaFeatures::FeaturesPlusBasePredictions,
            oof: OofMode::OutOfFold { k: 10 },
        }
    }

    pub fn preset(kind: TargetKind) -> Self {
        match kind {
            TargetKind::Wavelength => Self::wavelength(),
            TargetKind::Kr => Self::kr(),
            TargetKind::Plqy => Self::plqy(),
        }
    }

    /// Meta-learner input width for `d` original columns.
    pub fn meta_width(&self, d: usize) -> usize {
        match self.meta_features {
            MetaFeatures::BasePredictionsOnly => self.bases.len(),
            MetaFeatures::FeaturesPlusBasePredictions => d + self.bases.len(),
        }
    }

    /// Name of base `b`'s prediction column.
    pub fn prediction_column(&self, b: usize) -> String {
        format!("pred:{b}:{}", self.bases[b].learner)
    }
}

/// One base model fitted while building the meta matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseFit {
    pub base: usize,
    /// Held-out fold, `None` for in-sample fits.
    pub fold: Option<usize>,
    /// Rows the model was trained on, ascending.
    pub train_rows: Vec<usize>,
}

/// Meta-learner training matrix with the bookkeeping of which fitted base
/// model produced each prediction.
#[derive(Debug, Clone)]
pub struct OofMatrix {
    pub meta: DesignMatrix,
    pub fits: Vec<BaseFit>,
    /// `source[i][b]` indexes `fits`: the model that predicted row `i` for base `b`.
    pub source: Vec<Vec<usize>>,
}

impl OofMatrix {
    /// True when no row's prediction came from a model trained on that row.
    pub fn is_leakage_free(&self) -> bool {
        self.source
            .iter()
            .enumerate()
            .all(|(i, per_base)| per_base.iter().all(|&f| self.fits[f].train_rows.binary_search(&i).is_err()))
    }
}

fn meta_design(arch: &StackArchitecture, x: &DesignMatrix, preds: &Matrix) -> DesignMatrix {
    let names: Vec<String> = (0..arch.bases.len()).map(|b| arch.prediction_column(b)).collect();
    match arch.meta_features {
        MetaFeatures::BasePredictionsOnly => DesignMatrix::new(names.clone(), names, preds.clone()),
        MetaFeatures::FeaturesPlusBasePredictions => {
            let mut columns = x.columns.clone();
            columns.extend(names.iter().cloned());
            let mut provenance = x.provenance.clone();
            provenance.extend(names);
            DesignMatrix::new(columns, provenance, x.data.hstack(preds))
        }
    }
}

fn check_folds(arch: &StackArchitecture, x: &DesignMatrix, folds: &Folds) -> Result<(), StackError> {
    if arch.bases.is_empty() {
        return Err(StackError::NoBases);
    }
    if folds.n() != x.nrows() {
        return Err(StackError::FoldRows {
            folds: folds.n(),
            rows: x.nrows(),
        });
    }
    if let OofMode::OutOfFold { k } = arch.oof {
        if k != folds.k() {
            return Err(StackError::FoldCount {
                expected: k,
                found: folds.k(),
            });
        }
        if let Some(f) = folds.iter().position(|f| f.is_empty()) {
            return Err(StackError::EmptyFold(f));
        }
    }
    Ok(())
}

/// Builds the meta-learner training matrix. `folds` must partition the rows of
/// `x`; it is ignored in in-sample mode.
pub fn build_oof_matrix(
    arch: &StackArchitecture,
    x: &DesignMatrix,
    y: &[f64],
    folds: &Folds,
) -> Result<OofMatrix, StackError> {
    check_folds(arch, x, folds)?;
    let n = x.nrows();
    let nb = arch.bases.len();
    let all: Vec<usize> = (0..n).collect();

    // One job per (base, fold); held-out rows are every row in-sample.
    let jobs: Vec<(usize, Option<usize>)> = match arch.oof {
        OofMode::OutOfFold { .. } => (0..nb).flat_map(|b| (0..folds.k()).map(move |f| (b, Some(f)))).collect(),
        OofMode::InSample => (0..nb).map(|b| (b, None)).collect(),
    };
    let results = jobs
        .par_iter()
        .map(|&(b, fold)| -> Result<_, StackError> {
            let (train, predict): (Vec<usize>, Vec<usize>) = match fold {
                Some(f) => (folds.complement(f), folds.fold(f).to_vec()),
                None => (all.clone(), all.clone()),
            };
            let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = TrainedRegressor::fit(&arch.bases[b], &x.select_rows(&train), &ytr)?;
            let pred = model.predict(&x.select_rows(&predict))?;
            Ok((BaseFit { base: b, fold, train_rows: train }, predict, pred))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut preds = Matrix::zeros(n, nb);
    let mut source = vec![vec![usize::MAX; nb]; n];
    let mut fits = Vec::with_capacity(results.len());
    for (fi, (fit, rows, pred)) in results.into_iter().enumerate() {
        for (&i, v) in rows.iter().zip(pred) {
            preds.set(i, fit.base, v);
            source[i][fit.base] = fi;
        }
        fits.push(fit);
    }
    Ok(OofMatrix {
        meta: meta_design(arch, x, &preds),
        fits,
        source,
    })
}

/// Fitted stack ready for inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackModel {
    pub format_version: u32,
    pub architecture: StackArchitecture,
    /// Input columns expected by `predict`.
    pub columns: Vec<String>,
    pub bases: Vec<TrainedRegressor>,
    pub meta: TrainedRegressor,
}

/// Trains the meta-learner on the meta matrix, then refits bases on all rows.
pub fn train_stack(arch: &StackArchitecture, x: &DesignMatrix, y: &[f64], folds: &Folds) -> Result<StackModel, StackError> {
    let oof = build_oof_matrix(arch, x, y, folds)?;
    train_stack_from(arch, x, y, &oof)
}

/// Like [`train_stack`] with a meta matrix that was already built.
pub fn train_stack_from(arch: &StackArchitecture, x: &DesignMatrix, y: &[f64], oof: &OofMatrix) -> Result<StackModel, StackError> {
    let meta = TrainedRegressor::fit(&arch.meta, &oof.meta, y)?;
    let bases = arch
        .bases
        .par_iter()
        .map(|spec| TrainedRegressor::fit(spec, x, y))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StackModel {
        format_version: STACK_FORMAT_VERSION,
        architecture: arch.clone(),
        columns: x.columns.clone(),
        bases,
        meta,
    })
}

impl StackModel {
    /// Meta-learner input for `x`, built from the refit bases.
    pub fn meta_input(&self, x: &DesignMatrix) -> Result<DesignMatrix, StackError> {
        let mut preds = Matrix::zeros(x.nrows(), self.bases.len());
        for (b, base) in self.bases.iter().enumerate() {
            for (i, v) in base.predict(x)?.into_iter().enumerate() {
                preds.set(i, b, v);
            }
        }
        Ok(meta_design(&self.architecture, x, &preds))
    }

    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>, StackError> {
        if x.columns != self.columns {
            if x.ncols() != self.columns.len() {
                return Err(LearnerError::ColumnMismatch {
                    expected: self.columns.len(),
                    found: x.ncols(),
                }
                .into());
            }
            let (index, (e, f)) = self
                .columns
                .iter()
                .zip(&x.columns)
                .enumerate()
                .find(|(_, (e, f))| e != f)
                .expect("columns differ");
            return Err(LearnerError::ColumnName {
                index,
                expected: e.clone(),
                found: f.clone(),
            }
            .into());
        }
        Ok(self.meta.predict(&self.meta_input(x)?)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stack serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StackError> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| StackError::Persist(e.to_string()))?;
        let version = probe.get("format_version").and_then(|v| v.as_u64());
        if version != Some(STACK_FORMAT_VERSION as u64) {
            return Err(StackError::Persist(format!(
                "unsupported format version {version:?}, expected {STACK_FORMAT_VERSION}"
            )));
        }
        serde_json::from_value(probe).map_err(|e| StackError::Persist(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StackError> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| StackError::Persist(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StackError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| StackError::Persist(e.to_string()))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> (DesignMatrix, Vec<f64>) {
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let t = i as f64;
                [(t * 0.41).sin(), (t * 0.23).cos(), (t * 0.07).sin()]
            })
            .collect();
        let y = rows.iter().map(|r| 2.0 * r[0] + r[1] * r[2] + r[2]).collect();
        (DesignMatrix::from_matrix(Matrix::from_rows(&rows)), y)
    }

    #[test]
    fn meta_widths() {
        let (x, y) = data(30);
        let folds = Folds::kfold(30, 10, 0).unwrap();
        let mut kr = StackArchitecture::kr();
        for b in &mut kr.bases {
            b.params.insert("n_rounds".into(), 5.into());
        }
        kr.bases[0] = LearnerSpec::new("adaboost").with("n_estimators", 5);
        kr.bases[2] = LearnerSpec::new("rf").with("n_trees", 5);
        let oof = build_oof_matrix(&kr, &x, &y, &folds).unwrap();
        assert_eq!(oof.meta.ncols(), 4);
        assert_eq!(kr.meta_width(3), 4);
        let mut wl = StackArchitecture::wavelength();
        wl.bases[0] = LearnerSpec::new("gbm_leafwise").with("n_rounds", 5);
        let oof = build_oof_matrix(&wl, &x, &y, &folds).unwrap();
        assert_eq!(oof.meta.ncols(), 4);
        assert_eq!(oof.meta.columns[3], "pred:0:gbm_leafwise");
        assert!(oof.meta.data.is_finite());
    }

    #[test]
    fn leave_one_out_on_constant_target() {
        let (x, _) = data(12);
        let y = vec![2.5; 12];
        let arch = StackArchitecture {
            bases: vec![LearnerSpec::new("cart")],
            meta: LearnerSpec::new("knn_uniform").with("k", 1),
            meta_features: MetaFeatures::BasePredictionsOnly,
            oof: OofMode::OutOfFold { k: 12 },
        };
        let folds = Folds::leave_one_out(12);
        let oof = build_oof_matrix(&arch, &x, &y, &folds).unwrap();
        assert!(oof.meta.data.column(0).iter().all(|v| *v == 2.5));
        assert!(oof.is_leakage_free());
        let stack = train_stack(&arch, &x, &y, &folds).unwrap();
        assert!(stack.predict(&x).unwrap().iter().all(|v| *v == 2.5));
    }

    #[test]
    fn one_nn_meta_memorizes_distinct_oof_keys() {
        let (x, y) = data(20);
        let arch = StackArchitecture {
            bases: vec![LearnerSpec::new("knn_distance").with("k", 3)],
            meta: LearnerSpec::new("knn_uniform").with("k", 1),
            meta_features: MetaFeatures::BasePredictionsOnly,
            oof: OofMode::OutOfFold { k: 5 },
        };
        let folds = Folds::kfold(20, 5, 2).unwrap();
        let oof = build_oof_matrix(&arch, &x, &y, &folds).unwrap();
        let col = oof.meta.data.column(0);
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted.windows(2).all(|w| w[0] < w[1]), "keys must be distinct");
        let meta = TrainedRegressor::fit(&arch.meta, &oof.meta, &y).unwrap();
        assert_eq!(meta.predict(&oof.meta).unwrap(), y);
    }

    #[test]
    fn base_order_swap_leaves_knn_meta_unchanged() {
        let (x, y) = data(20);
        let a = LearnerSpec::new("cart").with("max_depth", 3);
        let b = LearnerSpec::new("knn_uniform").with("k", 3);
        let make = |bases: Vec<LearnerSpec>| StackArchitecture {
            bases,
            meta: LearnerSpec::new("knn_distance").with("k", 3),
            meta_features: MetaFeatures::BasePredictionsOnly,
            oof: OofMode::OutOfFold { k: 4 },
        };
        let folds = Folds::kfold(20, 4, 9).unwrap();
        let s1 = train_stack(&make(vec![a.clone(), b.clone()]), &x, &y, &folds).unwrap();
        let s2 = train_stack(&make(vec![b, a]), &x, &y, &folds).unwrap();
        let (q, _) = data(27);
        let p1 = s1.predict(&q).unwrap();
        let p2 = s2.predict(&q).unwrap();
        for (u, v) in p1.iter().zip(&p2) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{u} vs {v}");
        }
    }

    #[test]
    fn linear_meta_passes_through_an_exact_base() {
        let (x, y) = data(25);
        let arch = StackArchitecture {
            bases: vec![LearnerSpec::new("cart")],
            meta: LearnerSpec::new("krr").with("kernel", "linear").with("alpha", 1e-10).with("center", true),
            meta_features: MetaFeatures::BasePredictionsOnly,
            oof: OofMode::InSample,
        };
        let folds = Folds::kfold(25, 5, 0).unwrap();
        let stack = train_stack(&arch, &x, &y, &folds).unwrap();
        let (q, _) = data(40);
        let base = stack.bases[0].predict(&q).unwrap();
        for (s, b) in stack.predict(&q).unwrap().iter().zip(&base) {
            assert!((s - b).abs() < 1e-6);
        }
    }

    #[test]
    fn in_sample_mode_reuses_training_rows() {
        let (x, y) = data(20);
        let folds = Folds::kfold(20, 4, 1).unwrap();
        let mut arch = StackArchitecture {
            bases: vec![LearnerSpec::new("cart")],
            meta: LearnerSpec::new("cart"),
            meta_features: MetaFeatures::FeaturesPlusBasePredictions,
            oof: OofMode::OutOfFold { k: 4 },
        };
        assert!(build_oof_matrix(&arch, &x, &y, &folds).unwrap().is_leakage_free());
        arch.oof = OofMode::InSample;
        let oof = build_oof_matrix(&arch, &x, &y, &folds).unwrap();
        assert!(!oof.is_leakage_free());
        assert_eq!(oof.fits.len(), 1);
    }

    #[test]
    fn errors_and_persistence() {
        let (x, y) = data(20);
        let arch = StackArchitecture {
            bases: vec![LearnerSpec::new("cart")],
            meta: LearnerSpec::new("knn_uniform").with("k", 2),
            meta_features: MetaFeatures::BasePredictionsOnly,
            oof: OofMode::OutOfFold { k: 5 },
        };
        let folds4 = Folds::kfold(20, 4, 0).unwrap();
        assert_eq!(
            build_oof_matrix(&arch, &x, &y, &folds4).unwrap_err(),
            StackError::FoldCount { expected: 5, found: 4 }
        );
        let with_empty = Folds::new(20, vec![(0..5).collect(), (5..10).collect(), (10..15).collect(), (15..20).collect(), vec![]]).unwrap();
        assert_eq!(build_oof_matrix(&arch, &x, &y, &with_empty).unwrap_err(), StackError::EmptyFold(4));

        let stack = train_stack(&arch, &x, &y, &Folds::kfold(20, 5, 0).unwrap()).unwrap();
        let back = StackModel::from_json(&stack.to_json()).unwrap();
        assert_eq!(back, stack);
        assert_eq!(back.predict(&x).unwrap(), stack.predict(&x).unwrap());
        let empty = DesignMatrix::new(x.columns.clone(), x.provenance.clone(), Matrix::zeros(0, 3));
        assert!(stack.predict(&empty).unwrap().is_empty());
        let narrow = DesignMatrix::from_matrix(Matrix::zeros(1, 2));
        assert!(matches!(stack.predict(&narrow), Err(StackError::Learner(LearnerError::ColumnMismatch { .. }))));
    }
}
