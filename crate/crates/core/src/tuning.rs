//! Cross-validation and seeded random hyperparameter search.
//!
//! Trial `i` draws its parameters from stream `i` of the search seed, so the
//! first `b` trials of a budget-`B` search equal a budget-`b` search, and
//! trials may be evaluated in parallel without changing results.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DesignMatrix;
use crate::learners::{stream_rng, LearnerError, LearnerSpec, ParamValue, Params, TrainedRegressor};
use crate::metrics::{FoldPredictions, FoldScore, MetricError, R2Definition, Summary};
use crate::split::Folds;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuningError {
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("search budget must be at least 1")]
    EmptyBudget,
    #[error("search space for `{param}`: {reason}")]
    BadSpace { param: String, reason: String },
    #[error("folds cover {folds} rows but the data has {rows}")]
    FoldRows { folds: usize, rows: usize },
    #[error("every trial failed; first error: {0}")]
    AllTrialsFailed(String),
}

/// Sampling distribution of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    IntUniform { lo: i64, hi: i64 },
    Choice { values: Vec<ParamValue> },
}

impl Distribution {
    pub fn choice<T: Into<ParamValue>>(values: impl IntoIterator<Item = T>) -> Self {
        Distribution::Choice {
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    fn validate(&self, param: &str) -> Result<(), TuningError> {
        let bad = |reason: &str| {
            Err(TuningError::BadSpace {
                param: param.to_string(),
                reason: reason.to_string(),
            })
        };
        match self {
            Distribution::Uniform { lo, hi } if !(lo < hi) => bad("needs lo < hi"),
            Distribution::LogUniform { lo, hi } if !(*lo > 0.0 && lo < hi) => bad("needs 0 < lo < hi"),
            Distribution::IntUniform { lo, hi } if lo > hi => bad("needs lo <= hi"),
            Distribution::Choice { values } if values.is_empty() => bad("needs at least one value"),
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> ParamValue {
        match self {
            Distribution::Uniform { lo, hi } => ParamValue::Float(lo + (hi - lo) * rng.gen::<f64>()),
            Distribution::LogUniform { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                ParamValue::Float((a + (b - a) * rng.gen::<f64>()).exp())
            }
            Distribution::IntUniform { lo, hi } => ParamValue::Int(rng.gen_range(*lo..=*hi)),
            Distribution::Choice { values } => values[rng.gen_range(0..values.len())].clone(),
        }
    }
}

/// Distributions keyed by parameter name; sampled in name order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace(pub BTreeMap<String, Distribution>);

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, param: &str, dist: Distribution) -> Self {
        self.0.insert(param.to_string(), dist);
        self
    }

    pub fn params(&self) -> impl Iterator<Item = &str> + '_ {
        self.0.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<(), TuningError> {
        self.0.iter().try_for_each(|(k, d)| d.validate(k))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Params {
        self.0.iter().map(|(k, d)| (k.clone(), d.sample(rng))).collect()
    }
}

/// Per-fold models, predictions and scores of one cross-validation.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub models: Vec<TrainedRegressor>,
    pub predictions: Vec<FoldPredictions>,
    pub scores: Vec<FoldScore>,
    /// Held-out prediction for every row.
    pub oof: Vec<f64>,
}

impl CvOutcome {
    pub fn mae(&self) -> Summary {
        Summary::of(&self.scores.iter().map(|s| s.mae).collect::<Vec<_>>())
    }

    pub fn rmse(&self) -> Summary {
        Summary::of(&self.scores.iter().map(|s| s.rmse).collect::<Vec<_>>())
    }

    pub fn r2(&self) -> Summary {
        Summary::of(&self.scores.iter().filter_map(|s| s.r2).collect::<Vec<_>>())
    }
}

/// Fits one model per fold on the other folds and scores it on the fold.
pub fn cross_validate(
    spec: &LearnerSpec,
    x: &DesignMatrix,
    y: &[f64],
    folds: &Folds,
    def: R2Definition,
) -> Result<CvOutcome, TuningError> {
    if folds.n() != x.nrows() {
        return Err(TuningError::FoldRows {
            folds: folds.n(),
            rows: x.nrows(),
        });
    }
    let per_fold = (0..folds.k())
        .into_par_iter()
        .map(|f| -> Result<_, TuningError> {
            let train = folds.complement(f);
            let held = folds.fold(f);
            let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = TrainedRegressor::fit(spec, &x.select_rows(&train), &ytr)?;
            let pred = model.predict(&x.select_rows(held))?;
            let truth: Vec<f64> = held.iter().map(|&i| y[i]).collect();
            let score = FoldScore::compute(&truth, &pred, def)?;
            Ok((model, FoldPredictions { y_true: truth, y_pred: pred }, score))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut oof = vec![f64::NAN; x.nrows()];
    let mut models = Vec::with_capacity(per_fold.len());
    let mut predictions = Vec::with_capacity(per_fold.len());
    let mut scores = Vec::with_capacity(per_fold.len());
    for (f, (m, p, s)) in per_fold.into_iter().enumerate() {
        for (&i, v) in folds.fold(f).iter().zip(&p.y_pred) {
            oof[i] = *v;
        }
        models.push(m);
        predictions.push(p);
        scores.push(s);
    }
    Ok(CvOutcome {
        models,
        predictions,
        scores,
        oof,
    })
}

/// One evaluated parameter sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub params: Params,
    pub fold_scores: Vec<FoldScore>,
    pub mae: Summary,
    pub rmse: Summary,
    pub r2: Summary,
    /// 1-based rank among successful trials.
    pub rank: Option<usize>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub learner: String,
    pub seed: u64,
    pub best: usize,
    pub trials: Vec<TrialRecord>,
}

impl SearchResult {
    pub fn best_trial(&self) -> &TrialRecord {
        &self.trials[self.best]
    }

    /// Spec with the winning parameters.
    pub fn best_spec(&self, learner_seed: u64) -> LearnerSpec {
        LearnerSpec {
            learner: self.learner.clone(),
            params: self.best_trial().params.clone(),
            seed: learner_seed,
        }
    }

    /// One row per trial: flattened parameters, per-fold scores, means.
    pub fn to_csv(&self) -> String {
        let names: BTreeSet<&str> = self.trials.iter().flat_map(|t| t.params.keys().map(String::as_str)).collect();
        let k = self.trials.iter().map(|t| t.fold_scores.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = vec!["trial".into(), "status".into()];
        header.extend(names.iter().map(|n| format!("param:{n}")));
        for f in 0..k {
            header.extend([format!("fold{f}_mae"), format!("fold{f}_rmse"), format!("fold{f}_r2")]);
        }
        header.extend(
            ["mae_mean", "mae_std", "rmse_mean", "rmse_std", "r2_mean", "r2_std", "rank", "error"].map(String::from),
        );
        w.write_record(&header).expect("in-memory write");
        for t in &self.trials {
            let mut rec = vec![t.index.to_string(), if t.succeeded() { "ok" } else { "failed" }.to_string()];
            rec.extend(names.iter().map(|n| t.params.get(*n).map(|v| v.to_string()).unwrap_or_default()));
            for f in 0..k {
                match t.fold_scores.get(f) {
                    Some(s) => rec.extend([
                        format!("{:?}", s.mae),
                        format!("{:?}", s.rmse),
                        s.r2.map(|v| format!("{v:?}")).unwrap_or_default(),
                    ]),
                    None => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            for s in [t.mae, t.rmse, t.r2] {
                rec.push(format!("{:?}", s.mean));
                rec.push(format!("{:?}", s.std));
            }
            rec.push(t.rank.map(|r| r.to_string()).unwrap_or_default());
            rec.push(t.error.clone().unwrap_or_default());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

fn better(a: &TrialRecord, b: &TrialRecord) -> bool {
    (a.rmse.mean, a.mae.mean, a.index) < (b.rmse.mean, b.mae.mean, b.index)
}

/// Evaluates `budget` parameter samples by cross-validation. Sampled values
/// override `base.params`; every fit uses `base.seed`. Failed trials are
/// recorded and skipped. Best is the lowest mean RMSE, then lowest mean MAE,
/// then earliest trial.
pub fn random_search(
    base: &LearnerSpec,
    space: &SearchSpace,
    budget: usize,
    x: &DesignMatrix,
    y: &[f64],
    folds: &Folds,
    seed: u64,
    def: R2Definition,
) -> Result<SearchResult, TuningError> {
    if budget == 0 {
        return Err(TuningError::EmptyBudget);
    }
    space.validate()?;
    let mut trials: Vec<TrialRecord> = (0..budget)
        .into_par_iter()
        .map(|index| {
            let mut params = base.params.clone();
            params.extend(space.sample(&mut stream_rng(seed, index as u64)));
            let spec = LearnerSpec {
                learner: base.learner.clone(),
                params: params.clone(),
                seed: base.seed,
            };
            let nan = Summary::of(&[]);
            match cross_validate(&spec, x, y, folds, def) {
                Ok(cv) => TrialRecord {
                    index,
                    params,
                    mae: cv.mae(),
                    rmse: cv.rmse(),
                    r2: cv.r2(),
                    fold_scores: cv.scores,
                    rank: None,
                    error: None,
                },
                Err(e) => TrialRecord {
                    index,
                    params,
                    fold_scores: Vec::new(),
                    mae: nan,
                    rmse: nan,
                    r2: nan,
                    rank: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut ok: Vec<usize> = (0..budget).filter(|&i| trials[i].succeeded()).collect();
    if ok.is_empty() {
        return Err(TuningError::AllTrialsFailed(trials[0].error.clone().unwrap_or_default()));
    }
    ok.sort_by(|&a, &b| {
        if better(&trials[a], &trials[b]) {
            std::cmp::Ordering::Less
        } else if better(&trials[b], &trials[a]) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    for (r, &i) in ok.iter().enumerate() {
        trials[i].rank = Some(r + 1);
    }
    Ok(SearchResult {
        learner: base.learner.clone(),
        seed,
        best: ok[0],
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn data() -> (DesignMatrix, Vec<f64>, Folds) {
        let rows: Vec<[f64; 3]> = (0..50)
            .map(|i| {
                let t = i as f64;
                [(t * 0.3).sin(), (t * 0.17).cos(), t % 4.0]
            })
            .collect();
        let y = rows.iter().map(|r| 3.0 * r[0] + r[1] * r[2]).collect();
        (DesignMatrix::from_matrix(Matrix::from_rows(&rows)), y, Folds::kfold(50, 5, 1).unwrap())
    }

    #[test]
    fn oof_covers_every_row_once() {
        let (x, y, folds) = data();
        let cv = cross_validate(&LearnerSpec::new("cart"), &x, &y, &folds, R2Definition::Determination).unwrap();
        assert_eq!(cv.models.len(), 5);
        assert!(cv.oof.iter().all(|v| v.is_finite()));
        for (f, p) in cv.predictions.iter().enumerate() {
            for (&i, v) in folds.fold(f).iter().zip(&p.y_pred) {
                assert_eq!(cv.oof[i], *v);
            }
        }
    }

    #[test]
    fn budget_one_and_determinism() {
        let (x, y, folds) = data();
        let space = crate::learners::registry().get("gbm_leafwise").unwrap().default_space();
        let base = LearnerSpec::new("gbm_leafwise").with("n_rounds", 20);
        let run = |b| random_search(&base, &space, b, &x, &y, &folds, 7, R2Definition::Determination).unwrap();
        let one = run(1);
        assert_eq!(one.best, 0);
        assert_eq!(one.trials[0].rank, Some(1));
        let a = run(4);
        let b = run(4);
        assert_eq!(a, b);
        // prefix property
        assert_eq!(a.trials[0], {
            let mut t = one.trials[0].clone();
            t.rank = a.trials[0].rank;
            t
        });
        let best = a.best_trial().rmse.mean;
        assert!(a.trials.iter().all(|t| best <= t.rmse.mean));
    }

    #[test]
    fn degenerate_space_repeats_params() {
        let (x, y, folds) = data();
        let space = SearchSpace::new().with("max_depth", Distribution::choice([3i64]));
        let r = random_search(&LearnerSpec::new("cart"), &space, 3, &x, &y, &folds, 0, R2Definition::Determination).unwrap();
        assert!(r.trials.iter().all(|t| t.params == r.trials[0].params));
        assert!(r.trials.iter().all(|t| t.fold_scores == r.trials[0].fold_scores));
        assert_eq!(r.best, 0);
    }

    #[test]
    fn failures_are_recorded() {
        let (x, y, folds) = data();
        let space = SearchSpace::new().with("k", Distribution::IntUniform { lo: 1, hi: 100 });
        let r = random_search(&LearnerSpec::new("knn_uniform"), &space, 12, &x, &y, &folds, 3, R2Definition::Determination).unwrap();
        assert!(r.trials.iter().any(|t| !t.succeeded()));
        assert!(r.best_trial().succeeded());
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.lines().next().unwrap().starts_with("trial,status,param:k,fold0_mae"));
        assert!(csv.contains("failed"));
    }

    #[test]
    fn space_validation() {
        let bad = SearchSpace::new().with("c", Distribution::LogUniform { lo: 0.0, hi: 1.0 });
        assert!(matches!(bad.validate(), Err(TuningError::BadSpace { .. })));
        let (x, y, folds) = data();
        assert_eq!(
            random_search(&LearnerSpec::new("cart"), &SearchSpace::new(), 0, &x, &y, &folds, 0, R2Definition::Determination)
                .unwrap_err(),
            TuningError::EmptyBudget
        );
    }

    #[test]
    fn space_round_trips_through_toml() {
        let space = SearchSpace::new()
            .with("a", Distribution::LogUniform { lo: 0.1, hi: 10.0 })
            .with("b", Distribution::choice(["x", "y"]))
            .with("c", Distribution::IntUniform { lo: 1, hi: 3 });
        let text = toml::to_string(&space).unwrap();
        assert_eq!(toml::from_str::<SearchSpace>(&text).unwrap(), space);
    }
}
