//! Regression scores and fold-aggregated report rows.
//!
//! R² is the coefficient of determination `1 - SS_res / SS_tot` by default;
//! the squared Pearson correlation is available as [`R2Definition::PearsonSquared`].
//! Fold spreads are population standard deviations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TargetKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} truths vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty vector")]
    Empty,
    #[error("non-finite value in scored vectors")]
    NonFinite,
    #[error("R² is undefined for a constant truth vector")]
    ConstantTruth,
    #[error("a cross-validated report needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
}

fn check(y_true: &[f64], y_pred: &[f64]) -> Result<(), MetricError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricError::Empty);
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    let s: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).abs()).sum();
    Ok(s / y_true.len() as f64)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    let s: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((s / y_true.len() as f64).sqrt())
}

/// Coefficient of determination. May be negative.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    let m = mean(y_true);
    let ss_tot: f64 = y_true.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ConstantTruth);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Squared Pearson correlation between truth and prediction.
pub fn pearson_r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    let mt = mean(y_true);
    let mp = mean(y_pred);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        sxy += (t - mt) * (p - mp);
        sxx += (t - mt) * (t - mt);
        syy += (p - mp) * (p - mp);
    }
    if sxx == 0.0 {
        return Err(MetricError::ConstantTruth);
    }
    if syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy * sxy / (sxx * syy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Definition {
    #[default]
    Determination,
    PearsonSquared,
}

impl R2Definition {
    pub fn score(self, y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
        match self {
            R2Definition::Determination => r2(y_true, y_pred),
            R2Definition::PearsonSquared => pearson_r2(y_true, y_pred),
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            R2Definition::Determination => "R² = 1 - SS_res/SS_tot",
            R2Definition::PearsonSquared => "R² = squared Pearson correlation",
        }
    }
}

/// Scores of one fold. `r2` is `None` when the fold was too small or its
/// truth was constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub n: usize,
}

impl FoldScore {
    pub fn compute(y_true: &[f64], y_pred: &[f64], def: R2Definition) -> Result<Self, MetricError> {
        let r2 = if y_true.len() < 2 {
            None
        } else {
            match def.score(y_true, y_pred) {
                Ok(v) => Some(v),
                Err(MetricError::ConstantTruth) => None,
                Err(e) => return Err(e),
            }
        };
        Ok(Self {
            mae: mae(y_true, y_pred)?,
            rmse: rmse(y_true, y_pred)?,
            r2,
            n: y_true.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and population standard deviation. `NaN` for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let m = mean(values);
        let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
        Self {
            mean: m,
            std: var.sqrt(),
        }
    }

    /// `m±s` with two decimals.
    pub fn render(&self) -> String {
        if self.mean.is_nan() {
            return "n/a".to_string();
        }
        format!("{:.2}±{:.2}", self.mean, self.std)
    }
}

/// One fold's held-out truths and predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPredictions {
    pub y_true: Vec<f64>,
    pub y_pred: Vec<f64>,
}

/// A table row: one model, fold-aggregated MAE/RMSE/R².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub folds: usize,
    pub mae: Summary,
    pub rmse: Summary,
    pub r2: Summary,
    /// Folds whose R² could not be computed (fewer than 2 samples or constant truth).
    pub r2_skipped_folds: usize,
}

impl EvalRow {
    pub fn from_scores(model: impl Into<String>, scores: &[FoldScore]) -> Self {
        let maes: Vec<f64> = scores.iter().map(|s| s.mae).collect();
        let rmses: Vec<f64> = scores.iter().map(|s| s.rmse).collect();
        let r2s: Vec<f64> = scores.iter().filter_map(|s| s.r2).collect();
        Self {
            model: model.into(),
            folds: scores.len(),
            mae: Summary::of(&maes),
            rmse: Summary::of(&rmses),
            r2: Summary::of(&r2s),
            r2_skipped_folds: scores.len() - r2s.len(),
        }
    }
}

/// Scores each fold on its own samples and aggregates mean ± population std.
pub fn cv_report(
    model: impl Into<String>,
    folds: &[FoldPredictions],
    def: R2Definition,
) -> Result<EvalRow, MetricError> {
    if folds.len() < 2 {
        return Err(MetricError::TooFewFolds(folds.len()));
    }
    let scores = folds
        .iter()
        .map(|f| FoldScore::compute(&f.y_true, &f.y_pred, def))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalRow::from_scores(model, &scores))
}

/// Single-evaluation metrics, e.g. a final model on the independent test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutScore {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub n: usize,
}

impl HoldoutScore {
    pub fn compute(y_true: &[f64], y_pred: &[f64], def: R2Definition) -> Result<Self, MetricError> {
        Ok(Self {
            mae: mae(y_true, y_pred)?,
            rmse: rmse(y_true, y_pred)?,
            r2: def.score(y_true, y_pred)?,
            n: y_true.len(),
        })
    }
}

/// A titled table of model rows for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub title: String,
    pub target: TargetKind,
    pub r2_definition: R2Definition,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(title: impl Into<String>, target: TargetKind, r2_definition: R2Definition) -> Self {
        Self {
            title: title.into(),
            target,
            r2_definition,
            rows: Vec::new(),
        }
    }

    pub fn unit_suffix(&self) -> &'static str {
        match self.target {
            TargetKind::Wavelength => " (nm)",
            TargetKind::Kr => " (log10 s^-1)",
            TargetKind::Plqy => "",
        }
    }

    /// Header cells in order: model, MAE, RMSE, R².
    pub fn header(&self) -> [String; 4] {
        let u = self.unit_suffix();
        [
            "ML models".to_string(),
            format!("MAE{u}"),
            format!("RMSE{u}"),
            "R²".to_string(),
        ]
    }

    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let header = self.header();
        let body: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                if r.folds == 1 {
                    let one = |s: Summary| if s.mean.is_nan() { "n/a".to_string() } else { format!("{:.2}", s.mean) };
                    [r.model.clone(), one(r.mae), one(r.rmse), one(r.r2)]
                } else {
                    [r.model.clone(), r.mae.render(), r.rmse.render(), r.r2.render()]
                }
            })
            .collect();
        let mut widths = [0usize; 4];
        for row in std::iter::once(&header).chain(body.iter()) {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String; 4]| -> String {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                let pad = w - cell.chars().count();
                if i > 0 {
                    s.push_str("  ");
                }
                s.push_str(cell);
                if i < 3 {
                    s.push_str(&" ".repeat(pad));
                }
            }
            s.trim_end().to_string()
        };
        let mut out = String::new();
        out.push_str(&self.title);
        out.push('\n');
        out.push_str(&line(&header));
        out.push('\n');
        for row in &body {
            out.push_str(&line(row));
            out.push('\n');
        }
        let folds = self.rows.first().map_or(0, |r| r.folds);
        if folds == 1 {
            out.push_str(&format!("single evaluation; {}\n", self.r2_definition.describe()));
        } else {
            out.push_str(&format!(
                "mean±std over {folds} folds (population std); {}\n",
                self.r2_definition.describe()
            ));
        }
        out
    }

    /// Delimited-text form, one row per model.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,folds,mae_mean,mae_std,rmse_mean,rmse_std,r2_mean,r2_std,r2_skipped_folds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.model,
                r.folds,
                r.mae.mean,
                r.mae.std,
                r.rmse.mean,
                r.rmse.std,
                r.r2.mean,
                r.r2.std,
                r.r2_skipped_folds
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let y = [1.0, 4.0, 2.5];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn mean_predictor_scores_zero() {
        let t = [1.0, 2.0, 3.0];
        let p = [2.0, 2.0, 2.0];
        assert_eq!(r2(&t, &p).unwrap(), 0.0);
        assert_eq!(mae(&t, &p).unwrap(), 2.0 / 3.0);
        assert_eq!(rmse(&t, &p).unwrap(), (2.0f64 / 3.0).sqrt());
    }

    #[test]
    fn swapped_pair_is_minus_three() {
        // SS_res = 2, SS_tot = 0.5
        assert_eq!(r2(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), -3.0);
    }

    #[test]
    fn errors() {
        assert_eq!(mae(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch(1, 2)));
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
        assert_eq!(r2(&[2.0, 2.0], &[1.0, 3.0]), Err(MetricError::ConstantTruth));
        assert_eq!(mae(&[f64::NAN], &[1.0]), Err(MetricError::NonFinite));
    }

    #[test]
    fn pearson_matches_determination_for_calibrated_predictions() {
        let t = [1.0, 2.0, 4.0, 7.0];
        let p = [1.5, 1.9, 4.2, 6.4];
        let pr = pearson_r2(&t, &p).unwrap();
        // Least-squares calibrate p onto t; R² of the calibrated predictor equals pearson r².
        let mp = p.iter().sum::<f64>() / 4.0;
        let mt = t.iter().sum::<f64>() / 4.0;
        let sxy: f64 = t.iter().zip(&p).map(|(a, b)| (a - mt) * (b - mp)).sum();
        let sxx: f64 = p.iter().map(|b| (b - mp) * (b - mp)).sum();
        let calibrated: Vec<f64> = p.iter().map(|b| mt + sxy / sxx * (b - mp)).collect();
        assert!((r2(&t, &calibrated).unwrap() - pr).abs() < 1e-12);
    }

    #[test]
    fn summary_rendering() {
        let s = Summary::of(&[5.0, 7.0]);
        assert_eq!(s.mean, 6.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.render(), "6.00±1.00");
        assert_eq!(Summary::of(&[3.0, 3.0, 3.0]).std, 0.0);
    }

    #[test]
    fn cv_report_aggregates_folds() {
        let folds = vec![
            FoldPredictions {
                y_true: vec![0.0, 10.0],
                y_pred: vec![5.0, 5.0],
            },
            FoldPredictions {
                y_true: vec![0.0, 14.0],
                y_pred: vec![7.0, 7.0],
            },
        ];
        let row = cv_report("m", &folds, R2Definition::Determination).unwrap();
        assert_eq!(row.mae.render(), "6.00±1.00");
        assert_eq!(row.folds, 2);
        assert_eq!(row.r2.mean, 0.0);

        let single = &folds[..1];
        assert_eq!(
            cv_report("m", single, R2Definition::Determination),
            Err(MetricError::TooFewFolds(1))
        );
    }

    #[test]
    fn tiny_folds_skip_r2() {
        let folds = vec![
            FoldPredictions {
                y_true: vec![1.0],
                y_pred: vec![2.0],
            },
            FoldPredictions {
                y_true: vec![1.0, 3.0],
                y_pred: vec![1.0, 3.0],
            },
        ];
        let row = cv_report("m", &folds, R2Definition::Determination).unwrap();
        assert_eq!(row.r2_skipped_folds, 1);
        assert_eq!(row.r2.mean, 1.0);
        assert_eq!(row.mae.mean, 0.5);
    }

    #[test]
    fn table_column_order() {
        let mut rep = EvalReport::new("Wavelength", TargetKind::Wavelength, R2Definition::Determination);
        rep.rows.push(EvalRow::from_scores(
            "LightGBM",
            &[
                FoldScore { mae: 5.0, rmse: 8.0, r2: Some(0.97), n: 3 },
                FoldScore { mae: 7.0, rmse: 10.0, r2: Some(0.99), n: 3 },
            ],
        ));
        let text = rep.render_table();
        let lines: Vec<&str> = text.lines().collect();
        let h = lines[1];
        let (a, b, c) = (h.find("MAE (nm)").unwrap(), h.find("RMSE (nm)").unwrap(), h.find("R²").unwrap());
        assert!(a < b && b < c);
        assert!(lines[2].contains("6.00±1.00") && lines[2].contains("9.00±1.00") && lines[2].contains("0.98±0.01"));
    }

    proptest::proptest! {
        #[test]
        fn rmse_dominates_mae(v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (t, p): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let a = mae(&t, &p).unwrap();
            let b = rmse(&t, &p).unwrap();
            proptest::prop_assert!(b >= a);
        }
    }
}
