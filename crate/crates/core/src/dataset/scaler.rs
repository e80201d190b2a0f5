use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::matrix::Matrix;

/// Per-column z-score statistics (population standard deviation).
///
/// Constant columns keep `scale = 1`, so they standardize to exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

pub fn fit_scaler(x: &Matrix) -> Result<ScalerStats, DatasetError> {
    let n = x.nrows();
    if n == 0 {
        return Err(DatasetError::EmptyMatrix);
    }
    let d = x.ncols();
    let mut mean = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for j in 0..d {
        let col = x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            mean[j] = first;
            continue;
        }
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        mean[j] = m;
        let sd = var.sqrt();
        if sd > 0.0 {
            scale[j] = sd;
        }
    }
    Ok(ScalerStats { mean, scale })
}

pub fn apply_scaler(x: &Matrix, stats: &ScalerStats) -> Result<Matrix, DatasetError> {
    if x.ncols() != stats.mean.len() {
        return Err(DatasetError::ScalerWidth {
            expected: stats.mean.len(),
            found: x.ncols(),
        });
    }
    let mut out = x.clone();
    out.map_inplace(|_, j, v| (v - stats.mean[j]) / stats.scale[j]);
    Ok(out)
}

impl ScalerStats {
    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, (o, v)) in out.iter_mut().zip(row).enumerate() {
            *o = (v - self.mean[j]) / self.scale[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_column() {
        let x = Matrix::from_rows(&[[2.0], [4.0]]);
        let s = fit_scaler(&x).unwrap();
        assert_eq!(s.mean, vec![3.0]);
        assert_eq!(s.scale, vec![1.0]);
        assert_eq!(apply_scaler(&x, &s).unwrap().column(0), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Matrix::from_rows(&[[5.0, 0.1], [5.0, 0.1], [5.0, 0.1]]);
        let s = fit_scaler(&x).unwrap();
        let z = apply_scaler(&x, &s).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_and_width_errors() {
        assert_eq!(fit_scaler(&Matrix::zeros(0, 3)).unwrap_err(), DatasetError::EmptyMatrix);
        let s = fit_scaler(&Matrix::from_rows(&[[1.0, 2.0]])).unwrap();
        assert!(apply_scaler(&Matrix::zeros(1, 3), &s).is_err());
    }

    #[test]
    fn repeat_application_is_bit_identical() {
        let x = Matrix::from_rows(&[[1.5, -3.0], [2.25, 7.0], [0.1, 0.2]]);
        let s = fit_scaler(&x).unwrap();
        assert_eq!(apply_scaler(&x, &s).unwrap(), apply_scaler(&x, &s).unwrap());
    }

    proptest! {
        #[test]
        fn standardized_columns_have_zero_mean_unit_std(
            rows in proptest::collection::vec(proptest::collection::vec(-1e4f64..1e4, 3), 2..40)
        ) {
            let x = Matrix::from_rows(&rows);
            let s = fit_scaler(&x).unwrap();
            let z = apply_scaler(&x, &s).unwrap();
            for j in 0..3 {
                let col = z.column(j);
                let n = col.len() as f64;
                let m = col.iter().sum::<f64>() / n;
                prop_assert!(m.abs() < 1e-12 * (1.0 + s.mean[j].abs() / s.scale[j]));
                if x.column(j).iter().any(|&v| v != x.get(0, j)) {
                    let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                    prop_assert!((sd - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
