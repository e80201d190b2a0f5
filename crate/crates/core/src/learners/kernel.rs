use serde::{Deserialize, Serialize};

use super::{LearnerError, ResolvedParams};
use crate::matrix::{dot, squared_distance, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-gamma * |a - b|^2)`
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    /// Reads `kernel` and `gamma`; an unset gamma becomes `1 / d`.
    pub(crate) fn from_params(p: &ResolvedParams, d: usize) -> Self {
        match p.string("kernel") {
            "linear" => Kernel::Linear,
            _ => Kernel::Rbf {
                gamma: p.opt_float("gamma").unwrap_or(1.0 / d.max(1) as f64),
            },
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Rbf { gamma } => (-gamma * squared_distance(a, b)).exp(),
            Kernel::Linear => dot(a, b),
        }
    }

    /// Symmetric Gram matrix, row-major.
    pub fn gram(&self, x: &Matrix) -> Vec<f64> {
        let n = x.nrows();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(x.row(i), x.row(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

/// Solves `A z = b` for symmetric positive definite `A` (row-major `n x n`)
/// by Cholesky factorization. Fails when a pivot is not clearly positive.
pub(crate) fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>, LearnerError> {
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let tiny = n as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > tiny) {
                    return Err(LearnerError::SingularKernel);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[i * n + k] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[k * n + i] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let z = cholesky_solve(&a, 2, &[6.0, 5.0]).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-14 && (z[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_rejected() {
        assert_eq!(cholesky_solve(&[1.0, 1.0, 1.0, 1.0], 2, &[1.0, 1.0]), Err(LearnerError::SingularKernel));
    }

    #[test]
    fn rbf_values() {
        let k = Kernel::Rbf { gamma: 0.5 };
        assert_eq!(k.eval(&[1.0, 2.0], &[1.0, 2.0]), 1.0);
        assert!((k.eval(&[0.0], &[2.0]) - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(Kernel::Linear.eval(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
    }
}
