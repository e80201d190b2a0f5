//! Train/test partitioning by joint X-Y Kennard-Stone selection (SPXY) and
//! seeded k-fold assignment.
//!
//! The SPXY metric between samples `p` and `q` is
//!
//! ```text
//! d_xy(p, q) = d_x(p, q) / max d_x + d_y(p, q) / max d_y
//! ```
//!
//! with `d_x` the Euclidean distance between feature rows and `d_y = |y_p - y_q|`.
//! A normalizer that is zero (all rows or all targets identical) drops its term.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{apply_scaler, fit_scaler};
use crate::matrix::{squared_distance, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("feature matrix has {rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("train fraction {fraction} of {n} samples leaves an empty train or test set")]
    BadFraction { fraction: f64, n: usize },
    #[error("k = {k} folds requested for {n} training samples")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroFolds,
    #[error("folds do not partition 0..{0}: {1}")]
    NotAPartition(usize, String),
    #[error("non-finite value in split inputs")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpxyOptions {
    pub train_fraction: f64,
    /// Z-score features before computing `d_x`.
    pub standardize: bool,
}

impl Default for SpxyOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            standardize: true,
        }
    }
}

/// Train/test indices into the full dataset plus k-fold assignment of the
/// training rows. `train_indices` keeps selection order; `folds` hold dataset
/// indices, each fold sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    #[serde(default)]
    pub folds: Vec<Vec<usize>>,
}

impl SplitPlan {
    /// Folds expressed as positions into `train_indices`, i.e. rows of the
    /// training sub-matrix.
    pub fn fold_positions(&self) -> Result<Folds, SplitError> {
        let pos: HashMap<usize, usize> = self.train_indices.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let mut folds = Vec::with_capacity(self.folds.len());
        for f in &self.folds {
            let mut v = Vec::with_capacity(f.len());
            for i in f {
                let p = pos.get(i).ok_or_else(|| {
                    SplitError::NotAPartition(self.train_indices.len(), format!("index {i} is not a training row"))
                })?;
                v.push(*p);
            }
            v.sort_unstable();
            folds.push(v);
        }
        Folds::new(self.train_indices.len(), folds)
    }
}

/// Number of training samples for `fraction` of `n`.
pub fn train_size(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// Pairwise SPXY distances, row-major `n x n`.
pub fn spxy_distances(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    let mut dx = vec![0.0; n * n];
    dx.par_chunks_mut(n.max(1)).enumerate().for_each(|(p, row)| {
        for (q, out) in row.iter_mut().enumerate() {
            *out = squared_distance(x.row(p), x.row(q)).sqrt();
        }
    });
    let max_dx = dx.iter().copied().fold(0.0, f64::max);
    let max_dy = {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if n == 0 { 0.0 } else { hi - lo }
    };
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n.max(1)).enumerate().for_each(|(p, row)| {
        for (q, out) in row.iter_mut().enumerate() {
            let tx = if max_dx > 0.0 { dx[p * n + q] / max_dx } else { 0.0 };
            let ty = if max_dy > 0.0 { (y[p] - y[q]).abs() / max_dy } else { 0.0 };
            *out = tx + ty;
        }
    });
    d
}

/// SPXY train/test split. Folds are left empty.
///
/// Selection starts from the pair with the largest `d_xy` (lexicographically
/// smallest `(p, q)` on ties; only `p` when a single training sample is
/// requested), then repeatedly adds the remaining sample whose nearest selected
/// sample is farthest away, lowest index first on ties.
pub fn spxy_split(x: &Matrix, y: &[f64], opts: SpxyOptions) -> Result<SplitPlan, SplitError> {
    let n = x.nrows();
    if n != y.len() {
        return Err(SplitError::LengthMismatch { rows: n, targets: y.len() });
    }
    if n < 2 {
        return Err(SplitError::TooFewSamples(n));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(SplitError::NonFinite);
    }
    let n_train = train_size(n, opts.train_fraction);
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) || n_train == 0 || n_train >= n {
        return Err(SplitError::BadFraction {
            fraction: opts.train_fraction,
            n,
        });
    }

    let scaled;
    let features = if opts.standardize {
        let stats = fit_scaler(x).expect("n >= 2");
        scaled = apply_scaler(x, &stats).expect("same width");
        &scaled
    } else {
        x
    };
    let d = spxy_distances(features, y);

    let (mut bp, mut bq, mut best) = (0, 1, f64::NEG_INFINITY);
    for p in 0..n {
        for q in p + 1..n {
            if d[p * n + q] > best {
                best = d[p * n + q];
                bp = p;
                bq = q;
            }
        }
    }

    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(n_train);
    let mut nearest = vec![f64::INFINITY; n];
    let take = |i: usize, selected: &mut Vec<bool>, nearest: &mut Vec<f64>, order: &mut Vec<usize>| {
        selected[i] = true;
        order.push(i);
        for c in 0..n {
            nearest[c] = nearest[c].min(d[i * n + c]);
        }
    };
    take(bp, &mut selected, &mut nearest, &mut order);
    if n_train > 1 {
        take(bq, &mut selected, &mut nearest, &mut order);
    }
    while order.len() < n_train {
        let mut pick = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for c in 0..n {
            if !selected[c] && nearest[c] > far {
                far = nearest[c];
                pick = c;
            }
        }
        take(pick, &mut selected, &mut nearest, &mut order);
    }

    let test_indices = (0..n).filter(|&i| !selected[i]).collect();
    Ok(SplitPlan {
        train_indices: order,
        test_indices,
        folds: Vec::new(),
    })
}

/// Shuffles the training indices with a ChaCha8 generator seeded by `seed`
/// and deals them round-robin into `k` folds.
pub fn kfold_assign(plan: &SplitPlan, k: usize, seed: u64) -> Result<SplitPlan, SplitError> {
    let folds = deal(&plan.train_indices, k, seed)?;
    Ok(SplitPlan {
        train_indices: plan.train_indices.clone(),
        test_indices: plan.test_indices.clone(),
        folds,
    })
}

fn deal(items: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, SplitError> {
    if k == 0 {
        return Err(SplitError::ZeroFolds);
    }
    if k > items.len() {
        return Err(SplitError::KTooLarge { k, n: items.len() });
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, v) in shuffled.into_iter().enumerate() {
        folds[i % k].push(v);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// A partition of `0..n` into folds; each fold lists row positions ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folds {
    n: usize,
    folds: Vec<Vec<usize>>,
}

impl Folds {
    pub fn new(n: usize, folds: Vec<Vec<usize>>) -> Result<Self, SplitError> {
        let mut seen = vec![false; n];
        for f in &folds {
            for &i in f {
                if i >= n || seen[i] {
                    return Err(SplitError::NotAPartition(n, format!("row {i} out of range or repeated")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(SplitError::NotAPartition(n, format!("row {i} unassigned")));
        }
        Ok(Self { n, folds })
    }

    /// Seeded k-fold over `0..n`.
    pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Self, SplitError> {
        let rows: Vec<usize> = (0..n).collect();
        Ok(Self { n, folds: deal(&rows, k, seed)? })
    }

    pub fn leave_one_out(n: usize) -> Self {
        Self {
            n,
            folds: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold(&self, f: usize) -> &[usize] {
        &self.folds[f]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.folds.iter().map(Vec::as_slice)
    }

    /// Rows outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        let mut held = vec![false; self.n];
        for &i in &self.folds[f] {
            held[i] = true;
        }
        (0..self.n).filter(|&i| !held[i]).collect()
    }

    /// Fold containing each row.
    pub fn assignment(&self) -> Vec<usize> {
        let mut a = vec![0; self.n];
        for (f, rows) in self.folds.iter().enumerate() {
            for &i in rows {
                a[i] = f;
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_d(v: &[f64]) -> Matrix {
        Matrix::from_rows(&v.iter().map(|x| [*x]).collect::<Vec<_>>())
    }

    #[test]
    fn four_point_line() {
        let x = one_d(&[0.0, 1.0, 2.0, 10.0]);
        let plan = spxy_split(&x, &[0.0, 1.0, 2.0, 10.0], SpxyOptions { train_fraction: 0.75, standardize: true }).unwrap();
        assert_eq!(plan.train_indices, vec![0, 3, 2]);
        assert_eq!(plan.test_indices, vec![1]);
    }

    #[test]
    fn two_points_pick_lowest_index() {
        let x = one_d(&[4.0, -1.0]);
        let plan = spxy_split(&x, &[1.0, 2.0], SpxyOptions { train_fraction: 0.5, standardize: false }).unwrap();
        assert_eq!(plan.train_indices, vec![0]);
        assert_eq!(plan.test_indices, vec![1]);
    }

    #[test]
    fn duplicates_are_selected_last() {
        // Point 4 is an exact copy of point 1.
        let xs = [[0.0, 0.0], [1.0, 0.5], [3.0, 1.0], [0.5, 2.0], [1.0, 0.5]];
        let ys = [0.0, 1.0, 2.5, 0.7, 1.0];
        let x = Matrix::from_rows(&xs);
        let plan = spxy_split(&x, &ys, SpxyOptions { train_fraction: 0.8, standardize: true }).unwrap();
        assert_eq!(plan.train_indices.len(), 4);
        assert!(!(plan.train_indices.contains(&1) && plan.train_indices.contains(&4)));
    }

    #[test]
    fn identical_rows_fall_back_to_index_order() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [1.0], [1.0]]);
        let plan = spxy_split(&x, &[2.0; 4], SpxyOptions { train_fraction: 0.5, standardize: true }).unwrap();
        assert_eq!(plan.train_indices, vec![0, 1]);
        assert_eq!(plan.test_indices, vec![2, 3]);
    }

    #[test]
    fn split_errors() {
        let x = one_d(&[1.0]);
        assert_eq!(spxy_split(&x, &[1.0], SpxyOptions::default()), Err(SplitError::TooFewSamples(1)));
        let x = one_d(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            spxy_split(&x, &[1.0, 2.0, 3.0], SpxyOptions { train_fraction: 0.1, standardize: true }),
            Err(SplitError::BadFraction { .. })
        ));
        assert!(matches!(spxy_split(&x, &[1.0], SpxyOptions::default()), Err(SplitError::LengthMismatch { .. })));
    }

    #[test]
    fn kfold_sizes() {
        let plan = SplitPlan {
            train_indices: (0..10).collect(),
            test_indices: vec![],
            folds: vec![],
        };
        let p = kfold_assign(&plan, 10, 1).unwrap();
        assert!(p.folds.iter().all(|f| f.len() == 1));

        let plan = SplitPlan {
            train_indices: (0..165).map(|i| i * 2).collect(),
            test_indices: vec![],
            folds: vec![],
        };
        let p = kfold_assign(&plan, 10, 42).unwrap();
        let mut sizes: Vec<usize> = p.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![16, 16, 16, 16, 16, 17, 17, 17, 17, 17]);
        assert_eq!(p, kfold_assign(&plan, 10, 42).unwrap());
        assert_ne!(p.folds, kfold_assign(&plan, 10, 43).unwrap().folds);
        assert_eq!(kfold_assign(&plan, 166, 0), Err(SplitError::KTooLarge { k: 166, n: 165 }));

        let folds = p.fold_positions().unwrap();
        assert_eq!(folds.n(), 165);
        assert_eq!(folds.k(), 10);
    }

    #[test]
    fn folds_validate_partition() {
        assert!(Folds::new(3, vec![vec![0, 1], vec![2]]).is_ok());
        assert!(Folds::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Folds::new(3, vec![vec![0], vec![2]]).is_err());
        let f = Folds::new(4, vec![vec![0, 3], vec![1, 2]]).unwrap();
        assert_eq!(f.complement(0), vec![1, 2]);
        assert_eq!(f.assignment(), vec![0, 1, 1, 0]);
    }

    proptest! {
        #[test]
        fn plan_partitions_indices(
            pts in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0, -50.0f64..50.0), 3..30),
            frac in 0.3f64..0.9,
        ) {
            let x = Matrix::from_rows(&pts.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>());
            let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let n = pts.len();
            let n_train = train_size(n, frac);
            prop_assume!(n_train >= 1 && n_train < n);
            let plan = spxy_split(&x, &y, SpxyOptions { train_fraction: frac, standardize: true }).unwrap();
            prop_assert_eq!(plan.train_indices.len(), n_train);
            let mut all: Vec<usize> = plan.train_indices.iter().chain(&plan.test_indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(plan.test_indices.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn fold_sizes_differ_by_at_most_one(n in 1usize..200, k in 1usize..20, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let f = Folds::kfold(n, k, seed).unwrap();
            let sizes: Vec<usize> = f.iter().map(<[usize]>::len).collect();
            let lo = *sizes.iter().min().unwrap();
            let hi = *sizes.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        }
    }
}
