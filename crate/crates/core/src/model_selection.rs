//! K-fold cross-validation over a shared λ grid, and the half split used by
//! refitted cross-validation.
//!
//! Held-out errors are summed over folds (the argmin is unaffected by
//! averaging); ties on the grid go to the larger λ.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::solvers::{lasso_path, scad_path, standard_grid, LassoPath, SCAD_A};

pub const DEFAULT_FOLDS: usize = 10;

/// Observation-to-fold map with balanced fold sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    /// Random balanced folds: a permutation of `0..n` dealt round-robin.
    pub fn random(n: usize, k: usize, key: StreamKey) -> Result<Self> {
        if k < 2 || k > n {
            return Err(Error::InvalidArgument(format!("folds {k} must lie in [2, n={n}]")));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut key.rng());
        let mut fold_of = vec![0; n];
        for (pos, &i) in perm.iter().enumerate() {
            fold_of[i] = pos % k;
        }
        Ok(Self { fold_of, k })
    }

    pub fn from_labels(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if k < 2 || fold_of.iter().any(|&f| f >= k) {
            return Err(Error::InvalidArgument("fold labels must lie in 0..k, k >= 2".into()));
        }
        Ok(Self { fold_of, k })
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(training rows, held-out rows)` for one fold.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.n()).partition(|&i| self.fold_of[i] == fold);
        (train, test)
    }
}

/// CV error along the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    /// Sum over folds of held-out squared error.
    pub cv_error: Vec<f64>,
    /// Grid points on which every fold fit converged.
    pub valid: Vec<bool>,
    pub min_index: usize,
    pub lambda_min: f64,
    /// `per_fold_support[fold][k]`.
    pub per_fold_support: Vec<Vec<usize>>,
}

impl CvCurve {
    pub fn min_error(&self) -> f64 {
        self.cv_error[self.min_index]
    }
}

/// Which path a CV run scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathKind {
    Lasso,
    Scad { a: f64 },
}

impl PathKind {
    pub fn fit(self, x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64]) -> Result<LassoPath> {
        match self {
            PathKind::Lasso => lasso_path(x, y, lambdas),
            PathKind::Scad { a } => scad_path(x, y, lambdas, a),
        }
    }
}

pub(crate) fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows)
}

pub(crate) fn select_entries(y: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]))
}

/// Score `kind` on every fold over a fixed grid.
pub fn cv_curve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: &FoldAssignment,
    lambdas: &[f64],
    kind: PathKind,
) -> Result<CvCurve> {
    if folds.n() != x.nrows() {
        return Err(Error::InvalidArgument("fold assignment does not match n".into()));
    }
    let per_fold: Vec<Result<(Vec<f64>, Vec<bool>, Vec<usize>)>> = (0..folds.k)
        .into_par_iter()
        .map(|fold| {
            let (train, test) = folds.split(fold);
            let xt = select_rows(x, &train);
            let yt = select_entries(y, &train);
            let xv = select_rows(x, &test);
            let yv = select_entries(y, &test);
            let path = kind.fit(&xt, &yt, lambdas)?;
            let sse = (0..path.len())
                .map(|k| {
                    let coef = &path.coefs[k];
                    let mut r = yv.clone();
                    for (&j, &b) in coef.indices.iter().zip(&coef.values) {
                        r.axpy(-b, &xv.column(j), 1.0);
                    }
                    r.norm_squared()
                })
                .collect();
            Ok((sse, path.converged, path.support_sizes))
        })
        .collect();

    let m = lambdas.len();
    let mut cv_error = vec![0.0; m];
    let mut valid = vec![true; m];
    let mut per_fold_support = Vec::with_capacity(folds.k);
    for res in per_fold {
        let (sse, conv, support) = res?;
        for k in 0..m {
            cv_error[k] += sse[k];
            valid[k] &= conv[k];
        }
        per_fold_support.push(support);
    }
    let mut min_index = None;
    for k in 0..m {
        if !valid[k] {
            continue;
        }
        match min_index {
            Some(b) if cv_error[k] >= cv_error[b] => {}
            _ => min_index = Some(k),
        }
    }
    let min_index = min_index.ok_or(Error::NoValidLambda)?;
    Ok(CvCurve {
        lambdas: lambdas.to_vec(),
        cv_error,
        valid,
        min_index,
        lambda_min: lambdas[min_index],
        per_fold_support,
    })
}

/// K-fold CV for the Lasso over the standard grid built from the full data.
pub fn cv_lasso(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, key: StreamKey) -> Result<CvCurve> {
    let folds = FoldAssignment::random(x.nrows(), k, key)?;
    cv_curve(x, y, &folds, &standard_grid(x, y), PathKind::Lasso)
}

/// K-fold CV for SCAD (a = 3.7), same protocol as [`cv_lasso`].
pub fn cv_scad(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, key: StreamKey) -> Result<CvCurve> {
    let folds = FoldAssignment::random(x.nrows(), k, key)?;
    cv_curve(x, y, &folds, &standard_grid(x, y), PathKind::Scad { a: SCAD_A })
}

/// Random partition of `0..n` into halves of sizes `⌊n/2⌋` and `⌈n/2⌉`,
/// each returned in ascending order.
pub fn split_half(n: usize, key: StreamKey) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("n = {n} too small to split")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut key.rng());
    let mut first = perm[..n / 2].to_vec();
    let mut second = perm[n / 2..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}
