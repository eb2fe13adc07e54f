//! Pathwise Lasso and SCAD fits over a descending λ grid.

use nalgebra::{DMatrix, DVector};

use super::cd::{col, dot, CoordinateDescent, Penalty, SolverOptions};
use crate::error::{Error, Result};

/// Concavity used by SCAD unless stated otherwise.
pub const SCAD_A: f64 = 3.7;

/// Nonzero entries of a coefficient vector, indices ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseCoef {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseCoef {
    pub fn from_dense(beta: &[f64]) -> Self {
        let mut out = Self::default();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                out.indices.push(j);
                out.values.push(b);
            }
        }
        out
    }

    pub fn to_dense(&self, p: usize) -> DVector<f64> {
        let mut v = DVector::zeros(p);
        for (&j, &b) in self.indices.iter().zip(&self.values) {
            v[j] = b;
        }
        v
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// Solutions along a λ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub coefs: Vec<SparseCoef>,
    pub support_sizes: Vec<usize>,
    pub converged: Vec<bool>,
    pub objective: Vec<f64>,
    pub p: usize,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn coef_dense(&self, k: usize) -> DVector<f64> {
        self.coefs[k].to_dense(self.p)
    }
}

/// `max_j |Xⱼ′Y|`, the smallest λ with an all-zero Lasso solution.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (0..x.ncols())
        .map(|j| dot(col(x, j), y.as_slice()).abs())
        .fold(0.0, f64::max)
}

/// `len` log-spaced points from `lambda_max` down to `ratio · lambda_max`.
pub fn default_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    let lo = ratio.ln();
    (0..len)
        .map(|k| lambda_max * (lo * k as f64 / (len - 1) as f64).exp())
        .collect()
}

/// The grid used throughout: 100 points over three decades.
pub fn standard_grid(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    default_grid(lambda_max(x, y), 100, 1e-3)
}

fn check_inputs(x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "X has {} rows but Y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidArgument("lambdas must be finite and non-negative".into()));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("lambda grid must be strictly decreasing".into()));
    }
    Ok(())
}

fn push(path: &mut LassoPath, cd: &CoordinateDescent<'_>, lambda: f64, converged: bool) {
    let coef = SparseCoef::from_dense(cd.beta());
    path.support_sizes.push(coef.nnz());
    path.coefs.push(coef);
    path.converged.push(converged);
    path.objective.push(cd.objective(lambda));
    path.lambdas.push(lambda);
}

fn empty_path(p: usize, len: usize) -> LassoPath {
    LassoPath {
        lambdas: Vec::with_capacity(len),
        coefs: Vec::with_capacity(len),
        support_sizes: Vec::with_capacity(len),
        converged: Vec::with_capacity(len),
        objective: Vec::with_capacity(len),
        p,
    }
}

/// Lasso solutions of `½‖Y − Xβ‖² + λ‖β‖₁` along `lambdas`, warm-started
/// from the previous grid point.
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64]) -> Result<LassoPath> {
    lasso_path_with(x, y, lambdas, &SolverOptions::default())
}

pub fn lasso_path_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<LassoPath> {
    check_inputs(x, y, lambdas)?;
    let mut cd = CoordinateDescent::new(x, y, Penalty::Lasso).with_options(opts);
    let mut path = empty_path(x.ncols(), lambdas.len());
    for &lambda in lambdas {
        let status = cd.solve(lambda, opts);
        push(&mut path, &cd, lambda, status.converged);
    }
    Ok(path)
}

/// SCAD solutions along `lambdas`. Each grid point starts from the Lasso
/// solution at the same λ; the returned path is a local minimiser
/// (coordinate-wise stationary) at every converged point.
pub fn scad_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
    a: f64,
) -> Result<LassoPath> {
    scad_path_with(x, y, lambdas, a, &SolverOptions::default())
}

pub fn scad_path_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
    a: f64,
    opts: &SolverOptions,
) -> Result<LassoPath> {
    if !(a > 2.0) {
        return Err(Error::InvalidArgument(format!("SCAD concavity a = {a} must exceed 2")));
    }
    let lasso = lasso_path_with(x, y, lambdas, opts)?;
    let mut cd = CoordinateDescent::new(x, y, Penalty::Scad { a }).with_options(opts);
    let mut path = empty_path(x.ncols(), lambdas.len());
    for (k, &lambda) in lambdas.iter().enumerate() {
        cd.set_beta(lasso.coef_dense(k).as_slice());
        let status = cd.solve(lambda, opts);
        push(&mut path, &cd, lambda, status.converged && lasso.converged[k]);
    }
    Ok(path)
}

/// Largest violation of the Lasso KKT conditions for `beta` at `lambda`.
pub fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * beta;
    let g = x.transpose() * r;
    g.iter()
        .zip(beta.iter())
        .map(|(gj, bj)| {
            if *bj == 0.0 {
                (gj.abs() - lambda).max(0.0)
            } else {
                (gj - lambda * bj.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// `½‖Y − Xβ‖² + λ‖β‖₁`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - x * beta).norm_squared() + lambda * beta.lp_norm(1)
}
