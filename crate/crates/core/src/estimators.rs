//! The σ̂² catalogue.
//!
//! Every estimator returns an [`EstimatorOutput`] scored against the
//! dataset's true coefficients. RSS-based estimators divide by `n − ŝ`, with
//! `ŝ` counted on the same coefficient vector whose residuals form the
//! numerator. Method-of-moments values can be negative; the raw σ̂² is kept
//! and σ̂ is taken from the clamped value.

use std::fmt;
use std::str::FromStr;

use bitflags::bitflags;
use nalgebra::DVector;

use crate::data_gen::{support_of, Dataset};
use crate::error::{Error, Result};
use crate::model_selection::{
    cv_curve, cv_lasso, select_entries, select_rows, split_half, CvCurve, FoldAssignment,
    PathKind,
};
use crate::rng::{Purpose, StreamKey};
use crate::solvers::{
    lasso_path, ls_on_support, scad_path, scaled_lasso, standard_grid, sz2_lambda0,
    universal_lambda0, ScaledLassoFit, SCAD_A,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorId {
    Oracle,
    FixedLambda,
    CvL,
    Cvl,
    CvLs,
    Scad,
    Rcv,
    Sz,
    SzLs,
    Sz2,
    Sz2Ls,
    D1,
    D2,
}

impl EstimatorId {
    /// The eleven estimators reported in the no-signal table, in table order.
    pub const TABLE: [EstimatorId; 11] = [
        EstimatorId::Oracle,
        EstimatorId::CvL,
        EstimatorId::CvLs,
        EstimatorId::Scad,
        EstimatorId::Rcv,
        EstimatorId::Sz,
        EstimatorId::SzLs,
        EstimatorId::Sz2,
        EstimatorId::Sz2Ls,
        EstimatorId::D1,
        EstimatorId::D2,
    ];

    /// Everything the simulation harness runs per replication.
    pub const SIMULATED: [EstimatorId; 12] = [
        EstimatorId::Oracle,
        EstimatorId::CvL,
        EstimatorId::Cvl,
        EstimatorId::CvLs,
        EstimatorId::Scad,
        EstimatorId::Rcv,
        EstimatorId::Sz,
        EstimatorId::SzLs,
        EstimatorId::Sz2,
        EstimatorId::Sz2Ls,
        EstimatorId::D1,
        EstimatorId::D2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorId::Oracle => "Oracle",
            EstimatorId::FixedLambda => "FIXED_L",
            EstimatorId::CvL => "CV_L",
            EstimatorId::Cvl => "CVL",
            EstimatorId::CvLs => "CV_LS",
            EstimatorId::Scad => "SCAD",
            EstimatorId::Rcv => "RCV",
            EstimatorId::Sz => "SZ",
            EstimatorId::SzLs => "SZ_LS",
            EstimatorId::Sz2 => "SZ2",
            EstimatorId::Sz2Ls => "SZ2_LS",
            EstimatorId::D1 => "D1",
            EstimatorId::D2 => "D2",
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [EstimatorId::FixedLambda]
            .into_iter()
            .chain(EstimatorId::SIMULATED)
            .find(|id| id.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator {s:?}")))
    }
}

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct Flags: u8 {
        const CLAMPED_NEGATIVE = 0b0001;
        const NONCONVERGED = 0b0010;
        const SUPPORT_OVERFLOW = 0b0100;
        const RANK_DEFICIENT = 0b1000;
    }
}

impl Flags {
    /// `|`-separated names, empty when no flag is set.
    pub fn to_label(self) -> String {
        self.iter_names().map(|(name, _)| name).collect::<Vec<_>>().join("|")
    }
}

/// Selection quality of an estimate against the true coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    /// `Σ|β̂ⱼ| / Σ|β*ⱼ|`; NaN when either side is undefined.
    pub signal_ratio: f64,
}

impl Diagnostics {
    pub fn compute(support: &[usize], beta_hat: Option<&DVector<f64>>, truth: &DVector<f64>) -> Self {
        let true_pos = support.iter().filter(|&&j| truth[j] != 0.0).count();
        let s = truth.iter().filter(|b| **b != 0.0).count();
        let truth_l1 = truth.lp_norm(1);
        let signal_ratio = match beta_hat {
            Some(b) if truth_l1 > 0.0 => b.lp_norm(1) / truth_l1,
            _ => f64::NAN,
        };
        Self { true_pos, false_pos: support.len() - true_pos, false_neg: s - true_pos, signal_ratio }
    }
}

/// One estimate of σ².
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub id: EstimatorId,
    /// Unclamped σ̂²; `None` when the estimator is undefined on this dataset.
    pub sigma2_hat: Option<f64>,
    /// `√max(σ̂², 0)`.
    pub sigma_hat: Option<f64>,
    pub support: Vec<usize>,
    pub lambda_hat: Option<f64>,
    pub diagnostics: Diagnostics,
    pub flags: Flags,
    /// Per-half diagnostics for split-sample estimators.
    pub halves: Option<[Diagnostics; 2]>,
}

impl EstimatorOutput {
    fn new(
        id: EstimatorId,
        sigma2_hat: Option<f64>,
        support: Vec<usize>,
        beta_hat: Option<&DVector<f64>>,
        ds: &Dataset,
    ) -> Self {
        let mut flags = Flags::empty();
        if matches!(sigma2_hat, Some(v) if v < 0.0) {
            flags |= Flags::CLAMPED_NEGATIVE;
        }
        let diagnostics = Diagnostics::compute(&support, beta_hat, &ds.beta_true);
        Self {
            id,
            sigma2_hat,
            sigma_hat: sigma2_hat.map(|v| v.max(0.0).sqrt()),
            support,
            lambda_hat: None,
            diagnostics,
            flags,
            halves: None,
        }
    }

    fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_hat = Some(lambda);
        self
    }

    fn with_flags(mut self, flags: Flags) -> Self {
        self.flags |= flags;
        self
    }

    fn relabel(mut self, id: EstimatorId) -> Self {
        self.id = id;
        self
    }
}

/// `(1/n)‖Y − Xβ*‖²`.
pub fn oracle(ds: &Dataset) -> EstimatorOutput {
    let n = ds.n() as f64;
    let s2 = (&ds.y - &ds.x * &ds.beta_true).norm_squared() / n;
    EstimatorOutput::new(EstimatorId::Oracle, Some(s2), ds.true_support(), Some(&ds.beta_true), ds)
}

fn rss_estimate(id: EstimatorId, ds: &Dataset, beta: DVector<f64>, converged: bool) -> EstimatorOutput {
    let n = ds.n();
    let support = support_of(&beta);
    let mut flags = Flags::empty();
    if !converged {
        flags |= Flags::NONCONVERGED;
    }
    if support.len() >= n {
        return EstimatorOutput::new(id, None, support, Some(&beta), ds)
            .with_flags(flags | Flags::SUPPORT_OVERFLOW);
    }
    let rss = (&ds.y - &ds.x * &beta).norm_squared();
    let s2 = rss / (n - support.len()) as f64;
    EstimatorOutput::new(id, Some(s2), support, Some(&beta), ds).with_flags(flags)
}

/// `RSS(β̂_λ)/(n − ŝ_λ)` for the Lasso at a given λ.
pub fn rss_fixed_lambda(ds: &Dataset, lambda: f64) -> Result<EstimatorOutput> {
    let path = lasso_path(&ds.x, &ds.y, &[lambda])?;
    Ok(rss_estimate(EstimatorId::FixedLambda, ds, path.coef_dense(0), path.converged[0])
        .with_lambda(lambda))
}

fn lasso_cv(ds: &Dataset, k: usize, key: StreamKey) -> Result<CvCurve> {
    cv_lasso(&ds.x, &ds.y, k, key.derive(Purpose::CvFolds))
}

/// `rss_fixed_lambda` at the CV-selected λ, refit on the full data.
pub fn cv_l_from(ds: &Dataset, curve: &CvCurve) -> Result<EstimatorOutput> {
    Ok(rss_fixed_lambda(ds, curve.lambda_min)?.relabel(EstimatorId::CvL))
}

pub fn cv_l(ds: &Dataset, k: usize, key: StreamKey) -> Result<EstimatorOutput> {
    cv_l_from(ds, &lasso_cv(ds, k, key)?)
}

/// `min_λ (1/n) Σ_k Σ_{i∈D_k} (Yᵢ − Xᵢ′β̂^{(−k)}_λ)²`.
pub fn cvl_from(ds: &Dataset, curve: &CvCurve) -> EstimatorOutput {
    let s2 = curve.min_error() / ds.n() as f64;
    EstimatorOutput::new(EstimatorId::Cvl, Some(s2), Vec::new(), None, ds)
        .with_lambda(curve.lambda_min)
}

pub fn cvl(ds: &Dataset, k: usize, key: StreamKey) -> Result<EstimatorOutput> {
    Ok(cvl_from(ds, &lasso_cv(ds, k, key)?))
}

fn ls_refit(id: EstimatorId, ds: &Dataset, support: Vec<usize>) -> Result<EstimatorOutput> {
    match ls_on_support(&ds.x, &ds.y, &support) {
        Ok(fit) => {
            let mut beta = DVector::zeros(ds.p());
            for (c, &j) in support.iter().enumerate() {
                beta[j] = fit.coef[c];
            }
            let s2 = fit.rss() / fit.dof as f64;
            let flags = if fit.rank_deficient { Flags::RANK_DEFICIENT } else { Flags::empty() };
            Ok(EstimatorOutput::new(id, Some(s2), support, Some(&beta), ds).with_flags(flags))
        }
        Err(Error::SupportTooLarge { .. }) => {
            Ok(EstimatorOutput::new(id, None, support, None, ds).with_flags(Flags::SUPPORT_OVERFLOW))
        }
        Err(e) => Err(e),
    }
}

/// Naïve two-stage estimator: least squares on the support of the CV-Lasso fit.
pub fn cv_ls_from(ds: &Dataset, curve: &CvCurve) -> Result<EstimatorOutput> {
    let path = lasso_path(&ds.x, &ds.y, &[curve.lambda_min])?;
    let support = path.coefs[0].indices.clone();
    let mut out = ls_refit(EstimatorId::CvLs, ds, support)?.with_lambda(curve.lambda_min);
    if !path.converged[0] {
        out.flags |= Flags::NONCONVERGED;
    }
    Ok(out)
}

pub fn cv_ls(ds: &Dataset, k: usize, key: StreamKey) -> Result<EstimatorOutput> {
    cv_ls_from(ds, &lasso_cv(ds, k, key)?)
}

/// `RSS(β̂_SCAD)/(n − ŝ)` at the CV-selected λ. Folds are the same as the
/// Lasso CV run under the same key.
pub fn scad_estimator(ds: &Dataset, k: usize, key: StreamKey) -> Result<EstimatorOutput> {
    let folds = FoldAssignment::random(ds.n(), k, key.derive(Purpose::CvFolds))?;
    let curve = cv_curve(
        &ds.x,
        &ds.y,
        &folds,
        &standard_grid(&ds.x, &ds.y),
        PathKind::Scad { a: SCAD_A },
    )?;
    let path = scad_path(&ds.x, &ds.y, &[curve.lambda_min], SCAD_A)?;
    Ok(rss_estimate(EstimatorId::Scad, ds, path.coef_dense(0), path.converged[0])
        .with_lambda(curve.lambda_min))
}

struct HalfFit {
    support: Vec<usize>,
    beta: DVector<f64>,
    converged: bool,
}

fn cv_lasso_support(ds: &Dataset, rows: &[usize], k: usize, key: StreamKey) -> Result<HalfFit> {
    let x = select_rows(&ds.x, rows);
    let y = select_entries(&ds.y, rows);
    let curve = cv_lasso(&x, &y, k.min(rows.len()), key)?;
    let path = lasso_path(&x, &y, &[curve.lambda_min])?;
    Ok(HalfFit {
        support: path.coefs[0].indices.clone(),
        beta: path.coef_dense(0),
        converged: path.converged[0],
    })
}

/// Least-squares variance on `rows` using the columns in `support`.
fn half_variance(ds: &Dataset, rows: &[usize], support: &[usize]) -> Result<Option<(f64, bool)>> {
    let x = select_rows(&ds.x, rows);
    let y = select_entries(&ds.y, rows);
    match ls_on_support(&x, &y, support) {
        Ok(fit) => Ok(Some((fit.rss() / fit.dof as f64, fit.rank_deficient))),
        Err(Error::SupportTooLarge { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Refitted cross-validation: the support chosen by CV-Lasso on one half is
/// refit by least squares on the other, in both directions, and averaged.
pub fn rcv(ds: &Dataset, k: usize, key: StreamKey) -> Result<EstimatorOutput> {
    let (first, second) = split_half(ds.n(), key.derive(Purpose::RcvSplit))?;
    let fit1 = cv_lasso_support(ds, &first, k, key.derive(Purpose::RcvHalf(0)))?;
    let fit2 = cv_lasso_support(ds, &second, k, key.derive(Purpose::RcvHalf(1)))?;
    let s1 = half_variance(ds, &second, &fit1.support)?;
    let s2 = half_variance(ds, &first, &fit2.support)?;

    let mut flags = Flags::empty();
    if !(fit1.converged && fit2.converged) {
        flags |= Flags::NONCONVERGED;
    }
    let values: Vec<(f64, bool)> = [s1, s2].into_iter().flatten().collect();
    if values.len() < 2 {
        flags |= Flags::SUPPORT_OVERFLOW;
    }
    if values.iter().any(|(_, rd)| *rd) {
        flags |= Flags::RANK_DEFICIENT;
    }
    let sigma2 = if values.is_empty() {
        None
    } else {
        Some(values.iter().map(|(v, _)| v).sum::<f64>() / values.len() as f64)
    };

    let mut union: Vec<usize> = fit1.support.iter().chain(&fit2.support).copied().collect();
    union.sort_unstable();
    union.dedup();
    let halves = [
        Diagnostics::compute(&fit1.support, Some(&fit1.beta), &ds.beta_true),
        Diagnostics::compute(&fit2.support, Some(&fit2.beta), &ds.beta_true),
    ];
    let mut out = EstimatorOutput::new(EstimatorId::Rcv, sigma2, union, None, ds).with_flags(flags);
    out.halves = Some(halves);
    Ok(out)
}

/// Scaled-Lasso variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SzVariant {
    Sz,
    SzLs,
    Sz2,
    Sz2Ls,
}

impl SzVariant {
    pub fn id(self) -> EstimatorId {
        match self {
            SzVariant::Sz => EstimatorId::Sz,
            SzVariant::SzLs => EstimatorId::SzLs,
            SzVariant::Sz2 => EstimatorId::Sz2,
            SzVariant::Sz2Ls => EstimatorId::Sz2Ls,
        }
    }

    fn refit(self) -> bool {
        matches!(self, SzVariant::SzLs | SzVariant::Sz2Ls)
    }

    /// `√(2 log(p)/n)` for SZ, the quantile-based level for SZ2.
    pub fn lambda0(self, n: usize, p: usize) -> Result<f64> {
        match self {
            SzVariant::Sz | SzVariant::SzLs => Ok(universal_lambda0(n, p)),
            SzVariant::Sz2 | SzVariant::Sz2Ls => sz2_lambda0(n, p),
        }
    }
}

/// Output for a scaled-Lasso variant given the (shared) fit.
pub fn sz_from_fit(
    ds: &Dataset,
    variant: SzVariant,
    fit: &Result<ScaledLassoFit>,
) -> Result<EstimatorOutput> {
    let id = variant.id();
    let fit = match fit {
        Ok(f) => f,
        Err(Error::DegenerateFit(_)) => {
            return Ok(EstimatorOutput::new(id, None, Vec::new(), None, ds)
                .with_flags(Flags::NONCONVERGED));
        }
        Err(e) => return Err(Error::InvalidArgument(e.to_string())),
    };
    let nonconv = if fit.converged { Flags::empty() } else { Flags::NONCONVERGED };
    let out = if variant.refit() {
        ls_refit(id, ds, fit.support())?
    } else {
        EstimatorOutput::new(id, Some(fit.sigma_hat * fit.sigma_hat), fit.support(), Some(&fit.beta_hat), ds)
    };
    Ok(out.with_flags(nonconv).with_lambda(fit.lambda0))
}

pub fn sz_family(ds: &Dataset, variant: SzVariant) -> Result<EstimatorOutput> {
    let lambda0 = variant.lambda0(ds.n(), ds.p())?;
    let fit = scaled_lasso(&ds.x, &ds.y, lambda0);
    sz_from_fit(ds, variant, &fit)
}

/// Method of moments under `Σ = I`:
/// `((p+n+1)/(n(n+1)))‖y‖² − (1/(n(n+1)))‖X′y‖²`.
pub fn dicker1(ds: &Dataset) -> EstimatorOutput {
    let n = ds.n() as f64;
    let p = ds.p() as f64;
    let yy = ds.y.norm_squared();
    let xty = (ds.x.transpose() * &ds.y).norm_squared();
    let s2 = (p + n + 1.0) / (n * (n + 1.0)) * yy - xty / (n * (n + 1.0));
    EstimatorOutput::new(EstimatorId::D1, Some(s2), Vec::new(), None, ds)
}

/// `(m̂₁, m̂₂)` from the n×n Gram matrix: `tr(X′X/n) = ‖X‖_F²/n` and
/// `tr((X′X/n)²) = ‖XX′‖_F²/n²`.
pub fn moment_traces(x: &nalgebra::DMatrix<f64>) -> (f64, f64) {
    let n = x.nrows() as f64;
    let p = x.ncols() as f64;
    let tr1 = x.norm_squared() / n;
    let gram = x * x.transpose();
    let tr2 = gram.norm_squared() / (n * n);
    let m1 = tr1 / p;
    let m2 = tr2 / p - tr1 * tr1 / (p * n);
    (m1, m2)
}

/// Method of moments for general Σ:
/// `[1 + p m̂₁²/((n+1)m̂₂)]‖y‖²/n − m̂₁/(n(n+1)m̂₂)‖X′y‖²`.
pub fn dicker2(ds: &Dataset) -> Result<EstimatorOutput> {
    let n = ds.n() as f64;
    let p = ds.p() as f64;
    let (m1, m2) = moment_traces(&ds.x);
    if !(m2 > 0.0) {
        return Err(Error::DegenerateMoment(m2));
    }
    let yy = ds.y.norm_squared();
    let xty = (ds.x.transpose() * &ds.y).norm_squared();
    let s2 = (1.0 + p * m1 * m1 / ((n + 1.0) * m2)) * yy / n - m1 / (n * (n + 1.0) * m2) * xty;
    Ok(EstimatorOutput::new(EstimatorId::D2, Some(s2), Vec::new(), None, ds))
}

/// Run every estimator in [`EstimatorId::SIMULATED`] on one dataset, sharing
/// the CV run and the scaled-Lasso fits between the estimators built on
/// them. Results come back in `SIMULATED` order.
pub fn run_catalogue(ds: &Dataset, k: usize, key: StreamKey) -> Vec<(EstimatorId, Result<EstimatorOutput>)> {
    let curve = lasso_cv(ds, k, key);
    let n = ds.n();
    let p = ds.p();
    let sz_fit = universal_lambda0(n, p);
    let sz_fit = scaled_lasso(&ds.x, &ds.y, sz_fit);
    let sz2_fit = sz2_lambda0(n, p).and_then(|l0| scaled_lasso(&ds.x, &ds.y, l0));

    let from_curve = |f: &dyn Fn(&CvCurve) -> Result<EstimatorOutput>| match &curve {
        Ok(c) => f(c),
        Err(e) => Err(Error::InvalidArgument(format!("cross-validation failed: {e}"))),
    };

    EstimatorId::SIMULATED
        .iter()
        .map(|&id| {
            let out = match id {
                EstimatorId::Oracle => Ok(oracle(ds)),
                EstimatorId::CvL => from_curve(&|c| cv_l_from(ds, c)),
                EstimatorId::Cvl => from_curve(&|c| Ok(cvl_from(ds, c))),
                EstimatorId::CvLs => from_curve(&|c| cv_ls_from(ds, c)),
                EstimatorId::Scad => scad_estimator(ds, k, key),
                EstimatorId::Rcv => rcv(ds, k, key),
                EstimatorId::Sz => sz_from_fit(ds, SzVariant::Sz, &sz_fit),
                EstimatorId::SzLs => sz_from_fit(ds, SzVariant::SzLs, &sz_fit),
                EstimatorId::Sz2 => sz_from_fit(ds, SzVariant::Sz2, &sz2_fit),
                EstimatorId::Sz2Ls => sz_from_fit(ds, SzVariant::Sz2Ls, &sz2_fit),
                EstimatorId::D1 => Ok(dicker1(ds)),
                EstimatorId::D2 => dicker2(ds),
                EstimatorId::FixedLambda => unreachable!("not part of the simulation catalogue"),
            };
            (id, out)
        })
        .collect()
}
