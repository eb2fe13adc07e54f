//! Synthetic datasets for the simulation study.
//!
//! Designs have equicorrelated standard normal columns,
//! `Σ = (1 − ρ)I + ρ11′`, generated through a shared factor
//! `X = √(1−ρ)·Z + √ρ·g1′` so that Σ is never materialised. Coefficient
//! vectors carry `⌈n^α⌉` Laplace(1) entries at random positions, rescaled to
//! hit a target `β′Σβ/σ²`.
//!
//! The correlation structure (exchangeable rather than AR(1)) is an
//! assumption: only a scalar ρ is ever reported, and a single Σ enters the
//! signal-to-noise definition.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};

/// Sparsity exponent that forces `β* = 0`.
pub const NO_SIGNAL: f64 = f64::NEG_INFINITY;

/// Full parameterisation of one simulation cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub alpha: f64,
    pub snr: f64,
    pub sigma: f64,
    pub num_reps: usize,
    pub seed: u64,
    pub folds: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 100,
            rho: 0.0,
            alpha: NO_SIGNAL,
            snr: 1.0,
            sigma: 1.0,
            num_reps: 100,
            seed: 1,
            folds: 10,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.p == 0 {
            return bad(format!("n and p must be positive (n={}, p={})", self.n, self.p));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidCorrelation(self.rho));
        }
        if !(self.alpha == NO_SIGNAL || (0.0..=1.0).contains(&self.alpha)) {
            return bad(format!("alpha {} must lie in [0, 1] or be -inf", self.alpha));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return bad(format!("snr {} must be positive", self.snr));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be positive", self.sigma));
        }
        if self.num_reps == 0 {
            return bad("num_reps must be positive".into());
        }
        if self.folds < 2 || self.folds > self.n {
            return bad(format!("folds {} must lie in [2, n={}]", self.folds, self.n));
        }
        Ok(())
    }

    /// Number of nonzero coefficients, `⌈n^α⌉` capped at `p`.
    pub fn support_size(&self) -> usize {
        support_size(self.n, self.alpha).min(self.p)
    }
}

/// `⌈n^α⌉`, with 0 for the no-signal sentinel.
///
/// `powf` can land a hair above an exact integer (`100^0.5`), so values within
/// 1e-9 of an integer are snapped before taking the ceiling.
pub fn support_size(n: usize, alpha: f64) -> usize {
    if alpha == NO_SIGNAL {
        return 0;
    }
    let v = (n as f64).powf(alpha);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// The equicorrelation covariance `(1 − ρ)I + ρ11′`, kept implicit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equicorrelation {
    pub rho: f64,
    pub p: usize,
}

impl Equicorrelation {
    /// `β′Σβ = (1 − ρ)‖β‖² + ρ(Σβⱼ)²`.
    pub fn quad_form(&self, beta: &DVector<f64>) -> f64 {
        let sq = beta.norm_squared();
        let sum = beta.sum();
        (1.0 - self.rho) * sq + self.rho * sum * sum
    }
}

/// One generated instance of the linear model.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta_true: DVector<f64>,
    pub sigma_true: f64,
    pub covariance: Equicorrelation,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Indices of the nonzero entries of `β*`.
    pub fn true_support(&self) -> Vec<usize> {
        support_of(&self.beta_true)
    }

    pub fn snr(&self) -> f64 {
        self.covariance.quad_form(&self.beta_true) / (self.sigma_true * self.sigma_true)
    }
}

pub(crate) fn support_of(v: &DVector<f64>) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Equicorrelated Gaussian design, filled column by column.
pub fn generate_design(cfg: &SimulationConfig, key: StreamKey) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&cfg.rho) {
        return Err(Error::InvalidCorrelation(cfg.rho));
    }
    let (n, p) = (cfg.n, cfg.p);
    let mut rng = key.rng();
    let shared: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let a = (1.0 - cfg.rho).sqrt();
    let b = cfg.rho.sqrt();
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..p {
        for g in &shared {
            let z: f64 = rng.sample(StandardNormal);
            data.push(a * z + b * g);
        }
    }
    Ok(DMatrix::from_vec(n, p, data))
}

/// Laplace(0, 1) by inverse CDF of one uniform draw.
fn laplace<R: Rng>(rng: &mut R) -> f64 {
    // u in (-1/2, 1/2); exclude the endpoint that maps to infinity
    let mut u: f64 = rng.random::<f64>() - 0.5;
    while u == -0.5 {
        u = rng.random::<f64>() - 0.5;
    }
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Sparse Laplace coefficients scaled so that `β′Σβ = snr·σ²`.
pub fn generate_beta(cfg: &SimulationConfig, key: StreamKey) -> DVector<f64> {
    let mut beta = DVector::zeros(cfg.p);
    let s = cfg.support_size();
    if s == 0 {
        return beta;
    }
    let mut rng = key.rng();
    let idx = rand::seq::index::sample(&mut rng, cfg.p, s);
    for j in idx.iter() {
        let mut v = 0.0;
        while v == 0.0 {
            v = laplace(&mut rng);
        }
        beta[j] = v;
    }
    let q = Equicorrelation { rho: cfg.rho, p: cfg.p }.quad_form(&beta);
    let c = (cfg.snr * cfg.sigma * cfg.sigma / q).sqrt();
    beta *= c;
    beta
}

/// Design, coefficients and response `Y = Xβ* + ε` for one replication.
pub fn generate_dataset(cfg: &SimulationConfig, rep_index: u64) -> Result<Dataset> {
    cfg.validate()?;
    let key = StreamKey::new(cfg.seed, rep_index);
    let x = generate_design(cfg, key.derive(Purpose::Design))?;
    let beta_true = generate_beta(cfg, key.derive(Purpose::Beta));
    let mut rng = key.derive(Purpose::Noise).rng();
    let mut y = &x * &beta_true;
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += cfg.sigma * e;
    }
    Ok(Dataset {
        x,
        y,
        beta_true,
        sigma_true: cfg.sigma,
        covariance: Equicorrelation { rho: cfg.rho, p: cfg.p },
    })
}
