//! Orthogonal design `X = I_n`, where the Lasso fit is entrywise soft
//! thresholding and every quantity of interest has a closed form in Φ and φ.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::data_gen::{support_size, NO_SIGNAL};
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};
use crate::solvers::soft_threshold;

fn std_normal() -> Normal {
    Normal::standard()
}

/// `Y ~ N(μ, σ² I_n)` with the first `⌈n^α⌉` means equal to β, the rest 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoModel {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl OrthoModel {
    pub fn new(n: usize, alpha: f64, beta: f64, sigma: f64) -> Result<Self> {
        let m = Self { n, alpha, beta, sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if !(self.alpha == NO_SIGNAL || (self.alpha >= 0.0 && self.alpha < 1.0)) {
            return Err(Error::InvalidConfig(format!("alpha = {} outside [0, 1)", self.alpha)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig("sigma must be positive and beta finite".into()));
        }
        Ok(())
    }

    /// `⌈n^α⌉`.
    pub fn signal_count(&self) -> usize {
        support_size(self.n, self.alpha).min(self.n)
    }

    /// Mixture weight `n^α/n` on the signal risk.
    pub fn signal_weight(&self) -> f64 {
        if self.alpha == NO_SIGNAL {
            0.0
        } else {
            (self.n as f64).powf(self.alpha - 1.0)
        }
    }

    pub fn means(&self) -> DVector<f64> {
        let s = self.signal_count();
        DVector::from_fn(self.n, |i, _| if i < s { self.beta } else { 0.0 })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let s = self.signal_count();
        DVector::from_fn(self.n, |i, _| {
            let mu = if i < s { self.beta } else { 0.0 };
            mu + self.sigma * rng.sample::<f64, _>(StandardNormal)
        })
    }
}

/// Upper partial moments `(E[(Z − x)₊], E[(Z − x)₊²])` of a standard normal.
///
/// For large `x` both are evaluated through the continued fraction of the
/// Mills ratio, written so that no leading terms cancel.
fn partial_moments(x: f64) -> (f64, f64) {
    let nd = std_normal();
    let phi = nd.pdf(x);
    if x <= 3.0 {
        let sf = nd.sf(x);
        return (phi - x * sf, (1.0 + x * x) * sf - x * phi);
    }
    // d = 2/(x + 3/(x + 4/(x + ...)))
    let mut d = 0.0;
    for k in (2..=300).rev() {
        d = k as f64 / (x + d);
    }
    let c = 1.0 / (x + d);
    (phi * c / (x + c), phi * (d / (x + d)) / (x + c))
}

/// `E[(S(Y, λ) − β)²]` for `Y ~ N(β, σ²)`.
///
/// Equal to `σ² + λ² + (β²−λ²−σ²)[Φ((λ−β)/σ) − Φ((−λ−β)/σ)] − σ(λ−β)φ((λ+β)/σ) − σ(λ+β)φ((λ−β)/σ)`,
/// regrouped as `β² + σ²[h₂(a) + h₂(b)] − 2βσ[h₁(a) − h₁(b)]` with
/// `a = (λ−β)/σ`, `b = (λ+β)/σ` and `h_k` the upper partial moments.
pub fn soft_threshold_risk(lambda: f64, beta: f64, sigma: f64) -> f64 {
    if lambda.is_infinite() {
        return beta * beta;
    }
    let a = (lambda - beta) / sigma;
    let b = (lambda + beta) / sigma;
    let (h1a, h2a) = partial_moments(a);
    let (h1b, h2b) = partial_moments(b);
    beta * beta + sigma * sigma * (h2a + h2b) - 2.0 * beta * sigma * (h1a - h1b)
}

/// The printed-form expression, kept for cross-checking the regrouped one.
pub fn soft_threshold_risk_direct(lambda: f64, beta: f64, sigma: f64) -> f64 {
    let nd = std_normal();
    let a = (lambda - beta) / sigma;
    let b = (-lambda - beta) / sigma;
    let s2 = sigma * sigma;
    s2 + lambda * lambda + (beta * beta - lambda * lambda - s2) * (nd.cdf(a) - nd.cdf(b))
        - sigma * (lambda - beta) * nd.pdf((lambda + beta) / sigma)
        - sigma * (lambda + beta) * nd.pdf((lambda - beta) / sigma)
}

/// `P(|Y| > λ)` for `Y ~ N(β, σ²)`.
pub fn exceedance_probability(lambda: f64, beta: f64, sigma: f64) -> f64 {
    let nd = std_normal();
    nd.sf((lambda - beta) / sigma) + nd.sf((lambda + beta) / sigma)
}

/// Risk curves on a λ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub lambdas: Vec<f64>,
    pub r_beta: Vec<f64>,
    pub r_zero: Vec<f64>,
    /// `(n^α/n)·r_beta + ((n − n^α)/n)·r_zero`.
    pub r_n: Vec<f64>,
    pub n: usize,
    pub sigma: f64,
}

impl RiskCurve {
    /// Expected CV loss `nσ² + n·R_n` over `n` held-out summands.
    pub fn ecv(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.r_n.iter().map(|r| n * self.sigma * self.sigma + n * r).collect()
    }
}

/// `R_n(λ)` at one point.
pub fn mixture_risk(model: &OrthoModel, lambda: f64) -> f64 {
    let w = model.signal_weight();
    let r0 = soft_threshold_risk(lambda, 0.0, model.sigma);
    if w == 0.0 {
        return r0;
    }
    w * soft_threshold_risk(lambda, model.beta, model.sigma) + (1.0 - w) * r0
}

pub fn ecv_surface(model: &OrthoModel, lambdas: &[f64]) -> RiskCurve {
    let w = model.signal_weight();
    let r_beta: Vec<f64> =
        lambdas.iter().map(|&l| soft_threshold_risk(l, model.beta, model.sigma)).collect();
    let r_zero: Vec<f64> =
        lambdas.iter().map(|&l| soft_threshold_risk(l, 0.0, model.sigma)).collect();
    let r_n = r_beta.iter().zip(&r_zero).map(|(b, z)| w * b + (1.0 - w) * z).collect();
    RiskCurve { lambdas: lambdas.to_vec(), r_beta, r_zero, r_n, n: model.n, sigma: model.sigma }
}

/// `len` log-spaced points on `[lo, hi]`, ascending.
pub fn log_grid(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..len)
        .map(|i| if len == 1 { lo } else { (a + (b - a) * i as f64 / (len - 1) as f64).exp() })
        .collect()
}

pub const CE_GRID_LEN: usize = 400;

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol * (a.abs() + b.abs()).max(1e-300) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd { c } else { d }
}

/// Certainty-equivalent `λ̂_n = argmin_λ R_n(λ)`.
///
/// Searched on a log grid over `[1e-3σ, 50σ]` and refined by golden section
/// around the best grid point. Returns `f64::INFINITY` when the infimum is
/// the `λ → ∞` limit `(n^α/n)β²`, which includes every β = 0 model.
pub fn ce_lambda(model: &OrthoModel) -> f64 {
    ce_lambda_on(model, CE_GRID_LEN)
}

pub fn ce_lambda_on(model: &OrthoModel, grid_len: usize) -> f64 {
    let w = model.signal_weight();
    if model.beta == 0.0 || w == 0.0 {
        return f64::INFINITY;
    }
    let grid = log_grid(1e-3 * model.sigma, 50.0 * model.sigma, grid_len.max(3));
    let vals: Vec<f64> = grid.iter().map(|&l| mixture_risk(model, l)).collect();
    let best = (0..grid.len()).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
    if best == grid.len() - 1 {
        return f64::INFINITY;
    }
    let lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let lambda = golden_section(|l| mixture_risk(model, l), lo, grid[best + 1], 1e-12);
    let limit = w * model.beta * model.beta;
    if limit <= mixture_risk(model, lambda) {
        f64::INFINITY
    } else {
        lambda
    }
}

/// `Σ min(Yᵢ², λ²) / Σ 1{|Yᵢ| ≤ λ}`.
pub fn ortho_sigma2(y: &DVector<f64>, lambda: f64) -> Result<f64> {
    let l2 = lambda * lambda;
    let (num, den) = y.iter().fold((0.0, 0usize), |(s, c), &v| {
        (s + (v * v).min(l2), c + usize::from(v.abs() <= lambda))
    });
    if den == 0 {
        return Err(Error::NoThresholdedObservations(lambda));
    }
    Ok(num / den as f64)
}

/// `(1/n) Σ min(Yᵢ², λ²)`.
pub fn ortho_sigma2_tilde(y: &DVector<f64>, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    y.iter().map(|v| (v * v).min(l2)).sum::<f64>() / y.len() as f64
}

/// `(1/n) Σ 1{|Yᵢ| > λ}`.
pub fn exceedance_fraction(y: &DVector<f64>, lambda: f64) -> f64 {
    y.iter().filter(|v| v.abs() > lambda).count() as f64 / y.len() as f64
}

/// Held-out loss `Σ (Zᵢ − S(Yᵢ, λ))²`.
pub fn ortho_cv_loss(y: &DVector<f64>, z: &DVector<f64>, lambda: f64) -> f64 {
    y.iter().zip(z.iter()).map(|(&a, &b)| (b - soft_threshold(a, lambda)).powi(2)).sum()
}

/// Grid argmin of [`ortho_cv_loss`]; ties go to the larger λ.
pub fn cv_lambda_ortho(y: &DVector<f64>, z: &DVector<f64>, lambdas: &[f64]) -> Result<f64> {
    if y.len() != z.len() || lambdas.is_empty() {
        return Err(Error::InvalidArgument("Y and Z must match and the grid be non-empty".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for &l in lambdas {
        let loss = ortho_cv_loss(y, z, l);
        best = match best {
            Some((bl, bv)) if loss > bv || (loss == bv && l <= bl) => Some((bl, bv)),
            _ => Some((l, loss)),
        };
    }
    Ok(best.expect("non-empty grid").0)
}

/// The data-driven grid used for λ̃: 100 log-spaced points from `max|Yᵢ|`
/// down to `1e-3·max|Yᵢ|`, the same shape as the Lasso grid at `X = I`.
pub fn ortho_cv_grid(y: &DVector<f64>) -> Vec<f64> {
    let lmax = y.amax();
    let mut g = log_grid(1e-3 * lmax, lmax, 100);
    g.reverse();
    g
}

/// `∫_a^b x^j φ(x) dx` by the recursion `m_j = (j−1)m_{j−2} − [x^{j−1}φ(x)]_a^b`.
pub fn truncated_moment(j: u32, a: f64, b: f64) -> f64 {
    let nd = std_normal();
    let (pa, pb) = (nd.pdf(a), nd.pdf(b));
    let (mut m0, mut m1) = (nd.cdf(b) - nd.cdf(a), pa - pb);
    if j == 0 {
        return m0;
    }
    let edge = |x: f64, px: f64, k: u32| if px == 0.0 { 0.0 } else { x.powi(k as i32) * px };
    for k in 2..=j {
        let next = (k - 1) as f64 * m0 - (edge(b, pb, k - 1) - edge(a, pa, k - 1));
        m0 = m1;
        m1 = next;
    }
    m1
}

/// `m_j(λ, β)` with limits `((−λ−β)/σ, (λ−β)/σ)`.
pub fn ortho_moment(j: u32, lambda: f64, beta: f64, sigma: f64) -> f64 {
    truncated_moment(j, (-lambda - beta) / sigma, (lambda - beta) / sigma)
}

/// `m_j(λ, β)` by double-exponential quadrature.
pub fn ortho_moment_quadrature(j: u32, lambda: f64, beta: f64, sigma: f64) -> f64 {
    let nd = std_normal();
    let a = ((-lambda - beta) / sigma).max(-40.0);
    let b = ((lambda - beta) / sigma).min(40.0);
    if b <= a {
        return 0.0;
    }
    quadrature::integrate(|x| x.powi(j as i32) * nd.pdf(x), a, b, 1e-14).integral
}

/// `E[min(Y², λ²)]` for `Y ~ N(β, σ²)` by quadrature, split at the kinks `±λ`.
pub fn expected_clipped_square(lambda: f64, beta: f64, sigma: f64) -> f64 {
    let nd = std_normal();
    let l2 = lambda * lambda;
    let f = |x: f64| ((beta + sigma * x).powi(2)).min(l2) * nd.pdf(x);
    let lo = -40.0 - beta.abs() / sigma;
    let hi = 40.0 + beta.abs() / sigma;
    let mut knots = vec![lo, (-lambda - beta) / sigma, (lambda - beta) / sigma, hi];
    knots.retain(|k| k.is_finite());
    knots.sort_by(|a, b| a.total_cmp(b));
    knots
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| quadrature::integrate(f, w[0], w[1], 1e-14).integral)
        .sum()
}

/// Both sides of `E[min(Y², λ²)] − σ² = r_S(λ, β) − 2σ² P(|Y| > λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SureGap {
    pub lhs: f64,
    pub rhs: f64,
}

impl SureGap {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

pub fn sure_gap(lambda: f64, beta: f64, sigma: f64) -> SureGap {
    let s2 = sigma * sigma;
    SureGap {
        lhs: expected_clipped_square(lambda, beta, sigma) - s2,
        rhs: soft_threshold_risk(lambda, beta, sigma)
            - 2.0 * s2 * exceedance_probability(lambda, beta, sigma),
    }
}

/// One sample size of the large-sample check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaRow {
    pub n: usize,
    pub lambda_n: f64,
    /// Mean over replications of `(1/n)Σ1{|Yᵢ| > λ_n}`.
    pub exceed_frac: f64,
    pub mean_tilde: f64,
    pub var_tilde: f64,
    pub mean_hat: f64,
    /// Empirical variance of `√n(σ̂² − σ²)`.
    pub var_scaled: f64,
    /// `2σ⁴`.
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub n: usize,
    pub lambda_n: f64,
    pub j: u32,
    pub closed_form: f64,
    pub quadrature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
    pub moments: Vec<MomentRow>,
}

/// `σ√(2 log n)`.
pub fn universal_threshold(n: usize, sigma: f64) -> f64 {
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    } else {
        f64::NAN
    };
    (m, var)
}

/// Monte-Carlo check of the deterministic-λ_n results along `n_grid`.
///
/// `lambda_n(n, σ)` supplies the sequence. Replication `b` at size `n` draws
/// from `StreamKey::new(seed, b)` so runs are reproducible in any thread count.
pub fn verify_lemmas(
    alpha: f64,
    beta: f64,
    sigma: f64,
    n_grid: &[usize],
    reps: usize,
    lambda_n: impl Fn(usize, f64) -> f64 + Sync,
    seed: u64,
) -> Result<LemmaReport> {
    if reps < 2 {
        return Err(Error::InvalidArgument("at least two replications are needed".into()));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    let mut moments = Vec::new();
    for &n in n_grid {
        let model = OrthoModel::new(n, alpha, beta, sigma)?;
        let lam = lambda_n(n, sigma);
        let draws: Vec<Result<(f64, f64, f64)>> = (0..reps as u64)
            .into_par_iter()
            .map(|b| {
                let key = StreamKey::new(seed, b).derive(Purpose::Lemma).derive_index(n as u64);
                let y = model.sample(&mut key.rng());
                Ok((exceedance_fraction(&y, lam), ortho_sigma2_tilde(&y, lam), ortho_sigma2(&y, lam)?))
            })
            .collect();
        let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
        let exceed: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let tilde: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let hat: Vec<f64> = draws.iter().map(|d| d.2).collect();
        let scaled: Vec<f64> =
            hat.iter().map(|h| (n as f64).sqrt() * (h - sigma * sigma)).collect();
        let (mean_tilde, var_tilde) = mean_var(&tilde);
        rows.push(LemmaRow {
            n,
            lambda_n: lam,
            exceed_frac: mean_var(&exceed).0,
            mean_tilde,
            var_tilde,
            mean_hat: mean_var(&hat).0,
            var_scaled: mean_var(&scaled).1,
            target: 2.0 * sigma.powi(4),
        });
        for j in 0..=4 {
            moments.push(MomentRow {
                n,
                lambda_n: lam,
                j,
                closed_form: ortho_moment(j, lam, beta, sigma),
                quadrature: ortho_moment_quadrature(j, lam, beta, sigma),
            });
        }
    }
    Ok(LemmaReport { rows, moments })
}

/// Means of the CV and CE variance estimators over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoComparison {
    pub model: OrthoModel,
    pub ce_lambda: f64,
    /// `σ̂²_{n,λ̃}` with λ̃ from a held-out copy.
    pub mean_cv: f64,
    /// `σ̂²_{n,λ̂_n}`.
    pub mean_ce: f64,
    /// `σ̃²_{n,λ̂_n}`.
    pub mean_ce_tilde: f64,
    /// λ̃ per replication, in replication order.
    pub cv_lambdas: Vec<f64>,
    /// Replications whose λ̃ left no observation below the threshold.
    pub invalid: usize,
}

/// Replication `b` draws `Y` and `Z` from `StreamKey::new(seed, b)`, so all
/// models that share a seed see the same standard-normal noise.
pub fn compare_ce_cv(model: &OrthoModel, reps: usize, seed: u64) -> Result<OrthoComparison> {
    model.validate()?;
    let ce = ce_lambda(model);
    let per_rep: Vec<Result<(f64, Option<f64>, f64, f64)>> = (0..reps as u64)
        .into_par_iter()
        .map(|b| {
            let key = StreamKey::new(seed, b);
            let y = model.sample(&mut key.derive(Purpose::OrthoSignal).rng());
            let z = model.sample(&mut key.derive(Purpose::OrthoHoldout).rng());
            let lt = cv_lambda_ortho(&y, &z, &ortho_cv_grid(&y))?;
            let cv = ortho_sigma2(&y, lt).ok();
            Ok((lt, cv, ortho_sigma2(&y, ce)?, ortho_sigma2_tilde(&y, ce)))
        })
        .collect();
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    let cv: Vec<f64> = per_rep.iter().filter_map(|r| r.1).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(OrthoComparison {
        model: *model,
        ce_lambda: ce,
        mean_cv: if cv.is_empty() { f64::NAN } else { mean(&cv) },
        mean_ce: mean(&per_rep.iter().map(|r| r.2).collect::<Vec<_>>()),
        mean_ce_tilde: mean(&per_rep.iter().map(|r| r.3).collect::<Vec<_>>()),
        cv_lambdas: per_rep.iter().map(|r| r.0).collect(),
        invalid: reps - cv.len(),
    })
}
