//! Scaled Lasso: joint minimisation over `(β, σ)` of
//! `‖Y − Xβ‖²/(2nσ) + σ/2 + λ₀‖β‖₁`.
//!
//! For fixed σ the β-problem is the Lasso `½‖Y − Xβ‖² + nσλ₀‖β‖₁`, so the
//! inner call uses `λ = n·σ̂·λ₀` in this crate's unnormalised convention.
//! The penalty term is taken exactly as written in the criterion above, with
//! no extra 1/n.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::cd::{CoordinateDescent, Penalty, SolverOptions};
use crate::error::{Error, Result};

pub const MAX_OUTER_ITERS: usize = 100;
pub const SIGMA_TOL: f64 = 1e-8;
const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLassoFit {
    pub sigma_hat: f64,
    pub beta_hat: DVector<f64>,
    pub lambda0: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ScaledLassoFit {
    pub fn support(&self) -> Vec<usize> {
        crate::data_gen::support_of(&self.beta_hat)
    }
}

/// The scaled-Lasso criterion at `(β, σ)`.
pub fn scaled_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    sigma: f64,
    lambda0: f64,
) -> f64 {
    let n = x.nrows() as f64;
    (y - x * beta).norm_squared() / (2.0 * n * sigma) + sigma / 2.0 + lambda0 * beta.lp_norm(1)
}

/// Alternating updates `σ̂ ← ‖Y − Xβ̂‖/√n`, `λ ← σ̂λ₀`, `β̂ ← β̂_λ` until σ̂
/// moves by less than 1e-8.
pub fn scaled_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda0: f64) -> Result<ScaledLassoFit> {
    scaled_lasso_from(x, y, lambda0, None)
}

/// As [`scaled_lasso`], starting the alternation from `start` instead of zero.
pub fn scaled_lasso_from(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda0: f64,
    start: Option<&DVector<f64>>,
) -> Result<ScaledLassoFit> {
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda0 = {lambda0} must be positive")));
    }
    let n = x.nrows();
    let root_n = (n as f64).sqrt();
    let opts = SolverOptions::default();
    let mut cd = CoordinateDescent::new(x, y, Penalty::Lasso);
    if let Some(b) = start {
        cd.set_beta(b.as_slice());
    }
    let mut sigma = cd.rss().sqrt() / root_n;
    if sigma < SIGMA_FLOOR {
        return Err(Error::DegenerateFit(SIGMA_FLOOR));
    }
    let mut converged = false;
    let mut iterations = 0;
    let mut inner_ok = true;
    while iterations < MAX_OUTER_ITERS {
        iterations += 1;
        let status = cd.solve(n as f64 * sigma * lambda0, &opts);
        inner_ok &= status.converged;
        let next = cd.rss().sqrt() / root_n;
        if next < SIGMA_FLOOR {
            return Err(Error::DegenerateFit(SIGMA_FLOOR));
        }
        let delta = (next - sigma).abs();
        sigma = next;
        if delta < SIGMA_TOL {
            converged = true;
            break;
        }
    }
    Ok(ScaledLassoFit {
        sigma_hat: sigma,
        beta_hat: DVector::from_column_slice(cd.beta()),
        lambda0,
        iterations,
        converged: converged && inner_ok,
    })
}

/// `L_n(t) = Φ⁻¹(1 − t)/√n`.
pub fn quantile_level(n: f64, t: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - t) / n.sqrt()
}

/// Fixed-point residual `k − L₁⁴(k/p) − 2L₁²(k/p)`.
pub fn sz2_residual(k: f64, p: usize) -> f64 {
    let l = quantile_level(1.0, k / p as f64);
    let l2 = l * l;
    k - l2 * l2 - 2.0 * l2
}

/// Root `k` of `k = L₁⁴(k/p) + 2L₁²(k/p)`.
pub fn sz2_k(p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("p = {p} must be at least 2")));
    }
    let (lo, hi) = (1e-6, p as f64 / 2.0);
    // direct fixed-point iteration first
    let mut k = 1.0f64;
    for _ in 0..200 {
        let l = quantile_level(1.0, k / p as f64);
        let next = l.powi(4) + 2.0 * l * l;
        if !next.is_finite() || next <= lo || next >= hi {
            break;
        }
        if (next - k).abs() < 1e-12 {
            return Ok(next);
        }
        k = next;
    }
    // bisection on the increasing residual over (lo, hi)
    let (mut a, mut b) = (lo, hi);
    if !(sz2_residual(a, p) < 0.0 && sz2_residual(b, p) > 0.0) {
        return Err(Error::QuantileBracket(p));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if sz2_residual(m, p) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-13 * b.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// `λ₀ = √2·L_n(k/p)` with `k` from [`sz2_k`].
pub fn sz2_lambda0(n: usize, p: usize) -> Result<f64> {
    let k = sz2_k(p)?;
    let lambda0 = std::f64::consts::SQRT_2 * quantile_level(n as f64, k / p as f64);
    if lambda0 > 0.0 {
        Ok(lambda0)
    } else {
        Err(Error::QuantileBracket(p))
    }
}

/// `√(2·log(p)/n)`.
pub fn universal_lambda0(n: usize, p: usize) -> f64 {
    (2.0 * (p as f64).ln() / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::path::lambda_max;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn problem(n: usize, p: usize, seed: u64, signal: f64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        y += x.column(0) * signal;
        (x, y)
    }

    #[test]
    fn large_lambda0_gives_zero_fixed_point() {
        let (x, y) = problem(30, 50, 1, 0.0);
        let n: f64 = 30.0;
        let fit = scaled_lasso(&x, &y, 10.0).unwrap();
        assert!(fit.converged);
        assert!(fit.beta_hat.iter().all(|b| *b == 0.0));
        assert!((fit.sigma_hat - y.norm() / n.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_is_stable() {
        let (x, y) = problem(40, 80, 2, 2.0);
        let lambda0 = universal_lambda0(40, 80) * 0.5;
        let fit = scaled_lasso(&x, &y, lambda0).unwrap();
        assert!(fit.converged);
        let resid = (&y - &x * &fit.beta_hat).norm() / 40f64.sqrt();
        assert!((fit.sigma_hat - resid).abs() < 1e-8);
        let again = scaled_lasso_from(&x, &y, lambda0, Some(&fit.beta_hat)).unwrap();
        assert!((again.sigma_hat - fit.sigma_hat).abs() < 1e-8);
    }

    #[test]
    fn degenerate_interpolation() {
        // p > n with a tiny lambda0 interpolates and sigma collapses
        let (x, y) = problem(5, 20, 3, 0.0);
        let tiny = 1e-9 / lambda_max(&x, &y);
        match scaled_lasso(&x, &y, tiny) {
            Err(Error::DegenerateFit(_)) => {}
            Ok(fit) => assert!(!fit.converged || fit.sigma_hat < 1e-6),
            Err(e) => panic!("unexpected error {e}"),
        }
        let zero_y = DVector::zeros(5);
        assert!(matches!(scaled_lasso(&x, &zero_y, 0.1), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn sz2_root_substitution() {
        for p in [100, 200, 500, 1000] {
            let k = sz2_k(p).unwrap();
            assert!(sz2_residual(k, p).abs() < 1e-8, "p={p}");
            assert!(k > 0.0 && k < p as f64 / 2.0);
        }
    }

    #[test]
    fn sz2_lambda0_properties() {
        let a = sz2_lambda0(100, 1000).unwrap();
        let b = sz2_lambda0(100, 100).unwrap();
        assert!(a > b);
        let c = sz2_lambda0(400, 1000).unwrap();
        assert!((c - a / 2.0).abs() < 1e-14);
        assert!(a < universal_lambda0(100, 1000));
        assert!(sz2_lambda0(100, 1).is_err());
    }
}
