use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares refit of `Y` on the columns `X_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    /// Coefficients aligned with the support passed in.
    pub coef: DVector<f64>,
    pub residual: DVector<f64>,
    /// `n − rank(X_M)`.
    pub dof: usize,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl LsFit {
    pub fn rss(&self) -> f64 {
        self.residual.norm_squared()
    }
}

/// Relative threshold on the diagonal of R (and on singular values) below
/// which a column is treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Projects `Y` off the span of `X_M` by Householder QR; rank-deficient
/// supports fall back to the minimum-norm SVD solution.
pub fn ls_on_support(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Result<LsFit> {
    let n = x.nrows();
    let k = support.len();
    if k >= n {
        return Err(Error::SupportTooLarge { support: k, n });
    }
    if k == 0 {
        return Ok(LsFit {
            coef: DVector::zeros(0),
            residual: y.clone(),
            dof: n,
            rank: 0,
            rank_deficient: false,
        });
    }
    let xm = x.select_columns(support);
    let qr = xm.clone().qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let full_rank = diag_max > 0.0 && (0..k).all(|i| r[(i, i)].abs() > RANK_TOL * diag_max);

    let (coef, rank) = if full_rank {
        let qty = qr.q().transpose() * y;
        let coef = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::InvalidArgument("singular triangular factor".into()))?;
        (coef, k)
    } else {
        let svd = xm.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = RANK_TOL * smax;
        let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
        let coef = svd
            .solve(y, eps)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (coef, rank)
    };
    let residual = y - &xm * &coef;
    Ok(LsFit { coef, residual, dof: n - rank, rank, rank_deficient: !full_rank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn empty_support_keeps_y() {
        let (x, y) = gaussian(6, 3, 1);
        let fit = ls_on_support(&x, &y, &[]).unwrap();
        assert_eq!(fit.residual, y);
        assert_eq!(fit.dof, 6);
    }

    #[test]
    fn matches_normal_equations() {
        let (x, y) = gaussian(6, 3, 2);
        let fit = ls_on_support(&x, &y, &[0, 1, 2]).unwrap();
        // normal equations oracle
        let xtx = x.transpose() * &x;
        let b = xtx.cholesky().unwrap().solve(&(x.transpose() * &y));
        let rss = (&y - &x * &b).norm_squared();
        assert!((fit.rss() - rss).abs() < 1e-8);
        assert_eq!(fit.dof, 3);
        let orth = (x.transpose() * &fit.residual).amax();
        assert!(orth <= 1e-8 * y.norm());
    }

    #[test]
    fn sub_support_residual_orthogonal() {
        let (x, y) = gaussian(40, 12, 3);
        let support = [1, 4, 5, 9];
        let fit = ls_on_support(&x, &y, &support).unwrap();
        for &j in &support {
            assert!(x.column(j).dot(&fit.residual).abs() <= 1e-8 * y.norm());
        }
        assert_eq!(fit.dof, 36);
    }

    #[test]
    fn too_large_support() {
        let (x, y) = gaussian(4, 6, 4);
        assert!(matches!(
            ls_on_support(&x, &y, &[0, 1, 2, 3]),
            Err(Error::SupportTooLarge { support: 4, n: 4 })
        ));
    }

    #[test]
    fn rank_deficient_support() {
        let (mut x, y) = gaussian(10, 3, 5);
        let c0 = x.column(0).clone_owned();
        x.set_column(2, &(c0 * 2.0));
        let fit = ls_on_support(&x, &y, &[0, 1, 2]).unwrap();
        assert!(fit.rank_deficient);
        assert_eq!(fit.rank, 2);
        assert_eq!(fit.dof, 8);
        let reference = ls_on_support(&x, &y, &[0, 1]).unwrap();
        assert!((fit.rss() - reference.rss()).abs() < 1e-8);
    }
}
