//! Cyclic coordinate descent shared by the Lasso and SCAD kernels.
//!
//! Objective: `½‖Y − Xβ‖² + Σⱼ penalty(βⱼ)`. No 1/n factor, no
//! standardisation, no intercept. Columns are visited in index order.

use nalgebra::{DMatrix, DVector};

/// Per-coordinate penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// `λ|βⱼ|`.
    Lasso,
    /// SCAD with concavity `a`, applied on the column's own scale:
    /// `vⱼ · p_{λ/vⱼ}(|βⱼ|)` with `vⱼ = ‖Xⱼ‖²`. For unit-norm columns this is
    /// the plain SCAD penalty; in every case it coincides with `λ|βⱼ|` for
    /// `|βⱼ| ≤ λ/vⱼ`.
    Scad { a: f64 },
}

/// `sign(x)·max(|x| − t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Minimiser of `½(b − z)² + p_μ(|b|)` for the SCAD penalty.
#[inline]
pub fn scad_threshold(z: f64, mu: f64, a: f64) -> f64 {
    let az = z.abs();
    if az <= 2.0 * mu {
        soft_threshold(z, mu)
    } else if az <= a * mu {
        ((a - 1.0) * z - z.signum() * a * mu) / (a - 2.0)
    } else {
        z
    }
}

/// SCAD penalty value `p_μ(θ)` for `θ ≥ 0`.
pub fn scad_penalty(theta: f64, mu: f64, a: f64) -> f64 {
    if theta <= mu {
        mu * theta
    } else if theta <= a * mu {
        (2.0 * a * mu * theta - theta * theta - mu * mu) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * mu * mu / 2.0
    }
}

/// Stopping rules for one coordinate-descent solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_sweeps: usize,
    /// Converged when the largest coefficient change in a full sweep is below
    /// `tol · (1 + ‖β‖∞)`.
    pub tol: f64,
    /// KKT slack, relative to `‖X′Y‖∞`.
    pub kkt_rel_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_sweeps: 10_000, tol: 1e-7, kkt_rel_tol: 1e-6 }
    }
}

/// Outcome of [`CoordinateDescent::solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStatus {
    pub converged: bool,
    pub sweeps: usize,
}

/// Coordinate-descent state: coefficients and the running residual.
#[derive(Debug, Clone)]
pub struct CoordinateDescent<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    penalty: Penalty,
    beta: Vec<f64>,
    resid: Vec<f64>,
    col_sq: Vec<f64>,
    xty: Vec<f64>,
    xty_inf: f64,
    kkt_tol: f64,
    /// `X′Xⱼ`, filled the first time column `j` turns active.
    gram: Vec<Vec<f64>>,
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, penalty: Penalty) -> Self {
        let n = x.nrows();
        let col_sq = (0..x.ncols())
            .map(|j| col(x, j).iter().map(|v| v * v).sum())
            .collect();
        let xty: Vec<f64> = (0..x.ncols()).map(|j| dot(col(x, j), y.as_slice())).collect();
        let xty_inf = xty.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        debug_assert_eq!(y.len(), n);
        Self {
            x,
            y,
            penalty,
            beta: vec![0.0; x.ncols()],
            resid: y.as_slice().to_vec(),
            col_sq,
            xty,
            xty_inf,
            kkt_tol: SolverOptions::default().kkt_rel_tol * xty_inf,
            gram: vec![Vec::new(); x.ncols()],
        }
    }

    pub fn with_options(mut self, opts: &SolverOptions) -> Self {
        self.kkt_tol = opts.kkt_rel_tol * self.xty_inf;
        self
    }

    pub fn set_penalty(&mut self, penalty: Penalty) {
        self.penalty = penalty;
    }

    /// Replace the coefficients and recompute the residual.
    pub fn set_beta(&mut self, beta: &[f64]) {
        assert_eq!(beta.len(), self.beta.len());
        self.beta.copy_from_slice(beta);
        self.resid.copy_from_slice(self.y.as_slice());
        let n = self.x.nrows();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                let xj = col(self.x, j);
                for i in 0..n {
                    self.resid[i] -= b * xj[i];
                }
            }
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn residual(&self) -> &[f64] {
        &self.resid
    }

    pub fn kkt_tol(&self) -> f64 {
        self.kkt_tol
    }

    pub fn rss(&self) -> f64 {
        self.resid.iter().map(|r| r * r).sum()
    }

    pub fn objective(&self, lambda: f64) -> f64 {
        let pen: f64 = match self.penalty {
            Penalty::Lasso => lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>(),
            Penalty::Scad { a } => self
                .beta
                .iter()
                .zip(&self.col_sq)
                .filter(|(_, v)| **v > 0.0)
                .map(|(b, v)| v * scad_penalty(b.abs(), lambda / v, a))
                .sum(),
        };
        0.5 * self.rss() + pen
    }

    /// Exact minimisation over coordinate `j`; returns `|Δβⱼ|`.
    #[inline]
    pub fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let v = self.col_sq[j];
        if v == 0.0 {
            return 0.0;
        }
        let xj = col(self.x, j);
        let old = self.beta[j];
        let rho = dot(xj, &self.resid) + v * old;
        let new = self.threshold(rho, v, lambda);
        let delta = new - old;
        if delta != 0.0 {
            for (r, x) in self.resid.iter_mut().zip(xj) {
                *r -= delta * x;
            }
            self.beta[j] = new;
        }
        delta.abs()
    }

    #[inline]
    fn threshold(&self, rho: f64, v: f64, lambda: f64) -> f64 {
        match self.penalty {
            Penalty::Lasso => soft_threshold(rho, lambda) / v,
            Penalty::Scad { a } => scad_threshold(rho / v, lambda / v, a),
        }
    }

    fn ensure_gram(&mut self, idx: &[usize]) {
        for &j in idx {
            if self.gram[j].is_empty() {
                let xj = col(self.x, j);
                self.gram[j] = (0..self.x.ncols()).map(|l| dot(col(self.x, l), xj)).collect();
            }
        }
    }

    fn sync_residual(&mut self) {
        self.resid.copy_from_slice(self.y.as_slice());
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                for (r, x) in self.resid.iter_mut().zip(col(self.x, j)) {
                    *r -= b * x;
                }
            }
        }
    }

    /// Sweep over `idx` using cached Gram columns; `grad` holds `X′ᵢr` for
    /// `i ∈ idx` and is kept current. The residual is left stale.
    fn sweep_gram(&mut self, lambda: f64, idx: &[usize], grad: &mut [f64]) -> f64 {
        let mut max_change = 0.0f64;
        for (i, &j) in idx.iter().enumerate() {
            let v = self.col_sq[j];
            if v == 0.0 {
                continue;
            }
            let old = self.beta[j];
            let new = self.threshold(grad[i] + v * old, v, lambda);
            let delta = new - old;
            if delta != 0.0 {
                self.beta[j] = new;
                let gj = &self.gram[j];
                for (g, &l) in grad.iter_mut().zip(idx) {
                    *g -= delta * gj[l];
                }
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// One pass over all coordinates; returns the largest change.
    pub fn sweep(&mut self, lambda: f64) -> f64 {
        let mut max_change = 0.0f64;
        for j in 0..self.beta.len() {
            max_change = max_change.max(self.update(j, lambda));
        }
        max_change
    }

    fn scale(&self) -> f64 {
        1.0 + self.beta.iter().fold(0.0f64, |m, b| m.max(b.abs()))
    }

    /// Largest KKT violation of the Lasso optimality conditions at `lambda`.
    pub fn kkt_violation(&self, lambda: f64) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.beta.len() {
            let g = dot(col(self.x, j), &self.resid);
            let b = self.beta[j];
            let v = if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Run to convergence at `lambda`: full sweeps to pick the active set,
    /// then cycling on the active set until it settles. Lasso solves must also
    /// pass the KKT check; a failure tightens the tolerance and resumes.
    pub fn solve(&mut self, lambda: f64, opts: &SolverOptions) -> SolveStatus {
        let mut sweeps = 0;
        let mut tol = opts.tol;
        let mut active: Vec<usize> = Vec::new();
        let mut since_refine = 0;
        while sweeps < opts.max_sweeps {
            let change = self.sweep(lambda);
            sweeps += 1;
            since_refine += 1;
            if change <= tol * self.scale() {
                let ok = match self.penalty {
                    Penalty::Lasso => self.kkt_violation(lambda) <= self.kkt_tol,
                    Penalty::Scad { .. } => true,
                };
                if ok {
                    return SolveStatus { converged: true, sweeps };
                }
                tol *= 0.1;
                if tol < 1e-15 {
                    break;
                }
            }
            active.clear();
            active.extend((0..self.beta.len()).filter(|&j| self.beta[j] != 0.0));
            if since_refine >= REFINE_EVERY {
                since_refine = 0;
                if self.refine(lambda, &active) {
                    continue;
                }
            }
            self.ensure_gram(&active);
            let mut grad: Vec<f64> = active.iter().map(|&j| dot(col(self.x, j), &self.resid)).collect();
            while sweeps < opts.max_sweeps {
                let c = self.sweep_gram(lambda, &active, &mut grad);
                sweeps += 1;
                since_refine += 1;
                if c <= tol * self.scale() {
                    break;
                }
                if since_refine >= REFINE_EVERY {
                    since_refine = 0;
                    self.sync_residual();
                    if self.refine(lambda, &active) {
                        break;
                    }
                }
            }
            self.sync_residual();
        }
        SolveStatus { converged: false, sweeps }
    }
}

/// Inner sweeps between attempts at an exact solve on the active set.
const REFINE_EVERY: usize = 25;

impl CoordinateDescent<'_> {
    /// Active-set walk on the penalty's quadratic pieces. With the sign and
    /// SCAD region of every active coefficient held fixed the stationarity
    /// conditions are linear; step towards their solution, stopping at the
    /// first piece boundary, and repeat. Kept only if the objective drops.
    fn refine(&mut self, lambda: f64, active: &[usize]) -> bool {
        let mut reduced: Vec<usize> = active.iter().copied().filter(|&j| self.beta[j] != 0.0).collect();
        if reduced.len() > self.x.nrows() {
            while reduced.len() > self.x.nrows() {
                if !self.null_step(lambda, &mut reduced) {
                    return false;
                }
            }
        }
        let active = &reduced[..];
        let k = active.len();
        if k == 0 {
            return false;
        }
        self.ensure_gram(active);
        let gram = DMatrix::from_fn(k, k, |r, c| self.gram[active[c]][active[r]]);
        let xty = DVector::from_iterator(k, active.iter().map(|&j| self.xty[j]));
        let a = match self.penalty {
            Penalty::Lasso => f64::INFINITY,
            Penalty::Scad { a } => a,
        };
        // Lasso has a single piece per sign.
        let mu: Vec<f64> = match self.penalty {
            Penalty::Lasso => vec![f64::INFINITY; k],
            Penalty::Scad { .. } => active.iter().map(|&j| lambda / self.col_sq[j]).collect(),
        };
        let mut sign: Vec<f64> = active.iter().map(|&j| self.beta[j].signum()).collect();
        let mut cur: Vec<f64> = active.iter().map(|&j| self.beta[j]).collect();
        // Region of |βⱼ|: 0 = (0, μ], 1 = (μ, aμ], 2 = (aμ, ∞).
        let region_of = |b: f64, m: f64| if b.abs() <= m { 0u8 } else if b.abs() <= a * m { 1 } else { 2 };
        let mut region: Vec<u8> = cur.iter().zip(&mu).map(|(&b, &m)| region_of(b, m)).collect();
        let bounds = |r: u8, m: f64| match r {
            0 => (0.0, m),
            1 => (m, a * m),
            _ => (a * m, f64::INFINITY),
        };
        let mut idx: Vec<usize> = (0..k).collect();
        for _ in 0..2 * k + 8 {
            if idx.is_empty() {
                break;
            }
            let mut g = gram.select_rows(&idx).select_columns(&idx);
            let mut rhs = xty.select_rows(&idx);
            for (m, &i) in idx.iter().enumerate() {
                match region[i] {
                    0 => rhs[m] -= lambda * sign[i],
                    1 => {
                        g[(m, m)] -= self.col_sq[active[i]] / (a - 1.0);
                        rhs[m] -= a * lambda * sign[i] / (a - 1.0);
                    }
                    _ => {}
                }
            }
            let Some(chol) = g.cholesky() else {
                break;
            };
            let cand = chol.solve(&rhs);
            if cand.iter().any(|c| !c.is_finite()) {
                break;
            }
            let mut t = 1.0f64;
            let mut hit = None;
            for (m, &i) in idx.iter().enumerate() {
                let (u, w) = (sign[i] * cur[i], sign[i] * cand[m]);
                let (lo, hi) = bounds(region[i], mu[i]);
                let (ti, up) = if w < lo {
                    ((u - lo) / (u - w), false)
                } else if w > hi {
                    ((hi - u) / (w - u), true)
                } else {
                    continue;
                };
                if ti < t {
                    t = ti.max(0.0);
                    hit = Some((m, up));
                }
            }
            for (m, &i) in idx.iter().enumerate() {
                cur[i] += t * (cand[m] - cur[i]);
            }
            let Some((m, up)) = hit else {
                // At the piece minimiser: one coordinate pass picks the next piece.
                let mut grad: Vec<f64> = (0..k)
                    .map(|i| xty[i] - (0..k).map(|l| gram[(i, l)] * cur[l]).sum::<f64>())
                    .collect();
                let mut moved = 0.0f64;
                for &i in &idx {
                    let v = self.col_sq[active[i]];
                    let d = self.threshold(grad[i] + v * cur[i], v, lambda) - cur[i];
                    if d != 0.0 {
                        cur[i] += d;
                        for (l, g) in grad.iter_mut().enumerate() {
                            *g -= d * gram[(l, i)];
                        }
                        moved = moved.max(d.abs());
                    }
                }
                let scale = 1.0 + cur.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                if moved <= 1e-9 * scale {
                    break;
                }
                idx.retain(|&i| cur[i] != 0.0);
                for &i in &idx {
                    sign[i] = cur[i].signum();
                    region[i] = region_of(cur[i], mu[i]);
                }
                continue;
            };
            let i = idx[m];
            let (lo, hi) = bounds(region[i], mu[i]);
            if up {
                cur[i] = sign[i] * hi;
                region[i] += 1;
            } else if region[i] == 0 {
                cur[i] = 0.0;
                idx.remove(m);
            } else {
                cur[i] = sign[i] * lo;
                region[i] -= 1;
            }
        }
        let before = self.objective(lambda);
        let saved = self.beta.clone();
        let mut next = saved.clone();
        for (i, &j) in active.iter().enumerate() {
            next[j] = cur[i];
        }
        self.set_beta(&next);
        if self.objective(lambda) < before {
            true
        } else {
            self.set_beta(&saved);
            false
        }
    }
}

impl CoordinateDescent<'_> {
    /// More active columns than rows: move along the null space of `X_A`,
    /// where the residual is fixed and the penalty is concave between sign
    /// changes, to whichever end of that segment is lower. The coefficient
    /// reaching zero there leaves `active`.
    fn null_step(&mut self, lambda: f64, active: &mut Vec<usize>) -> bool {
        let k = active.len();
        // Columns of `q` span the row space of `X_A`.
        let q = self.x.select_columns(active.iter()).transpose().qr().q();
        let project = |w: &DVector<f64>| {
            let c = q.tr_mul(w);
            w - &q * c
        };
        let grad = DVector::from_iterator(
            k,
            active.iter().map(|&j| {
                let b = self.beta[j];
                match self.penalty {
                    Penalty::Lasso => lambda * b.signum(),
                    Penalty::Scad { a } => {
                        let v = self.col_sq[j];
                        let mu = lambda / v;
                        if b.abs() <= mu {
                            lambda * b.signum()
                        } else if b.abs() <= a * mu {
                            (a * lambda * b.signum() - v * b) / (a - 1.0)
                        } else {
                            0.0
                        }
                    }
                }
            }),
        );
        let mut dir = -project(&grad);
        if !(dir.norm() > 1e-12 * (1.0 + grad.norm())) {
            let m = (0..k)
                .min_by(|&i, &j| self.beta[active[i]].abs().total_cmp(&self.beta[active[j]].abs()))
                .expect("k > 0");
            dir = project(&DVector::from_fn(k, |i, _| if i == m { 1.0 } else { 0.0 }));
        }
        if !(dir.norm() > 1e-12) || dir.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let before = self.objective(lambda);
        let saved = self.beta.clone();
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for sgn in [1.0, -1.0] {
            let mut t = f64::INFINITY;
            let mut hit = 0;
            for (m, (&j, &v)) in active.iter().zip(dir.iter()).enumerate() {
                let (b, v) = (self.beta[j], sgn * v);
                if b * v < 0.0 && -b / v < t {
                    t = -b / v;
                    hit = m;
                }
            }
            if !t.is_finite() {
                continue;
            }
            let mut next = saved.clone();
            for (&j, &v) in active.iter().zip(dir.iter()) {
                next[j] += t * sgn * v;
            }
            next[active[hit]] = 0.0;
            self.set_beta(&next);
            let obj = self.objective(lambda);
            if best.as_ref().map_or(true, |(o, _, _)| obj < *o) {
                best = Some((obj, next, hit));
            }
        }
        match best {
            Some((obj, next, hit)) if obj <= before * (1.0 + 1e-12) => {
                self.set_beta(&next);
                active.remove(hit);
                true
            }
            _ => {
                self.set_beta(&saved);
                false
            }
        }
    }
}

#[inline]
pub(crate) fn col(x: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = x.nrows();
    &x.as_slice()[j * n..(j + 1) * n]
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        for x in [-2.5, -1e-3, 0.0, 0.7, 11.0] {
            assert_eq!(soft_threshold(x, 0.0), x);
        }
    }

    /// Brute-force 1-D minimisation of `½(b − z)² + p_μ(|b|)` on a fine grid.
    fn scad_1d_oracle(z: f64, mu: f64, a: f64) -> f64 {
        let lo = -z.abs() - 1.0;
        let hi = z.abs() + 1.0;
        let steps = 400_000;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=steps {
            let b = lo + (hi - lo) * k as f64 / steps as f64;
            let f = 0.5 * (b - z) * (b - z) + scad_penalty(b.abs(), mu, a);
            if f < best.0 {
                best = (f, b);
            }
        }
        best.1
    }

    #[test]
    fn scad_threshold_matches_grid_oracle() {
        let a = 3.7;
        let mu = 1.0;
        for z in [-5.0, -3.0, -2.4, -1.5, -0.8, 0.0, 0.4, 1.0, 1.9, 2.5, 3.6, 3.8, 6.0] {
            let got = scad_threshold(z, mu, a);
            let want = scad_1d_oracle(z, mu, a);
            assert!((got - want).abs() < 1e-4, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn scad_threshold_regions() {
        let (mu, a) = (0.5, 3.7);
        assert_eq!(scad_threshold(4.0, mu, a), 4.0);
        assert_eq!(scad_threshold(-2.0, mu, a), -2.0);
        assert_eq!(scad_threshold(0.5, mu, a), 0.0);
        assert_eq!(scad_threshold(-0.3, mu, a), 0.0);
    }

    #[test]
    fn scad_penalty_continuous() {
        let (mu, a) = (0.7, 3.7);
        let eps = 1e-9;
        for t in [mu, a * mu] {
            let l = scad_penalty(t - eps, mu, a);
            let r = scad_penalty(t + eps, mu, a);
            assert!((l - r).abs() < 1e-8);
        }
    }
}

