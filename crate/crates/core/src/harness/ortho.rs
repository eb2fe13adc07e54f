//! Orthogonal-design experiments: CE against CV over a β grid, the CE
//! sequence in n, and the large-sample check.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::OrthoConfig;
use super::io::{header_line, write_csv};
use super::stats::Summary;
use crate::error::Result;
use crate::orthogonal::{ce_lambda, compare_ce_cv, universal_threshold, verify_lemmas, OrthoModel};

pub const VARIANCE_FILE: &str = "ortho_variance.csv";
pub const LAMBDA_FILE: &str = "ortho_lambda.csv";
pub const CE_SEQUENCE_FILE: &str = "ce_sequence.csv";
pub const LEMMAS_FILE: &str = "lemmas.csv";
pub const MOMENTS_FILE: &str = "moments.csv";

/// Mean of one variance estimator at one (α, β).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub alpha: f64,
    pub beta: f64,
    /// `CV`, `CE` or `CE_TILDE`.
    pub estimator: String,
    pub mean: f64,
    pub sigma2: f64,
    pub reps: usize,
    pub invalid: usize,
}

/// CE λ and the spread of the CV-chosen λ̃ at one (α, β).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub alpha: f64,
    pub beta: f64,
    pub ce_lambda: f64,
    pub cv_min: f64,
    pub cv_q25: f64,
    pub cv_median: f64,
    pub cv_q75: f64,
    pub cv_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeSequenceRow {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub ce_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCsvRow {
    pub n: usize,
    pub lambda_n: f64,
    pub exceed_frac: f64,
    pub mean_tilde: f64,
    pub var_tilde: f64,
    pub mean_hat: f64,
    pub var_scaled: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCsvRow {
    pub n: usize,
    pub lambda_n: f64,
    pub j: u32,
    pub closed_form: f64,
    pub quadrature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthoResults {
    pub variance: Vec<VarianceRow>,
    pub lambda: Vec<LambdaRow>,
    pub ce_sequence: Vec<CeSequenceRow>,
    pub lemmas: Vec<LemmaCsvRow>,
    pub moments: Vec<MomentCsvRow>,
}

pub fn simulate_ortho(cfg: &OrthoConfig) -> Result<OrthoResults> {
    cfg.validate()?;
    let s2 = cfg.sigma * cfg.sigma;
    let mut variance = Vec::new();
    let mut lambda = Vec::new();
    for &alpha in &cfg.alpha {
        for &beta in &cfg.beta {
            let model = OrthoModel::new(cfg.n, alpha, beta, cfg.sigma)?;
            let c = compare_ce_cv(&model, cfg.reps, cfg.seed)?;
            for (label, mean, invalid) in [
                ("CV", c.mean_cv, c.invalid),
                ("CE", c.mean_ce, 0),
                ("CE_TILDE", c.mean_ce_tilde, 0),
            ] {
                variance.push(VarianceRow {
                    alpha,
                    beta,
                    estimator: label.into(),
                    mean,
                    sigma2: s2,
                    reps: cfg.reps,
                    invalid,
                });
            }
            let s = Summary::of(&c.cv_lambdas).expect("reps > 0");
            let (lo, hi) = c
                .cv_lambdas
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            lambda.push(LambdaRow {
                alpha,
                beta,
                ce_lambda: c.ce_lambda,
                cv_min: lo,
                cv_q25: s.q25,
                cv_median: s.median,
                cv_q75: s.q75,
                cv_max: hi,
            });
        }
    }
    let mut ce_sequence = Vec::new();
    for &n in &cfg.ce_n {
        let model = OrthoModel::new(n, cfg.lemma_alpha, cfg.lemma_beta, cfg.sigma)?;
        ce_sequence.push(CeSequenceRow {
            n,
            alpha: cfg.lemma_alpha,
            beta: cfg.lemma_beta,
            ce_lambda: ce_lambda(&model),
        });
    }
    let report = verify_lemmas(
        cfg.lemma_alpha,
        cfg.lemma_beta,
        cfg.sigma,
        &cfg.lemma_n,
        cfg.lemma_reps,
        universal_threshold,
        cfg.seed,
    )?;
    let lemmas = report
        .rows
        .iter()
        .map(|r| LemmaCsvRow {
            n: r.n,
            lambda_n: r.lambda_n,
            exceed_frac: r.exceed_frac,
            mean_tilde: r.mean_tilde,
            var_tilde: r.var_tilde,
            mean_hat: r.mean_hat,
            var_scaled: r.var_scaled,
            target: r.target,
        })
        .collect();
    let moments = report
        .moments
        .iter()
        .map(|m| MomentCsvRow {
            n: m.n,
            lambda_n: m.lambda_n,
            j: m.j,
            closed_form: m.closed_form,
            quadrature: m.quadrature,
        })
        .collect();
    Ok(OrthoResults { variance, lambda, ce_sequence, lemmas, moments })
}

pub fn write_ortho(cfg: &OrthoConfig, res: &OrthoResults, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let header = header_line(&cfg.hash(), cfg.seed);
    let paths: Vec<PathBuf> = [VARIANCE_FILE, LAMBDA_FILE, CE_SEQUENCE_FILE, LEMMAS_FILE, MOMENTS_FILE]
        .iter()
        .map(|f| out.join(f))
        .collect();
    write_csv(&paths[0], &header, &res.variance)?;
    write_csv(&paths[1], &header, &res.lambda)?;
    write_csv(&paths[2], &header, &res.ce_sequence)?;
    write_csv(&paths[3], &header, &res.lemmas)?;
    write_csv(&paths[4], &header, &res.moments)?;
    Ok(paths)
}

pub fn run_ortho(cfg: &OrthoConfig, out: &Path) -> Result<OrthoResults> {
    let res = simulate_ortho(cfg)?;
    write_ortho(cfg, &res, out)?;
    Ok(res)
}
