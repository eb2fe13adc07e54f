//! Simulation grid runner and per-cell aggregation.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Cell, GridConfig};
use super::io::{header_line, write_csv, write_csv_with_columns};
use super::stats::Summary;
use crate::data_gen::{generate_dataset, SimulationConfig};
use crate::error::Result;
use crate::estimators::{run_catalogue, Diagnostics, EstimatorId, EstimatorOutput, Flags};
use crate::rng::StreamKey;

/// One estimator on one replication. Split-sample diagnostics appear as
/// extra rows labelled `RCV1` and `RCV2` with no variance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub cell_id: String,
    pub rep: u64,
    pub estimator: String,
    pub sigma2_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub support_size: usize,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub signal_ratio: f64,
    pub flags: String,
    pub error: String,
}

pub const HALF_LABELS: [&str; 2] = ["RCV1", "RCV2"];
const ERROR_FLAG: &str = "ERROR";

impl RawRecord {
    fn from_output(cell_id: &str, rep: u64, out: &EstimatorOutput) -> Self {
        Self {
            cell_id: cell_id.to_string(),
            rep,
            estimator: out.id.label().to_string(),
            sigma2_hat: out.sigma2_hat,
            sigma_hat: out.sigma_hat,
            lambda_hat: out.lambda_hat,
            support_size: out.support.len(),
            true_pos: out.diagnostics.true_pos,
            false_pos: out.diagnostics.false_pos,
            false_neg: out.diagnostics.false_neg,
            signal_ratio: out.diagnostics.signal_ratio,
            flags: out.flags.to_label(),
            error: String::new(),
        }
    }

    fn half(cell_id: &str, rep: u64, label: &str, d: &Diagnostics) -> Self {
        Self {
            cell_id: cell_id.to_string(),
            rep,
            estimator: label.to_string(),
            sigma2_hat: None,
            sigma_hat: None,
            lambda_hat: None,
            support_size: d.true_pos + d.false_pos,
            true_pos: d.true_pos,
            false_pos: d.false_pos,
            false_neg: d.false_neg,
            signal_ratio: d.signal_ratio,
            flags: String::new(),
            error: String::new(),
        }
    }

    fn failed(cell_id: &str, rep: u64, id: EstimatorId, msg: String) -> Self {
        Self {
            cell_id: cell_id.to_string(),
            rep,
            estimator: id.label().to_string(),
            sigma2_hat: None,
            sigma_hat: None,
            lambda_hat: None,
            support_size: 0,
            true_pos: 0,
            false_pos: 0,
            false_neg: 0,
            signal_ratio: f64::NAN,
            flags: ERROR_FLAG.to_string(),
            error: msg,
        }
    }

    fn has_flag(&self, name: &str) -> bool {
        self.flags.split('|').any(|f| f == name)
    }
}

/// Per-cell, per-estimator statistics of σ̂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell_id: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub alpha: f64,
    pub snr: f64,
    pub sigma: f64,
    pub estimator: String,
    pub reps: usize,
    pub valid: usize,
    /// `median(σ̂) − σ`.
    pub median_bias: Option<f64>,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// Mean of the unclamped σ̂².
    pub mean_sigma2: Option<f64>,
    pub clamp_count: usize,
    pub nonconverge_count: usize,
    pub overflow_count: usize,
    pub error_count: usize,
}

/// Per-cell selection diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub cell_id: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub alpha: f64,
    pub snr: f64,
    pub sigma: f64,
    pub estimator: String,
    pub measure: String,
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub cell_id: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub alpha: f64,
    pub snr: f64,
    pub sigma: f64,
    pub seed: u64,
    pub reps: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub cell_id: String,
    pub rep: Option<u64>,
    pub estimator: String,
    pub message: String,
}

/// Estimators with a coefficient estimate, in diagnostic-plot order.
pub const DIAGNOSED: [&str; 9] =
    ["CV_L", "CV_LS", "SCAD", "RCV1", "RCV2", "SZ", "SZ_LS", "SZ2", "SZ2_LS"];

/// Every record for a replication: the catalogue in order, then the halves.
pub fn replicate(sim: &SimulationConfig, cell_id: &str, rep: u64) -> Result<Vec<RawRecord>> {
    let ds = generate_dataset(sim, rep)?;
    let key = StreamKey::new(sim.seed, rep);
    let mut records = Vec::new();
    let mut halves = Vec::new();
    for (id, out) in run_catalogue(&ds, sim.folds, key) {
        match out {
            Ok(out) => {
                if let Some(h) = out.halves {
                    for (label, d) in HALF_LABELS.iter().zip(h.iter()) {
                        halves.push(RawRecord::half(cell_id, rep, label, d));
                    }
                }
                records.push(RawRecord::from_output(cell_id, rep, &out));
            }
            Err(e) => records.push(RawRecord::failed(cell_id, rep, id, e.to_string())),
        }
    }
    records.extend(halves);
    Ok(records)
}

/// Aggregate the raw records of one cell. A pure function of its inputs, so
/// a persisted raw file reproduces the summary exactly.
pub fn summarise(cell: &Cell, reps: usize, records: &[RawRecord]) -> (Vec<SummaryRow>, Vec<DiagnosticRow>) {
    let id = cell.id();
    let mut summary = Vec::new();
    for est in EstimatorId::SIMULATED {
        let label = est.label();
        let rows: Vec<&RawRecord> = records.iter().filter(|r| r.estimator == label).collect();
        let sig: Vec<f64> = rows.iter().filter_map(|r| r.sigma_hat).collect();
        let raw: Vec<f64> = rows.iter().filter_map(|r| r.sigma2_hat).collect();
        let s = Summary::of(&sig);
        let count = |flag: &str| rows.iter().filter(|r| r.has_flag(flag)).count();
        summary.push(SummaryRow {
            cell_id: id.clone(),
            n: cell.n,
            p: cell.p,
            rho: cell.rho,
            alpha: cell.alpha,
            snr: cell.snr,
            sigma: cell.sigma,
            estimator: label.to_string(),
            reps,
            valid: sig.len(),
            median_bias: s.map(|s| s.median - cell.sigma),
            median: s.map(|s| s.median),
            q25: s.map(|s| s.q25),
            q75: s.map(|s| s.q75),
            mean: s.map(|s| s.mean),
            variance: s.map(|s| s.variance),
            mean_sigma2: Summary::of(&raw).map(|s| s.mean),
            clamp_count: count("CLAMPED_NEGATIVE"),
            nonconverge_count: count("NONCONVERGED"),
            overflow_count: count("SUPPORT_OVERFLOW"),
            error_count: count(ERROR_FLAG),
        });
    }

    let mut diagnostics = Vec::new();
    for label in DIAGNOSED {
        let rows: Vec<&RawRecord> =
            records.iter().filter(|r| r.estimator == label && !r.has_flag(ERROR_FLAG)).collect();
        let measures: [(&str, Vec<f64>); 4] = [
            ("true_pos", rows.iter().map(|r| r.true_pos as f64).collect()),
            ("false_pos", rows.iter().map(|r| r.false_pos as f64).collect()),
            ("false_neg", rows.iter().map(|r| r.false_neg as f64).collect()),
            ("signal_ratio", rows.iter().map(|r| r.signal_ratio).filter(|v| v.is_finite()).collect()),
        ];
        for (measure, values) in measures {
            if let Some(s) = Summary::of(&values) {
                diagnostics.push(DiagnosticRow {
                    cell_id: id.clone(),
                    n: cell.n,
                    p: cell.p,
                    rho: cell.rho,
                    alpha: cell.alpha,
                    snr: cell.snr,
                    sigma: cell.sigma,
                    estimator: label.to_string(),
                    measure: measure.to_string(),
                    count: s.count,
                    median: s.median,
                    q25: s.q25,
                    q75: s.q75,
                    mean: s.mean,
                });
            }
        }
    }
    (summary, diagnostics)
}

/// What a grid run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResults {
    pub cells: Vec<CellRow>,
    pub summary: Vec<SummaryRow>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub raw: Vec<RawRecord>,
    pub errors: Vec<ErrorRow>,
}

/// Run every (cell, replication) pair on the current rayon pool. Results are
/// collected in grid order, so the output does not depend on thread count.
pub fn simulate(cfg: &GridConfig) -> Result<GridResults> {
    cfg.validate()?;
    let cells = cfg.cells();
    let sims: Vec<SimulationConfig> = cells.iter().map(|c| c.simulation(cfg)).collect();
    let ids: Vec<String> = cells.iter().map(Cell::id).collect();
    let jobs: Vec<(usize, u64)> =
        (0..cells.len()).flat_map(|c| (0..cfg.reps as u64).map(move |r| (c, r))).collect();
    let outcomes: Vec<Result<Vec<RawRecord>>> =
        jobs.par_iter().map(|&(c, r)| replicate(&sims[c], &ids[c], r)).collect();

    let mut per_cell: Vec<Vec<RawRecord>> = vec![Vec::new(); cells.len()];
    let mut failed: Vec<Option<String>> = vec![None; cells.len()];
    let mut errors = Vec::new();
    for (&(c, r), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(records) => {
                for rec in &records {
                    if rec.has_flag(ERROR_FLAG) {
                        errors.push(ErrorRow {
                            cell_id: ids[c].clone(),
                            rep: Some(r),
                            estimator: rec.estimator.clone(),
                            message: rec.error.clone(),
                        });
                    }
                }
                per_cell[c].extend(records);
            }
            Err(e) => {
                if failed[c].is_none() {
                    failed[c] = Some(e.to_string());
                }
                errors.push(ErrorRow {
                    cell_id: ids[c].clone(),
                    rep: Some(r),
                    estimator: String::new(),
                    message: e.to_string(),
                });
            }
        }
    }

    let mut results = GridResults {
        cells: Vec::new(),
        summary: Vec::new(),
        diagnostics: Vec::new(),
        raw: Vec::new(),
        errors,
    };
    for (i, cell) in cells.iter().enumerate() {
        results.cells.push(CellRow {
            cell_id: ids[i].clone(),
            n: cell.n,
            p: cell.p,
            rho: cell.rho,
            alpha: cell.alpha,
            snr: cell.snr,
            sigma: cell.sigma,
            seed: sims[i].seed,
            reps: cfg.reps,
            status: if failed[i].is_some() { "failed".into() } else { "ok".into() },
        });
        if failed[i].is_some() {
            continue;
        }
        let (s, d) = summarise(cell, cfg.reps, &per_cell[i]);
        results.summary.extend(s);
        results.diagnostics.extend(d);
        results.raw.append(&mut per_cell[i]);
    }
    Ok(results)
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const RAW_FILE: &str = "raw.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const CELLS_FILE: &str = "cells.csv";

/// Write a run's CSVs under `out`, returning the paths written.
pub fn write_results(cfg: &GridConfig, results: &GridResults, out: &Path) -> Result<Vec<PathBuf>> {
    let header = header_line(&cfg.hash(), cfg.seed);
    let cell_dir = out.join("cells");
    std::fs::create_dir_all(&cell_dir)?;
    let mut written = Vec::new();
    let mut put = |name: PathBuf| {
        written.push(name.clone());
        name
    };
    write_csv(&put(out.join(CELLS_FILE)), &header, &results.cells)?;
    write_csv(&put(out.join(SUMMARY_FILE)), &header, &results.summary)?;
    write_csv(&put(out.join(DIAGNOSTICS_FILE)), &header, &results.diagnostics)?;
    write_csv_with_columns(
        &put(out.join(ERRORS_FILE)),
        &header,
        &["cell_id", "rep", "estimator", "message"],
        &results.errors,
    )?;
    if cfg.persist_raw {
        write_csv(&put(out.join(RAW_FILE)), &header, &results.raw)?;
    }
    for cell in &results.cells {
        let rows: Vec<&SummaryRow> =
            results.summary.iter().filter(|r| r.cell_id == cell.cell_id).collect();
        if !rows.is_empty() {
            write_csv(&put(cell_dir.join(format!("cell_{}.csv", cell.cell_id))), &header, &rows)?;
        }
    }
    Ok(written)
}

/// [`simulate`] followed by [`write_results`].
pub fn run_grid(cfg: &GridConfig, out: &Path) -> Result<GridResults> {
    let results = simulate(cfg)?;
    write_results(cfg, &results, out)?;
    Ok(results)
}

impl SummaryRow {
    pub fn estimator_id(&self) -> Option<EstimatorId> {
        self.estimator.parse().ok()
    }
}

/// Flags recorded on a raw row.
pub fn parse_flags(label: &str) -> Flags {
    label
        .split('|')
        .filter_map(|name| Flags::from_name(name))
        .fold(Flags::empty(), |a, f| a | f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Overrides;

    fn tiny() -> GridConfig {
        let text = "reps = 3\nfolds = 3\nn = 20\np = 30\nrho = 0.0\nalpha = [-inf, 0.5]\nsnr = 2.0\n";
        GridConfig::from_toml_str(text, Overrides::default()).unwrap()
    }

    #[test]
    fn records_cover_catalogue_and_halves() {
        let cfg = tiny();
        let res = simulate(&cfg).unwrap();
        assert_eq!(res.cells.len(), 2);
        let per_rep = EstimatorId::SIMULATED.len() + 2;
        assert_eq!(res.raw.len(), 2 * 3 * per_rep);
        assert_eq!(res.summary.len(), 2 * EstimatorId::SIMULATED.len());
        for row in &res.summary {
            let n = res.raw.iter().filter(|r| r.cell_id == row.cell_id && r.estimator == row.estimator).count();
            assert_eq!(n, 3);
            assert!(row.valid + row.error_count <= 3, "{row:?}");
        }
    }

    #[test]
    fn summary_recomputes_from_raw() {
        let cfg = tiny();
        let res = simulate(&cfg).unwrap();
        for cell in cfg.cells() {
            let recs: Vec<RawRecord> =
                res.raw.iter().filter(|r| r.cell_id == cell.id()).cloned().collect();
            let (s, _) = summarise(&cell, cfg.reps, &recs);
            let want: Vec<SummaryRow> =
                res.summary.iter().filter(|r| r.cell_id == cell.id()).cloned().collect();
            assert_eq!(s, want);
        }
    }

    #[test]
    fn flags_round_trip() {
        let f = Flags::CLAMPED_NEGATIVE | Flags::NONCONVERGED;
        assert_eq!(parse_flags(&f.to_label()), f);
        assert_eq!(parse_flags(""), Flags::empty());
    }
}
