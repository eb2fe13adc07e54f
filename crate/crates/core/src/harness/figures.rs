//! Plot-ready CSVs assembled from a results directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{ALPHA_GRID, P_GRID, RHO_GRID, SNR_GRID};
use super::grid::{DiagnosticRow, SummaryRow, DIAGNOSED, DIAGNOSTICS_FILE, SUMMARY_FILE};
use super::io::{read_csv, write_csv};
use super::ortho::{LambdaRow, VarianceRow, LAMBDA_FILE, VARIANCE_FILE};
use crate::data_gen::NO_SIGNAL;
use crate::error::{Error, Result};
use crate::estimators::EstimatorId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    /// β = 0 boxplots and the median-bias table.
    NoSignal,
    /// α = 0.1 boxplots over p.
    Sparse,
    /// α = 0.5 boxplots over p.
    LessSparse,
    Diagnostics,
    AlphaSweep,
    SnrSweep,
    RhoSweep,
    CeLambda,
    OrthoVariance,
}

impl FigureId {
    pub const ALL: [FigureId; 9] = [
        FigureId::NoSignal,
        FigureId::Sparse,
        FigureId::LessSparse,
        FigureId::Diagnostics,
        FigureId::AlphaSweep,
        FigureId::SnrSweep,
        FigureId::RhoSweep,
        FigureId::CeLambda,
        FigureId::OrthoVariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::NoSignal => "no-signal",
            FigureId::Sparse => "sparse",
            FigureId::LessSparse => "less-sparse",
            FigureId::Diagnostics => "diagnostics",
            FigureId::AlphaSweep => "alpha-sweep",
            FigureId::SnrSweep => "snr-sweep",
            FigureId::RhoSweep => "rho-sweep",
            FigureId::CeLambda => "ce-lambda",
            FigureId::OrthoVariance => "ortho-variance",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "table1" {
            return Ok(FigureId::NoSignal);
        }
        FigureId::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<&str> = FigureId::ALL.iter().map(|f| f.name()).collect();
            Error::InvalidArgument(format!("unknown figure {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// One plotted point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub panel: String,
    pub x_name: String,
    pub x: f64,
    pub estimator: String,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub figure: FigureId,
    pub rows: Vec<FigureRow>,
    /// Expected points absent from the results, as `panel x_name=x`.
    pub missing: Vec<String>,
}

/// Curve sets of the sweep figures.
const SWEEP_D1: [EstimatorId; 8] = [
    EstimatorId::CvL,
    EstimatorId::Scad,
    EstimatorId::Rcv,
    EstimatorId::Sz,
    EstimatorId::SzLs,
    EstimatorId::Sz2,
    EstimatorId::Sz2Ls,
    EstimatorId::D1,
];
const SWEEP_D2: [EstimatorId; 8] = [
    EstimatorId::CvL,
    EstimatorId::Scad,
    EstimatorId::Rcv,
    EstimatorId::Sz,
    EstimatorId::SzLs,
    EstimatorId::Sz2,
    EstimatorId::Sz2Ls,
    EstimatorId::D2,
];

struct Spec {
    filter: fn(&SummaryRow) -> bool,
    panel: fn(&SummaryRow) -> String,
    x_name: &'static str,
    x: fn(&SummaryRow) -> f64,
    expected_x: Vec<f64>,
    estimators: &'static [EstimatorId],
}

fn grid_spec(figure: FigureId) -> Spec {
    let p_values: Vec<f64> = P_GRID.iter().map(|&p| p as f64).collect();
    match figure {
        FigureId::NoSignal => Spec {
            filter: |r| r.alpha == NO_SIGNAL && r.rho == 0.0 && r.sigma == 1.0,
            panel: |r| format!("n={}", r.n),
            x_name: "p",
            x: |r| r.p as f64,
            expected_x: p_values,
            estimators: &EstimatorId::TABLE,
        },
        FigureId::Sparse => Spec {
            filter: |r| r.alpha == 0.1 && r.rho == 0.0 && r.snr == 1.0 && r.sigma == 1.0,
            panel: |r| format!("n={}", r.n),
            x_name: "p",
            x: |r| r.p as f64,
            expected_x: p_values,
            estimators: &EstimatorId::TABLE,
        },
        FigureId::LessSparse => Spec {
            filter: |r| r.alpha == 0.5 && r.rho == 0.0 && r.snr == 1.0 && r.sigma == 1.0,
            panel: |r| format!("n={}", r.n),
            x_name: "p",
            x: |r| r.p as f64,
            expected_x: p_values,
            estimators: &EstimatorId::TABLE,
        },
        FigureId::AlphaSweep => Spec {
            filter: |r| r.alpha != NO_SIGNAL && r.snr == 1.0 && r.sigma == 1.0,
            panel: |r| format!("p={} rho={}", r.p, r.rho),
            x_name: "alpha",
            x: |r| r.alpha,
            expected_x: ALPHA_GRID.to_vec(),
            estimators: &SWEEP_D1,
        },
        FigureId::SnrSweep => Spec {
            filter: |r| r.alpha == 0.5 && r.sigma == 1.0,
            panel: |r| format!("p={} rho={}", r.p, r.rho),
            x_name: "snr",
            x: |r| r.snr,
            expected_x: SNR_GRID.to_vec(),
            estimators: &SWEEP_D1,
        },
        FigureId::RhoSweep => Spec {
            filter: |r| r.alpha == 0.5 && r.snr == 1.0 && r.sigma == 1.0,
            panel: |r| format!("p={}", r.p),
            x_name: "rho",
            x: |r| r.rho,
            expected_x: RHO_GRID.to_vec(),
            estimators: &SWEEP_D2,
        },
        _ => unreachable!("not a grid figure"),
    }
}

fn from_summary(figure: FigureId, summary: &[SummaryRow]) -> FigureData {
    let spec = grid_spec(figure);
    let mut rows = Vec::new();
    let mut panels: Vec<String> = Vec::new();
    for r in summary.iter().filter(|r| (spec.filter)(r)) {
        let Some(id) = r.estimator_id() else { continue };
        if !spec.estimators.contains(&id) {
            continue;
        }
        let panel = (spec.panel)(r);
        if !panels.contains(&panel) {
            panels.push(panel.clone());
        }
        rows.push(FigureRow {
            panel,
            x_name: spec.x_name.to_string(),
            x: (spec.x)(r),
            estimator: r.estimator.clone(),
            median: r.median,
            q25: r.q25,
            q75: r.q75,
        });
    }
    let mut missing = Vec::new();
    for panel in &panels {
        for &x in &spec.expected_x {
            if !rows.iter().any(|r| &r.panel == panel && r.x == x) {
                missing.push(format!("{panel} {}={x}", spec.x_name));
            }
        }
    }
    FigureData { figure, rows, missing }
}

fn from_diagnostics(diag: &[DiagnosticRow]) -> FigureData {
    let keep = |r: &&DiagnosticRow| {
        r.p == 100 && r.alpha == 0.5 && r.snr == 1.0 && r.rho == 0.0 && r.sigma == 1.0
    };
    let rows: Vec<FigureRow> = diag
        .iter()
        .filter(keep)
        .filter(|r| DIAGNOSED.contains(&r.estimator.as_str()))
        .map(|r| FigureRow {
            panel: r.measure.clone(),
            x_name: "p".into(),
            x: r.p as f64,
            estimator: r.estimator.clone(),
            median: Some(r.median),
            q25: Some(r.q25),
            q75: Some(r.q75),
        })
        .collect();
    let missing = if rows.is_empty() {
        vec!["p=100 alpha=0.5 snr=1 rho=0 sigma=1".to_string()]
    } else {
        Vec::new()
    };
    FigureData { figure: FigureId::Diagnostics, rows, missing }
}

fn from_lambda(rows: &[LambdaRow]) -> FigureData {
    let mut out = Vec::new();
    for r in rows {
        let panel = format!("alpha={}", r.alpha);
        out.push(FigureRow {
            panel: panel.clone(),
            x_name: "beta".into(),
            x: r.beta,
            estimator: "CE".into(),
            median: Some(r.ce_lambda),
            q25: None,
            q75: None,
        });
        out.push(FigureRow {
            panel,
            x_name: "beta".into(),
            x: r.beta,
            estimator: "CV".into(),
            median: Some(r.cv_median),
            q25: Some(r.cv_q25),
            q75: Some(r.cv_q75),
        });
    }
    FigureData { figure: FigureId::CeLambda, rows: out, missing: Vec::new() }
}

fn from_variance(rows: &[VarianceRow]) -> FigureData {
    let out = rows
        .iter()
        .map(|r| FigureRow {
            panel: format!("alpha={}", r.alpha),
            x_name: "beta".into(),
            x: r.beta,
            estimator: r.estimator.clone(),
            median: Some(r.mean),
            q25: None,
            q75: None,
        })
        .collect();
    FigureData { figure: FigureId::OrthoVariance, rows: out, missing: Vec::new() }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::NoCells(format!("{} not found", path.display())))
    }
}

/// Assemble a figure's data from `results`. For the orthogonal figures the
/// `median` column carries the plotted value (the CE λ, or a mean σ̂²).
pub fn figure_data(results: &Path, figure: FigureId) -> Result<FigureData> {
    let data = match figure {
        FigureId::CeLambda => {
            let path = results.join(LAMBDA_FILE);
            require(&path)?;
            from_lambda(&read_csv(&path)?)
        }
        FigureId::OrthoVariance => {
            let path = results.join(VARIANCE_FILE);
            require(&path)?;
            from_variance(&read_csv(&path)?)
        }
        FigureId::Diagnostics => {
            let path = results.join(DIAGNOSTICS_FILE);
            require(&path)?;
            from_diagnostics(&read_csv(&path)?)
        }
        _ => {
            let path = results.join(SUMMARY_FILE);
            require(&path)?;
            from_summary(figure, &read_csv(&path)?)
        }
    };
    if data.rows.is_empty() {
        return Err(Error::NoCells(format!(
            "no cells in {} match figure {figure}; missing: {}",
            results.display(),
            data.missing.join("; ")
        )));
    }
    Ok(data)
}

/// Write `figures/<id>.csv` under `results` and return its path.
pub fn emit_figure(results: &Path, figure: FigureId, header: &str) -> Result<(PathBuf, FigureData)> {
    let data = figure_data(results, figure)?;
    let dir = results.join("figures");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.csv", figure.name()));
    write_csv(&path, header, &data.rows)?;
    Ok((path, data))
}

/// The header comment of an existing results file, reused for figure output.
pub fn results_header(results: &Path) -> String {
    for name in [SUMMARY_FILE, VARIANCE_FILE, LAMBDA_FILE] {
        if let Ok(text) = std::fs::read_to_string(results.join(name)) {
            if let Some(line) = text.lines().next().filter(|l| l.starts_with('#')) {
                return line.to_string();
            }
        }
    }
    super::io::header_line("unknown", 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_names_parse() {
        for f in FigureId::ALL {
            assert_eq!(f.name().parse::<FigureId>().unwrap(), f);
        }
        assert_eq!("table1".parse::<FigureId>().unwrap(), FigureId::NoSignal);
        assert!("fig9".parse::<FigureId>().is_err());
    }

    #[test]
    fn empty_directory_is_no_cells() {
        let dir = tempfile::tempdir().unwrap();
        for f in FigureId::ALL {
            assert!(matches!(figure_data(dir.path(), f), Err(Error::NoCells(_))));
        }
    }
}
