use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use hdvar_core::harness::{self, figures, FigureId, GridConfig, OrthoConfig, Overrides, Profile};

#[derive(Parser)]
#[command(name = "hdvar", version, about = "Error-variance estimators for p > n regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation grid and write summary CSVs.
    RunGrid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        profile: Option<Profile>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the orthogonal-design experiments.
    RunOrtho {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write plot data for one figure from a results directory.
    EmitFigure {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        figure: FigureId,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::RunGrid { config, out, profile, seed, jobs } => {
            let cfg = GridConfig::load(&config, Overrides { profile, seed })
                .with_context(|| format!("reading {}", config.display()))?;
            if cfg.profile == Profile::Full {
                eprintln!("warning: {}", Profile::FULL_WARNING);
            }
            let cells = cfg.cells().len();
            eprintln!("running {cells} cells x {} replications", cfg.reps);
            std::fs::create_dir_all(&out)?;
            let res = harness::with_jobs(jobs, || harness::run_grid(&cfg, &out))??;
            let failed = res.cells.iter().filter(|c| c.status != "ok").count();
            eprintln!(
                "wrote {} summary rows to {} ({failed} failed cells, {} errors)",
                res.summary.len(),
                out.display(),
                res.errors.len()
            );
        }
        Command::RunOrtho { config, out, seed, jobs } => {
            let cfg = OrthoConfig::load(&config, seed)
                .with_context(|| format!("reading {}", config.display()))?;
            let res = harness::with_jobs(jobs, || harness::run_ortho(&cfg, &out))??;
            eprintln!(
                "wrote {} variance rows and {} lemma rows to {}",
                res.variance.len(),
                res.lemmas.len(),
                out.display()
            );
        }
        Command::EmitFigure { results, figure } => {
            let header = figures::results_header(&results);
            let (path, data) = harness::emit_figure(&results, figure, &header)?;
            for m in &data.missing {
                eprintln!("missing: {m}");
            }
            println!("{}", path.display());
        }
    }
    Ok(())
}
