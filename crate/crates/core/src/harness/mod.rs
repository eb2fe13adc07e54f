//! Simulation harness: configuration, grid and orthogonal runners, CSV
//! output and figure data.

pub mod config;
pub mod figures;
pub mod grid;
pub mod io;
pub mod ortho;
pub mod stats;

pub use config::{Cell, GridConfig, OrthoConfig, Overrides, Profile};
pub use figures::{emit_figure, figure_data, FigureData, FigureId, FigureRow};
pub use grid::{run_grid, simulate, summarise, GridResults, RawRecord, SummaryRow};
pub use ortho::{run_ortho, simulate_ortho, OrthoResults};

/// Run `f` on a dedicated pool of `jobs` threads, or the global pool when
/// `jobs` is `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => Ok(rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build()?.install(f)),
    }
}
