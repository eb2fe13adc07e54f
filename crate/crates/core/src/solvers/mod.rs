//! Penalised-regression kernels.

mod cd;
mod least_squares;
mod path;
mod scaled;

pub use cd::{
    scad_penalty, scad_threshold, soft_threshold, CoordinateDescent, Penalty, SolveStatus,
    SolverOptions,
};
pub use least_squares::{ls_on_support, LsFit};
pub use path::{
    default_grid, kkt_violation, lambda_max, lasso_objective, lasso_path, lasso_path_with,
    scad_path, scad_path_with, standard_grid, LassoPath, SparseCoef, SCAD_A,
};
pub use scaled::{
    quantile_level, scaled_lasso, scaled_lasso_from, scaled_objective, sz2_k, sz2_lambda0,
    sz2_residual, universal_lambda0, ScaledLassoFit, MAX_OUTER_ITERS, SIGMA_TOL,
};
