//! Smoothed free boundary problems with a vortex patch for the p-Laplacian on
//! rectangles: energies, critical-point solvers, alpha-continuation,
//! free-boundary diagnostics and a 1D shooting oracle.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

// `!(x > 0)` style guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod domain;
pub mod energy;
pub mod error;
pub mod freeboundary;
pub mod linalg;
pub mod oracle;
pub mod scalar;
pub mod smoothing;
pub mod solver;

pub use domain::{gradient_field, integrate_field, make_grid, Boundary, CellRule, Grid2D, ScalarField};
pub use energy::{
    energy_terms, hessian_vector, nodal_load, p_laplacian_residual, sharp_energy, smooth_energy,
    smooth_gradient, EnergyTerms, HessianOperator, ProblemParams, SolveReport, SolveStatus,
};
pub use error::{FieldIoError, FreeBoundaryError, GridError, OracleError, ParamError, SolverError};
pub use freeboundary::{
    extract_level_set, jump_residual_stats, one_sided_gradient, pharmonic_residual, FreeBoundaryReport,
    LevelSet, PHarmonicReport,
};
pub use oracle::{compare_to_oracle, shoot_slab, slab_brackets, Axis, OracleComparison, SlabSolution};
pub use scalar::Real;
pub use smoothing::{check_normalization, g_eval, G_eval, SmootherSpec};
pub use solver::{
    continue_alpha, find_critical_point, first_eigenvalue, minimize_smooth, morse_index, mountain_pass,
    solve_poisson_p, ContinuationReport, ContinuationSchedule, NewtonOptions,
};

pub type Grid = Grid2D<f64>;
pub type Field = ScalarField<f64>;
pub type Params = ProblemParams<f64>;
pub type Report = SolveReport<f64>;
pub type Slab = SlabSolution<f64>;
