//! Mean-field interaction kernel estimation in one dimension.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod grid;
pub mod kernel;
mod linalg;
pub mod measures;
pub mod particles;
pub mod pde;
pub mod presets;
pub mod regression;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{
    discrete_convolution, finite_difference, trapezoid_integral, trapezoid_weights, Axis,
    FieldSamples, OffsetSamples, SpaceGrid, SpaceTimeField, TimeGrid,
};
pub use kernel::{kernel_from_phi, InteractionKernel, KernelKind, KernelSampling};
pub use measures::{
    assemble_F, assemble_G, compute_rho_general, compute_rho_radial, fold_radial,
    gaussian_closed_forms, support_of, weight_kernel, CauchyClosedForms, EmpiricalMeasure,
    GaussianClosedForms, KernelMatrix, KernelMatrixKind, Lattice, OffsetGrid, Support,
};
pub use particles::{
    empirical_density, simulate_particles, InitialSampler, MixtureComponent, ParticleEnsemble,
};
pub use pde::{solve_mean_field, SolverConfig};
pub use presets::{Example, BUILTIN_NAMES};
pub use regression::{
    assemble_A, assemble_P, assemble_b_data, assemble_b_oracle, build_basis, l2rho_distance,
    l2rho_error, loss_value, solve_unregularized, BasisMode, BasisSpec, CoefficientEstimate,
    L2Error, Method, RegParams, RegressionSystem,
};
pub use spectral::{
    add_relative_noise, compare_svd_report, eig_generalized, lambda_grid, lcurve_select, log_grid,
    picard_table, regularizer, rkhs_subspace, subspace_minimizer, svd_unweighted, tikhonov_solve,
    tsvd_solve, LCurve, LCurvePoint, PicardRow, PicardTable, RegNorm, SpectralDecomposition,
    SvdComparisonRow,
};
