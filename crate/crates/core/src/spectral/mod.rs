//! Weighted quadratic forms, lowest eigenpairs of the drift Laplacian, and
//! the weighted functionals built from them.

mod eigen;
mod forms;
mod functionals;

pub(crate) use eigen::cholesky_reduce;
pub use eigen::{
    lowest_eigenpairs, lowest_generalized, subspace_iteration, SpectralResult, SpectrumRecord, DEFAULT_TOLERANCE,
};
pub use forms::{assemble_forms, kron_apply, FactorForms, QuadraticForms};
pub use functionals::{
    bochner_residual, defect_applied, defect_quadratic, drift_divergence, drift_laplacian,
    energy_profile, grad_dot, gradient, hessian_norm_sq, hessian_norm_sq_field, weighted_pairings,
    BochnerResidual, EnergyProfile, Pairings,
};
