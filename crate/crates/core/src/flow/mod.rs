//! Galerkin-truncated modified Ricci flow on flat factors, the drift heat
//! equation `u_t = ℒu + ½u` along it, and residuals of the evolution
//! identities.

mod diagnostics;
mod run;
mod state;

pub use diagnostics::{
    commutator_residual, functional_residuals, gram_schmidt_frame, norm_residual_series, CommutatorResidual,
    FunctionalResiduals, FunctionalSnapshot, GramSchmidtFrame,
};
pub use run::{
    evolve_scalar, mixing_series, run_family, run_flow, step_modified_flow, FlowConfig,
    FlowTrajectory,
};
pub use state::FlowState;
