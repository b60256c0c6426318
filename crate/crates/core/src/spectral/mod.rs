//! Truncated Riesz-spectral data of the generator.

mod basis;
mod discretize;
mod flux;
mod oracle;

pub use basis::{
    eigensystem, gap_stability, mode_order, resolved_eigenvalues, semigroup_apply, GapStability,
    ModalBasis, NiceReport, CONDITION_TOL, GAP_SPREAD_TOL, GAP_TOL,
};
pub use discretize::{apply_operator, discretize_operator, Discretization, Stencil, MIN_CELLS};
pub use flux::{factorize_flux, FluxFactorization};
pub use oracle::{string_spectrum_oracle, OracleRoots};

#[cfg(test)]
mod tests;
