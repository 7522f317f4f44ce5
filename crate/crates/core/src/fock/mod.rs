//! Multimode bosonic states as polynomials in creation operators.
//!
//! A state is stored as `f(a_1^†, …, a_M^†)|0⟩`: a sparse map from monomials
//! to complex coefficients. A linear network with mode-transfer matrix `S`
//! maps every `a_m^†` to `Σ_k S[k][m] a_k^†`, so evolution is plain polynomial
//! substitution followed by expansion. Fock amplitudes only appear when
//! probabilities are needed (`amplitude = coefficient · Π √(n_m!)`).

mod detection;
mod network;
mod polynomial;
mod registry;

pub use detection::{
    bundle_number_expectation, extract_qubit_state, post_select, qubit_amplitudes, Detection,
    DetectionModel, DualRail, PhotonConstraint, SelectionPattern,
};
pub use network::{apply_network, LinearNetwork};
pub use polynomial::{FockPolynomial, Monomial};
pub use registry::ModeRegistry;

use thiserror::Error;

/// Maximum deviation of `S†S` from the identity accepted for a network.
pub const UNITARY_TOL: f64 = 1e-10;
/// Coefficients with modulus below this are dropped after expansion.
pub const PRUNE_TOL: f64 = 1e-14;
/// Tolerance for squared-norm checks on states.
pub const NORM_TOL: f64 = 1e-9;
/// Default total photon-number cutoff.
pub const DEFAULT_PHOTON_CUTOFF: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("mode registry is empty")]
    EmptyRegistry,
    #[error("duplicate mode label `{0}`")]
    DuplicateMode(String),
    #[error("unknown mode label `{0}`")]
    UnknownMode(String),
    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },
    #[error("operands refer to different mode registries")]
    RegistryMismatch,
    #[error("matrix is {rows}x{cols} but the registry has {modes} modes")]
    DimensionMismatch { rows: usize, cols: usize, modes: usize },
    #[error("network is not unitary: max |S†S - I| = {0:.3e}")]
    NonUnitary(f64),
    #[error("parameter `{name}` = {value} outside [0, 1]")]
    ParameterOutOfRange { name: &'static str, value: f64 },
    #[error("state holds {found} photons, cutoff is {cutoff}")]
    CutoffExceeded { found: u32, cutoff: u32 },
    #[error("state is not normalized: squared norm {0}")]
    NotNormalized(f64),
    #[error("post-selection probability {0:.3e} too small to renormalize")]
    EmptySelection(f64),
    #[error("photon bundles overlap on mode `{0}`")]
    OverlappingBundles(String),
    #[error("selection pattern constrains nothing")]
    TrivialPattern,
    #[error("weight {0:.3e} lies outside the dual-rail qubit subspace")]
    OutsideQubitSubspace(f64),
    #[error("qubit state rejected: {0}")]
    Qubit(String),
}

#[cfg(test)]
mod tests;
