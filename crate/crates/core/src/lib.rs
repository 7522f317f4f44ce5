//! Simulation toolkit for Heisenberg-limited adaptive phase estimation with
//! photonic qubits.
//!
//! The crate is layered bottom-up:
//!
//! - [`fock`]: sparse creation-operator polynomials over named optical modes,
//!   linear-network evolution, post-selection and threshold-detector readout.
//! - [`circuits`]: the NCN and CN post-selected CNOT gates and the three-photon
//!   optimal-state generator built from them.
//! - [`noise`]: mode mismatch, detector loss and multi-pair SPDC emission.
//! - [`qubit`]: validated density matrices on dual-rail qubit registers.
//! - [`hpea`]: the adaptive bit-by-bit phase measurement with feedback, both
//!   sampled and exactly enumerated.
//! - [`metrics`]: Holevo statistics, analytic bounds, estimator calibration
//!   and the shot-noise-limit angle search.
//! - [`cli`]: configuration, density-matrix files, CSV output and the `hpea`
//!   command-line front end.
//!
//! ```
//! use hpea_photonics::{circuits, metrics};
//!
//! let generated = circuits::generate_optimal_state(None).unwrap();
//! let target = circuits::TargetState::OptimalN7.qubit_state().unwrap();
//! let f = metrics::fidelity(&generated.state, &target).unwrap();
//! assert!((f - 1.0).abs() < 1e-9);
//! assert!((generated.success_probability - 1.0 / 18.0).abs() < 1e-9);
//! ```

pub mod circuits;
pub mod cli;
pub mod fock;
pub mod hpea;
pub mod metrics;
pub mod noise;
pub mod qubit;

pub use num_complex::Complex64;
