//! The three-photon optimal-state generator and its two CNOT gates.
//!
//! All networks act on the canonical eight-mode register
//! `(v_a, a_V, a_H, b_H, b_V, c_V, c_H, v_c)`. Photon `a` is the control of
//! both gates and the most significant qubit of the output register.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{
    apply_network, qubit_amplitudes, DetectionModel, DualRail, FockError, FockPolynomial,
    LinearNetwork, ModeRegistry, Monomial, NORM_TOL,
};
use crate::noise::{self, NoiseConfig, NoiseError};
use crate::qubit::{QubitError, QubitState};

pub const CANONICAL_MODES: [&str; 8] = ["v_a", "a_V", "a_H", "b_H", "b_V", "c_V", "c_H", "v_c"];

pub const V_A: usize = 0;
pub const A_V: usize = 1;
pub const A_H: usize = 2;
pub const B_H: usize = 3;
pub const B_V: usize = 4;
pub const C_V: usize = 5;
pub const C_H: usize = 6;
pub const V_C: usize = 7;

/// Default reflectivity of the NCN splitters.
pub const ETA1: f64 = 0.5;
/// Default reflectivity of the CN partially polarizing splitters.
pub const ETA2: f64 = 1.0 / 3.0;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Qubit(#[from] QubitError),
    #[error(transparent)]
    Noise(#[from] Box<NoiseError>),
    #[error("resource count N = {0} is not of the form 2^(K+1) - 1")]
    InadmissibleResources(usize),
    #[error("amplitudes are not normalized: squared norm {0}")]
    UnnormalizedAmplitudes(f64),
    #[error("GHZ index {0} out of range 0..4")]
    GhzIndex(usize),
}

pub fn canonical_registry() -> ModeRegistry {
    ModeRegistry::new(CANONICAL_MODES).expect("canonical labels are unique")
}

/// `(H, V)` mode indices for photons a, b and c, most significant first.
pub fn qubit_pairs() -> [(usize, usize); 3] {
    [(A_H, A_V), (B_H, B_V), (C_H, C_V)]
}

pub fn dual_rail_readout() -> DetectionModel {
    DetectionModel::new(qubit_pairs().iter().map(|&(h, v)| DualRail::single(h, v)).collect())
}

/// Which element to build.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateKind {
    Ncn,
    Cn,
    GenericBs { eta: f64, ports: (usize, usize) },
    Swap { ports: (usize, usize) },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub eta1: f64,
    pub eta2: f64,
}

impl GateSpec {
    pub fn new(kind: GateKind) -> Self {
        Self { kind, eta1: ETA1, eta2: ETA2 }
    }

    pub fn build(&self, registry: &ModeRegistry) -> Result<LinearNetwork, CircuitError> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(FockError::ParameterOutOfRange { name, value: v }.into());
            }
        }
        let net = match self.kind {
            GateKind::Ncn => ncn_with(self.eta1)?.embed(registry)?,
            GateKind::Cn => cn_with(self.eta1, self.eta2)?.embed(registry)?,
            GateKind::GenericBs { eta, ports: (i, j) } => {
                LinearNetwork::beam_splitter(registry, i, j, eta)?
            }
            GateKind::Swap { ports: (i, j) } => LinearNetwork::swap(registry, i, j)?,
        };
        Ok(net)
    }
}

/// The NCN transfer matrix as a function of the splitter reflectivity.
/// It is unitary only for `eta1 = 1/2`, the value used by the gate.
pub fn ncn_matrix(eta1: f64) -> DMatrix<f64> {
    let e = eta1;
    let r = (e * (1.0 - e)).sqrt();
    let mut s = DMatrix::identity(8, 8);
    let block = [
        [e, r, -r, 1.0 - e],
        [r, 1.0 - e, e, -r],
        [-r, e, 1.0 - e, r],
        [1.0 - e, -r, r, 1.0 - e],
    ];
    let idx = [A_V, A_H, B_H, B_V];
    for (i, row) in block.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            s[(idx[i], idx[j])] = v;
        }
    }
    s
}

/// The CN transfer matrix. The control's `V` rail is attenuated against
/// `v_a`; `a_H` meets `c_V` on the central splitter between two polarization
/// splitters on the target, and `c_H` is attenuated against `v_c`.
pub fn cn_matrix(eta1: f64, eta2: f64) -> DMatrix<f64> {
    let (e1, e2) = (eta1, eta2);
    let mut s = DMatrix::identity(8, 8);
    s[(V_A, V_A)] = -e2.sqrt();
    s[(V_A, A_V)] = (1.0 - e2).sqrt();
    s[(A_V, V_A)] = (1.0 - e2).sqrt();
    s[(A_V, A_V)] = e2.sqrt();
    let x = (e1 * (1.0 - e2)).sqrt();
    let y = ((1.0 - e1) * (1.0 - e2)).sqrt();
    let z = 2.0 * (e1 * e2 * (1.0 - e1)).sqrt();
    let w = (1.0 - 2.0 * e1) * e2.sqrt();
    let block = [
        [-e2.sqrt(), -x, y, 0.0],
        [x, w, z, y],
        [y, -z, w, -x],
        [0.0, y, x, -e2.sqrt()],
    ];
    let idx = [A_H, C_V, C_H, V_C];
    for (i, row) in block.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            s[(idx[i], idx[j])] = v;
        }
    }
    s
}

fn real_network(m: &DMatrix<f64>) -> Result<LinearNetwork, FockError> {
    LinearNetwork::new(&canonical_registry(), m.map(|v| Complex64::new(v, 0.0)))
}

fn ncn_with(eta1: f64) -> Result<LinearNetwork, FockError> {
    real_network(&ncn_matrix(eta1))
}

fn cn_with(eta1: f64, eta2: f64) -> Result<LinearNetwork, FockError> {
    real_network(&cn_matrix(eta1, eta2))
}

pub fn build_ncn() -> LinearNetwork {
    ncn_with(ETA1).expect("NCN is unitary at eta1 = 1/2")
}

pub fn build_cn() -> LinearNetwork {
    cn_with(ETA1, ETA2).expect("CN is unitary")
}

/// Half-wave plate phases (π on `a_V` and `c_V`) that map the CN output
/// frame onto the computational basis of the target state.
pub fn cn_output_frame() -> LinearNetwork {
    let mut phases = [0.0; 8];
    phases[A_V] = PI;
    phases[C_V] = PI;
    LinearNetwork::phases(&canonical_registry(), &phases).expect("diagonal phases are unitary")
}

/// NCN, then CN, then the output frame.
pub fn generator_network() -> LinearNetwork {
    build_ncn()
        .then(&build_cn())
        .and_then(|n| n.then(&cn_output_frame()))
        .expect("same registry")
}

/// `ψ_n ∝ sin((n+1)π/(N+2))`, normalized, for `N = 2^(K+1) − 1`.
pub fn optimal_amplitudes(n: usize) -> Result<DVector<f64>, CircuitError> {
    if n == 0 || !(n + 1).is_power_of_two() {
        return Err(CircuitError::InadmissibleResources(n));
    }
    let v = DVector::from_fn(n + 1, |k, _| ((k + 1) as f64 * PI / (n + 2) as f64).sin());
    Ok(v.normalize())
}

/// GHZ weights of the optimal N = 7 state: `α_j = √(2/𝒩) sin((j+1)π/9)`
/// with `𝒩 = 2 Σ_j sin²((j+1)π/9) = 9/2`.
pub fn optimal_alpha() -> [f64; 4] {
    let norm: f64 = 2.0 * (0..4).map(|j| ((j + 1) as f64 * PI / 9.0).sin().powi(2)).sum::<f64>();
    std::array::from_fn(|j| (2.0 / norm).sqrt() * ((j + 1) as f64 * PI / 9.0).sin())
}

/// Ideal qubit states the generator is compared against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetState {
    /// `Σ_j α_j |GHZ_j⟩`, equivalently `Σ_n ψ_n |n⟩` for N = 7.
    OptimalN7,
    /// `(|0 j⟩ + |1 j̄⟩)/√2` with `j` the two-bit value of qubits b, c.
    Ghz(usize),
    /// Two-qubit input `α₀|HH⟩ + α₁|HV⟩ + α₂|VH⟩ + α₃|VV⟩` on b, c.
    PsiBc([Complex64; 4]),
    /// NCN output `CNOT_ab (|+⟩_a ⊗ |ψ_bc⟩)`.
    Psi1([Complex64; 4]),
}

fn check_unit(alpha: &[Complex64]) -> Result<(), CircuitError> {
    let n: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(CircuitError::UnnormalizedAmplitudes(n));
    }
    Ok(())
}

pub fn real_alpha(alpha: [f64; 4]) -> [Complex64; 4] {
    alpha.map(|a| Complex64::new(a, 0.0))
}

impl TargetState {
    pub fn amplitudes(&self) -> Result<DVector<Complex64>, CircuitError> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v = match *self {
            TargetState::OptimalN7 => optimal_amplitudes(7)?.map(|x| Complex64::new(x, 0.0)),
            TargetState::Ghz(j) => {
                if j >= 4 {
                    return Err(CircuitError::GhzIndex(j));
                }
                let mut v = DVector::zeros(8);
                v[j] = Complex64::new(r, 0.0);
                v[7 - j] = Complex64::new(r, 0.0);
                v
            }
            TargetState::PsiBc(a) => {
                check_unit(&a)?;
                DVector::from_column_slice(&a)
            }
            TargetState::Psi1(a) => {
                check_unit(&a)?;
                let order = [a[0], a[1], a[2], a[3], a[2], a[3], a[0], a[1]];
                DVector::from_iterator(8, order.iter().map(|z| z * r))
            }
        };
        Ok(v)
    }

    pub fn qubit_state(&self) -> Result<QubitState, CircuitError> {
        Ok(QubitState::from_pure(&self.amplitudes()?)?)
    }
}

/// `Σ_j α_j a_H^† b_{x_j}^† c_{y_j}^† |0⟩` with `(x_j, y_j)` running over
/// HH, HV, VH, VV.
pub fn prepare_input(alpha: &[Complex64; 4]) -> Result<FockPolynomial, CircuitError> {
    check_unit(alpha)?;
    let reg = canonical_registry();
    let terms = [
        (Monomial::from_modes([A_H, B_H, C_H]), alpha[0]),
        (Monomial::from_modes([A_H, B_H, C_V]), alpha[1]),
        (Monomial::from_modes([A_H, B_V, C_H]), alpha[2]),
        (Monomial::from_modes([A_H, B_V, C_V]), alpha[3]),
    ];
    Ok(FockPolynomial::from_terms(&reg, terms)?)
}

/// Intermediate and final polynomials of the ideal generator.
#[derive(Clone, Debug)]
pub struct GeneratorTrace {
    pub input: FockPolynomial,
    pub after_ncn: FockPolynomial,
    pub output: FockPolynomial,
}

pub fn trace_generator(alpha: &[Complex64; 4]) -> Result<GeneratorTrace, CircuitError> {
    let input = prepare_input(alpha)?;
    let after_ncn = apply_network(&input, &build_ncn())?;
    let after_cn = apply_network(&after_ncn, &build_cn())?;
    let output = apply_network(&after_cn, &cn_output_frame())?;
    Ok(GeneratorTrace { input, after_ncn, output })
}

/// Post-selected register state and heralding statistics of a generator run.
#[derive(Clone, Debug)]
pub struct GeneratedState {
    pub state: QubitState,
    pub success_probability: f64,
    pub click_probability: f64,
}

/// Runs the generator on the optimal input. Without noise the output is the
/// pure optimal state with success probability 1/18; with noise the
/// configured imperfections are applied and auxiliary modes traced out.
pub fn generate_optimal_state(noise: Option<&NoiseConfig>) -> Result<GeneratedState, CircuitError> {
    match noise {
        Some(cfg) => {
            let out = noise::noisy_probe_state(cfg, cfg.default_mode()).map_err(Box::new)?;
            Ok(GeneratedState {
                state: out.state,
                success_probability: out.success_probability,
                click_probability: out.click_probability,
            })
        }
        None => {
            let trace = trace_generator(&real_alpha(optimal_alpha()))?;
            let det = dual_rail_readout().detect(&trace.output)?;
            Ok(GeneratedState {
                state: det.state,
                success_probability: det.success_probability,
                click_probability: det.click_probability,
            })
        }
    }
}

/// Register amplitudes (unnormalized) after post-selecting one photon per
/// pair, and the post-selection probability.
pub fn postselected_amplitudes(
    state: &FockPolynomial,
) -> Result<(DVector<Complex64>, f64), CircuitError> {
    let (amps, _) = qubit_amplitudes(state, &qubit_pairs())?;
    let p = amps.norm_squared();
    Ok((amps, p))
}
