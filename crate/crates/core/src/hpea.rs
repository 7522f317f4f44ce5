//! Adaptive bit-by-bit phase measurement on a register of `K+1` qubits.
//!
//! Qubit `k` sees the unknown phase `2^k` times. The most significant qubit
//! (`k = K`) is measured first in the X basis; every outcome read as 1
//! rotates the qubits still waiting by `R(π/2^(j−i))`. The bit of qubit `k`
//! is the `(k+1)`-th binary digit of `φ/2π`.
//!
//! Two execution modes share the same operators: [`run_protocol`] samples a
//! single measurement record, [`outcome_distribution`] enumerates every
//! branch exactly.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::CalibrationTable;
use crate::qubit::{kron_all, QubitState, PSD_TOL, STATE_TOL};

/// Largest trace drift tolerated during a protocol run.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HpeaError {
    #[error("input has dimension {dim}, expected 2^{qubits}")]
    Dimension { dim: usize, qubits: usize },
    #[error("trace drifted to {0} during the protocol")]
    TraceDrift(f64),
    #[error("calibration table has {found} entries, expected {expected}")]
    TableSize { found: usize, expected: usize },
    #[error("no sign-to-bit mapping reproduces dyadic determinism")]
    NoConsistentMapping,
    #[error("input state invalid: {0}")]
    InvalidInput(String),
}

/// `Û^m = diag(1, e^{imφ})`.
pub fn phase_unitary(m: u64, phi: f64) -> DMatrix<Complex64> {
    let mut u = DMatrix::identity(2, 2);
    u[(1, 1)] = Complex64::from_polar(1.0, m as f64 * phi);
    u
}

/// `R(θ) = diag(e^{iθ/2}, e^{−iθ/2})`.
pub fn feedback_rotation(theta: f64) -> DMatrix<Complex64> {
    let mut r = DMatrix::zeros(2, 2);
    r[(0, 0)] = Complex64::from_polar(1.0, theta / 2.0);
    r[(1, 1)] = Complex64::from_polar(1.0, -theta / 2.0);
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    On,
    Off,
}

/// Which X-measurement result is recorded as bit 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitMapping {
    PlusIsZero,
    MinusIsZero,
}

impl BitMapping {
    pub fn bit(self, plus: bool) -> u8 {
        match (self, plus) {
            (BitMapping::PlusIsZero, true) | (BitMapping::MinusIsZero, false) => 0,
            _ => 1,
        }
    }
}

/// Finds the sign-to-bit mapping under which the Fourier-basis product state
/// yields the bits of `j` with certainty at every phase `2πj/2^(K+1)`,
/// checked for `K = 0, 1, 2`.
pub fn bit_convention_check() -> Result<BitMapping, HpeaError> {
    'mapping: for mapping in [BitMapping::PlusIsZero, BitMapping::MinusIsZero] {
        for k in 0..=2usize {
            let cfg = ProtocolConfig::new(qpea_state(k), Estimator::Binary)?.with_mapping(mapping);
            let outcomes = 1usize << (k + 1);
            for j in 0..outcomes {
                let phi = TAU * j as f64 / outcomes as f64;
                let dist = outcome_distribution(&cfg, phi)?;
                if (dist.probabilities[j] - 1.0).abs() > 1e-9 {
                    continue 'mapping;
                }
            }
        }
        return Ok(mapping);
    }
    Err(HpeaError::NoConsistentMapping)
}

/// `|+⟩^{⊗(K+1)}`: every basis state with equal weight.
pub fn qpea_state(k: usize) -> QubitState {
    let d = 1usize << (k + 1);
    QubitState::from_real_amplitudes(&vec![1.0; d]).expect("power-of-two dimension")
}

/// How outcomes are turned into phase estimates.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    /// `φ_est = 2π Σ_k φ_k / 2^(k+1)`.
    Binary,
    /// Per-outcome estimates from a calibration table.
    Calibrated(CalibrationTable),
}

impl Estimator {
    /// Estimate for outcome index `y` of a register with `K+1` qubits.
    pub fn estimate(&self, k: usize, y: usize) -> f64 {
        match self {
            Estimator::Binary => binary_estimate(k, y),
            Estimator::Calibrated(t) => t.estimate(y),
        }
    }
}

/// Outcome index `y = Σ_k φ_k 2^(K−k)`; the binary estimate is `2πy/2^(K+1)`.
pub fn outcome_index(bits: &[u8]) -> usize {
    let k = bits.len() - 1;
    bits.iter().enumerate().map(|(i, &b)| (b as usize) << (k - i)).sum()
}

/// Bits `(φ_0, …, φ_K)` of outcome `y`.
pub fn outcome_bits(k: usize, y: usize) -> Vec<u8> {
    (0..=k).map(|i| ((y >> (k - i)) & 1) as u8).collect()
}

pub fn binary_estimate(k: usize, y: usize) -> f64 {
    TAU * y as f64 / (1usize << (k + 1)) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    /// Register has `K+1` qubits and uses `N = 2^(K+1) − 1` resources.
    pub k: usize,
    pub input: QubitState,
    pub estimator: Estimator,
    pub feedback: Feedback,
    pub mapping: BitMapping,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(input: QubitState, estimator: Estimator) -> Result<Self, HpeaError> {
        let q = input.qubits();
        if q == 0 {
            return Err(HpeaError::Dimension { dim: input.dim(), qubits: 1 });
        }
        let k = q - 1;
        if let Estimator::Calibrated(t) = &estimator {
            if t.len() != input.dim() {
                return Err(HpeaError::TableSize { found: t.len(), expected: input.dim() });
            }
        }
        let tr = input.trace();
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(HpeaError::InvalidInput(format!("trace {tr}")));
        }
        let min = input.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(HpeaError::InvalidInput(format!("eigenvalue {min}")));
        }
        Ok(Self {
            k,
            input,
            estimator,
            feedback: Feedback::On,
            mapping: BitMapping::PlusIsZero,
            seed: 0,
        })
    }

    pub fn with_feedback(mut self, feedback: Feedback) -> Self {
        self.feedback = feedback;
        self
    }

    pub fn with_mapping(mut self, mapping: BitMapping) -> Self {
        self.mapping = mapping;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn outcomes(&self) -> usize {
        1 << (self.k + 1)
    }

    pub fn resources(&self) -> usize {
        self.outcomes() - 1
    }
}

/// One execution of the protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolRun {
    pub phi_true: f64,
    /// `(φ_0, …, φ_K)`.
    pub bits: Vec<u8>,
    pub outcome: usize,
    pub phi_est: f64,
}

fn plus_minus(plus: bool) -> DMatrix<Complex64> {
    let s = if plus { 1.0 } else { -1.0 };
    let r = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_row_slice(1, 2, &[Complex64::new(r, 0.0), Complex64::new(s * r, 0.0)])
}

/// One protocol step on a register holding qubits `j, j−1, …, 0` (qubit `j`
/// is the first Kronecker factor): phase kick on qubit `j`, then its X
/// measurement. Returns the unnormalized post-measurement state of the
/// remaining qubits and the outcome probability for each sign.
fn step_branches(
    rho: &DMatrix<Complex64>,
    j: usize,
    phi: f64,
) -> [(DMatrix<Complex64>, f64); 2] {
    let rest = DMatrix::<Complex64>::identity(1 << j, 1 << j);
    let u = kron_all(&[phase_unitary(1u64 << j, phi), rest.clone()]);
    let kicked = &u * rho * u.adjoint();
    [true, false].map(|plus| {
        let proj = plus_minus(plus).kronecker(&rest);
        let reduced = &proj * &kicked * proj.adjoint();
        let p = reduced.trace().re;
        (reduced, p)
    })
}

/// Feedback after qubit `j` gave bit 1: `R(π/2^(j−i))` on every qubit `i < j`.
fn feedback_operator(j: usize) -> DMatrix<Complex64> {
    let factors: Vec<DMatrix<Complex64>> =
        (0..j).rev().map(|i| feedback_rotation(PI / (1u64 << (j - i)) as f64)).collect();
    kron_all(&factors)
}

fn apply_feedback(rho: DMatrix<Complex64>, j: usize) -> DMatrix<Complex64> {
    if j == 0 {
        return rho;
    }
    let v = feedback_operator(j);
    &v * rho * v.adjoint()
}

/// Samples one run with the generator seeded from `config.seed`.
pub fn run_protocol(config: &ProtocolConfig, phi_true: f64) -> Result<ProtocolRun, HpeaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_protocol_with_rng(config, phi_true, &mut rng)
}

/// Samples one run, drawing measurement results from `rng`.
pub fn run_protocol_with_rng<R: Rng + ?Sized>(
    config: &ProtocolConfig,
    phi_true: f64,
    rng: &mut R,
) -> Result<ProtocolRun, HpeaError> {
    let k = config.k;
    let mut rho = config.input.matrix().clone();
    let mut bits = vec![0u8; k + 1];
    for j in (0..=k).rev() {
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > TRACE_DRIFT_TOL {
            return Err(HpeaError::TraceDrift(tr));
        }
        let [(plus_state, p_plus), (minus_state, p_minus)] = step_branches(&rho, j, phi_true);
        let total = p_plus + p_minus;
        if (total - 1.0).abs() > TRACE_DRIFT_TOL {
            return Err(HpeaError::TraceDrift(total));
        }
        let plus = rng.random::<f64>() * total < p_plus;
        let (next, p) = if plus { (plus_state, p_plus) } else { (minus_state, p_minus) };
        let bit = config.mapping.bit(plus);
        bits[j] = bit;
        let next = next.unscale(p);
        rho = if bit == 1 && config.feedback == Feedback::On { apply_feedback(next, j) } else { next };
    }
    let outcome = outcome_index(&bits);
    Ok(ProtocolRun {
        phi_true,
        bits,
        outcome,
        phi_est: config.estimator.estimate(k, outcome),
    })
}

/// Exact probabilities of every outcome at one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    pub k: usize,
    pub phi: f64,
    /// Indexed by outcome `y`.
    pub probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// `Σ_y P(y|φ) e^{i(φ − φ_est(y))}`.
    pub fn resultant(&self, estimator: &Estimator) -> Complex64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(y, &p)| Complex64::from_polar(p, self.phi - estimator.estimate(self.k, y)))
            .sum()
    }
}

/// Enumerates all `2^(K+1)` measurement branches.
pub fn outcome_distribution(
    config: &ProtocolConfig,
    phi: f64,
) -> Result<OutcomeDistribution, HpeaError> {
    let k = config.k;
    let mut probabilities = vec![0.0; config.outcomes()];
    let mut stack: Vec<(DMatrix<Complex64>, usize, Vec<u8>, f64)> =
        vec![(config.input.matrix().clone(), k, vec![0u8; k + 1], 1.0)];
    while let Some((rho, j, bits, weight)) = stack.pop() {
        for (plus, (next, p)) in [true, false].into_iter().zip(step_branches(&rho, j, phi)) {
            if p <= 0.0 {
                continue;
            }
            let mut b = bits.clone();
            let bit = config.mapping.bit(plus);
            b[j] = bit;
            if j == 0 {
                probabilities[outcome_index(&b)] += weight * p;
                continue;
            }
            let next = next.unscale(p);
            let next =
                if bit == 1 && config.feedback == Feedback::On { apply_feedback(next, j) } else { next };
            stack.push((next, j - 1, b, weight * p));
        }
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > TRACE_DRIFT_TOL {
        return Err(HpeaError::TraceDrift(total));
    }
    Ok(OutcomeDistribution { k, phi, probabilities })
}

/// The same distribution computed without any unitaries on the waiting
/// qubits: qubit `j` is measured against `(⟨0| ± e^{iω_j}⟨1|)/√2`, where
/// `ω_j = 2^j φ − Σ_{i>j, φ_i=1} π/2^(i−j)` accumulates phase kick and
/// feedback.
pub fn outcome_distribution_by_reference_phase(
    config: &ProtocolConfig,
    phi: f64,
) -> Result<OutcomeDistribution, HpeaError> {
    let k = config.k;
    let mut probabilities = vec![0.0; config.outcomes()];
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for (y, slot) in probabilities.iter_mut().enumerate() {
        let bits = outcome_bits(k, y);
        let mut rho = config.input.matrix().clone();
        let mut prob = 1.0;
        for j in (0..=k).rev() {
            let mut omega = (1u64 << j) as f64 * phi;
            if config.feedback == Feedback::On {
                for i in j + 1..=k {
                    if bits[i] == 1 {
                        omega -= PI / (1u64 << (i - j)) as f64;
                    }
                }
            }
            let plus = match (config.mapping, bits[j]) {
                (BitMapping::PlusIsZero, b) => b == 0,
                (BitMapping::MinusIsZero, b) => b == 1,
            };
            let s = if plus { 1.0 } else { -1.0 };
            let bra = DMatrix::from_row_slice(
                1,
                2,
                &[Complex64::new(r, 0.0), Complex64::from_polar(s * r, omega)],
            );
            let proj = bra.kronecker(&DMatrix::<Complex64>::identity(1 << j, 1 << j));
            let reduced = &proj * &rho * proj.adjoint();
            let p = reduced.trace().re;
            prob *= p;
            if p <= 0.0 {
                break;
            }
            rho = reduced.unscale(p);
        }
        *slot = prob.max(0.0);
    }
    Ok(OutcomeDistribution { k, phi, probabilities })
}

/// `n_ens` independent runs with `φ_true` uniform on `[0, 2π)`. Run `i` draws
/// from ChaCha8 seeded with `seed` on stream `i`, so results do not depend on
/// thread scheduling and are identical for every configuration that shares
/// the seed.
pub fn run_ensemble(
    config: &ProtocolConfig,
    n_ens: usize,
    seed: u64,
) -> Result<Vec<ProtocolRun>, HpeaError> {
    (0..n_ens)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let phi = rng.random::<f64>() * TAU;
            run_protocol_with_rng(config, phi, &mut rng)
        })
        .collect()
}
