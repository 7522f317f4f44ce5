use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use num_complex::Complex64;

use super::{FockError, FockPolynomial, Monomial, NORM_TOL};
use crate::qubit::QubitState;

/// Smallest success probability that can still be renormalized. Weak-source
/// heralding rates are legitimately tiny, so this only guards against zero.
const MIN_SELECTION: f64 = 1e-40;

/// Photon-number condition on one bundle of modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhotonConstraint {
    Exactly(u32),
    AtLeast(u32),
    Any,
}

impl PhotonConstraint {
    pub fn admits(self, n: u32) -> bool {
        match self {
            Self::Exactly(k) => n == k,
            Self::AtLeast(k) => n >= k,
            Self::Any => true,
        }
    }
}

/// Photon-number conditions on disjoint bundles of modes.
///
/// A bundle is a set of modes whose total photon number is constrained; a
/// single-mode bundle constrains one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionPattern {
    bundles: Vec<(Vec<usize>, PhotonConstraint)>,
}

fn check_disjoint(bundles: &[&[usize]], names: &[String]) -> Result<(), FockError> {
    let mut seen = BTreeSet::new();
    for bundle in bundles {
        for &m in *bundle {
            if m >= names.len() {
                return Err(FockError::ModeOutOfRange { index: m, modes: names.len() });
            }
            if !seen.insert(m) {
                return Err(FockError::OverlappingBundles(names[m].clone()));
            }
        }
    }
    Ok(())
}

impl SelectionPattern {
    pub fn new(bundles: Vec<(Vec<usize>, PhotonConstraint)>) -> Result<Self, FockError> {
        if bundles.iter().all(|(_, c)| *c == PhotonConstraint::Any) {
            return Err(FockError::TrivialPattern);
        }
        let mut seen = BTreeSet::new();
        for (modes, _) in &bundles {
            for &m in modes {
                if !seen.insert(m) {
                    return Err(FockError::OverlappingBundles(format!("#{m}")));
                }
            }
        }
        Ok(Self { bundles })
    }

    /// One constraint per mode, in registry order.
    pub fn per_mode(constraints: &[PhotonConstraint]) -> Result<Self, FockError> {
        Self::new(constraints.iter().enumerate().map(|(m, &c)| (vec![m], c)).collect())
    }

    /// Exactly one photon in each `(H, V)` pair; other modes unconstrained.
    pub fn one_per_pair(pairs: &[(usize, usize)]) -> Result<Self, FockError> {
        Self::new(pairs.iter().map(|&(h, v)| (vec![h, v], PhotonConstraint::Exactly(1))).collect())
    }

    pub fn bundles(&self) -> &[(Vec<usize>, PhotonConstraint)] {
        &self.bundles
    }

    pub fn admits(&self, mono: &Monomial) -> bool {
        self.bundles.iter().all(|(modes, c)| {
            let n: u32 = modes.iter().map(|&m| mono.occupation(m)).sum();
            c.admits(n)
        })
    }
}

fn require_normalized(state: &FockPolynomial) -> Result<f64, FockError> {
    let n = state.squared_norm();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(FockError::NotNormalized(n));
    }
    Ok(n)
}

/// Projects onto the photon-number subspace described by `pattern`.
///
/// Returns the kept part (renormalized on request) and its probability.
pub fn post_select(
    state: &FockPolynomial,
    pattern: &SelectionPattern,
    renormalize: bool,
) -> Result<(FockPolynomial, f64), FockError> {
    require_normalized(state)?;
    for (modes, _) in pattern.bundles() {
        for &m in modes {
            state.registry().check_mode(m)?;
        }
    }
    let kept = state.filtered(|m| pattern.admits(m));
    let p = kept.squared_norm();
    if !renormalize {
        return Ok((kept, p));
    }
    if p < MIN_SELECTION {
        return Err(FockError::EmptySelection(p));
    }
    Ok((kept.scaled(Complex64::new(1.0 / p.sqrt(), 0.0)), p))
}

/// `⟨Π_b N_b⟩` where `N_b` is the total photon number in bundle `b`.
pub fn bundle_number_expectation(
    state: &FockPolynomial,
    bundles: &[Vec<usize>],
) -> Result<f64, FockError> {
    let refs: Vec<&[usize]> = bundles.iter().map(Vec::as_slice).collect();
    check_disjoint(&refs, state.registry().names())?;
    let norm = require_normalized(state)?;
    let total: f64 = state
        .terms()
        .map(|(m, c)| {
            let weight = c.norm_sqr() * m.fock_factor().powi(2);
            let prod: f64 = bundles
                .iter()
                .map(|b| b.iter().map(|&k| m.occupation(k)).sum::<u32>() as f64)
                .product();
            weight * prod
        })
        .sum();
    Ok(total / norm)
}

/// Qubit-register amplitudes of a dual-rail state plus the squared weight
/// found outside the register subspace. The first pair is the most
/// significant qubit; a photon in the `V` mode reads as 1.
pub fn qubit_amplitudes(
    state: &FockPolynomial,
    pairs: &[(usize, usize)],
) -> Result<(DVector<Complex64>, f64), FockError> {
    for &(h, v) in pairs {
        state.registry().check_mode(h)?;
        state.registry().check_mode(v)?;
    }
    let mut amps = DVector::zeros(1 << pairs.len());
    let mut outside = 0.0;
    for (mono, c) in state.terms() {
        let amp = c * mono.fock_factor();
        let mut idx = 0usize;
        let mut ok = mono.photon_count() as usize == pairs.len();
        if ok {
            for &(h, v) in pairs {
                let (nh, nv) = (mono.occupation(h), mono.occupation(v));
                if nh + nv != 1 {
                    ok = false;
                    break;
                }
                idx = 2 * idx + nv as usize;
            }
        }
        if ok {
            amps[idx] += amp;
        } else {
            outside += amp.norm_sqr();
        }
    }
    Ok((amps, outside))
}

/// Reads a post-selected dual-rail state as a pure qubit density matrix.
pub fn extract_qubit_state(
    state: &FockPolynomial,
    pairs: &[(usize, usize)],
) -> Result<QubitState, FockError> {
    let (amps, outside) = qubit_amplitudes(state, pairs)?;
    let total = state.squared_norm();
    if total <= 0.0 || outside / total > NORM_TOL {
        return Err(FockError::OutsideQubitSubspace(outside));
    }
    QubitState::from_pure(&amps).map_err(|e| FockError::Qubit(e.to_string()))
}

/// A dual-rail qubit read out by two detectors. Each detector may collect
/// several modes (internal label copies of the same spatial mode); `h[i]`
/// and `v[i]` belong to the same label.
#[derive(Clone, Debug, PartialEq)]
pub struct DualRail {
    pub h: Vec<usize>,
    pub v: Vec<usize>,
}

impl DualRail {
    pub fn single(h: usize, v: usize) -> Self {
        Self { h: vec![h], v: vec![v] }
    }
}

/// Coincidence readout of a dual-rail register with optional heralding
/// detectors. Every mode outside the pairs is traced out, which makes the
/// conditional qubit state mixed in general.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionModel {
    pub pairs: Vec<DualRail>,
    pub heralds: Vec<(Vec<usize>, PhotonConstraint)>,
}

/// Outcome of [`DetectionModel::detect`].
#[derive(Clone, Debug)]
pub struct Detection {
    /// Qubit state conditioned on exactly one detected photon per pair.
    pub state: QubitState,
    /// Weight of the events that define `state`.
    pub success_probability: f64,
    /// Weight of threshold coincidences: at least one photon per pair.
    pub click_probability: f64,
}

impl DetectionModel {
    pub fn new(pairs: Vec<DualRail>) -> Self {
        Self { pairs, heralds: Vec::new() }
    }

    pub fn with_herald(mut self, modes: Vec<usize>, constraint: PhotonConstraint) -> Self {
        self.heralds.push((modes, constraint));
        self
    }

    /// Applies the readout. Probabilities are absolute weights of the input
    /// polynomial, so for a unit-norm state they are event probabilities.
    pub fn detect(&self, state: &FockPolynomial) -> Result<Detection, FockError> {
        let m = state.registry().len();
        let mut pair_of = vec![None; m];
        for (p, rail) in self.pairs.iter().enumerate() {
            if rail.h.len() != rail.v.len() {
                return Err(FockError::DimensionMismatch {
                    rows: rail.h.len(),
                    cols: rail.v.len(),
                    modes: m,
                });
            }
            for (label, (&h, &v)) in rail.h.iter().zip(&rail.v).enumerate() {
                state.registry().check_mode(h)?;
                state.registry().check_mode(v)?;
                for (mode, bit) in [(h, 0u8), (v, 1u8)] {
                    if pair_of[mode].is_some() {
                        return Err(FockError::OverlappingBundles(
                            state.registry().name(mode).to_string(),
                        ));
                    }
                    pair_of[mode] = Some((p, label as u16, bit));
                }
            }
        }
        for (modes, _) in &self.heralds {
            for &k in modes {
                state.registry().check_mode(k)?;
            }
        }

        let k = self.pairs.len();
        type EnvKey = (Vec<u16>, Vec<(usize, u32)>);
        let mut branches: BTreeMap<EnvKey, DVector<Complex64>> = BTreeMap::new();
        let mut click = 0.0;
        for (mono, c) in state.terms() {
            let herald_ok = self.heralds.iter().all(|(modes, cons)| {
                cons.admits(modes.iter().map(|&q| mono.occupation(q)).sum())
            });
            if !herald_ok {
                continue;
            }
            let mut counts = vec![0u32; k];
            let mut labels = vec![0u16; k];
            let mut idx_bits = vec![0u8; k];
            let mut env = Vec::new();
            for (mode, n) in mono.occupied() {
                match pair_of[mode] {
                    Some((p, label, bit)) => {
                        counts[p] += n;
                        labels[p] = label;
                        idx_bits[p] = bit;
                    }
                    None => env.push((mode, n)),
                }
            }
            let weight = c.norm_sqr() * mono.fock_factor().powi(2);
            if counts.iter().all(|&n| n >= 1) {
                click += weight;
            }
            if counts.iter().any(|&n| n != 1) {
                continue;
            }
            let idx = idx_bits.iter().fold(0usize, |acc, &b| 2 * acc + b as usize);
            let amp = c * mono.fock_factor();
            branches.entry((labels, env)).or_insert_with(|| DVector::zeros(1 << k))[idx] += amp;
        }
        let vectors: Vec<DVector<Complex64>> = branches.into_values().collect();
        let success: f64 = vectors.iter().map(|v| v.norm_squared()).sum();
        if success < MIN_SELECTION {
            return Err(FockError::EmptySelection(success));
        }
        let state = QubitState::from_unnormalized_vectors(&vectors)
            .map_err(|e| FockError::Qubit(e.to_string()))?;
        Ok(Detection { state, success_probability: success, click_probability: click })
    }
}
