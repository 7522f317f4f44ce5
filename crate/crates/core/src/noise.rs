//! Experimental imperfections: mode mismatch, detector loss and multi-pair
//! emission from the down-conversion sources.
//!
//! Mode mismatch is modelled with internal labels. Every mismatch site owns a
//! private copy of the eight spatial modes; a splitter of reflectivity `ξ`
//! leaves amplitude `√ξ` in the shared copy and sends `√(1−ξ)` to the private
//! one. Optical elements act identically on every copy, and a detector sums
//! over copies, so private components reach the detectors but never
//! interfere with the shared ones.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{
    self, build_cn, build_ncn, canonical_registry, cn_output_frame, optimal_alpha, prepare_input,
    qubit_pairs, real_alpha, CircuitError, CANONICAL_MODES,
};
use crate::fock::{
    apply_network, bundle_number_expectation, DetectionModel, DualRail, FockError,
    FockPolynomial, LinearNetwork, ModeRegistry, Monomial, PhotonConstraint,
};
use crate::qubit::QubitState;

/// Default detection-path transmissivity.
pub const DEFAULT_ZETA: f64 = 0.13;
/// Largest accepted SPDC efficiency.
pub const MAX_EPSILON: f64 = 0.2;
/// Name of the heralding (trigger) mode.
pub const TRIGGER: &str = "t";

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("parameter `{name}` = {value} outside [{lo}, {hi}]")]
    Parameter { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("non-positive denominator in efficiency estimate")]
    Denominator,
    #[error("target amplitudes are not normalized: squared norm {0}")]
    Unnormalized(f64),
    #[error("Schmidt reconstruction error {0:.3e}")]
    Schmidt(f64),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Circuit(#[from] Box<CircuitError>),
}

impl From<CircuitError> for NoiseError {
    fn from(e: CircuitError) -> Self {
        NoiseError::Circuit(Box::new(e))
    }
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), NoiseError> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(NoiseError::Parameter { name, value, lo, hi })
    }
}

/// Amplitude convention for the order-`n` term of a down-conversion source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpdcConvention {
    /// `(ε^n/n!) (a^† b^†)^n`: ket amplitude `ε^n` on `|n, n⟩`.
    Operator,
    /// Ket amplitude `ε^n/n!` on `|n, n⟩`, as in the two-mode squeezed
    /// vacuum expansion.
    #[default]
    FockKet,
}

/// Interfering inputs that carry a mismatch splitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchSite {
    /// Photon a entering the NCN polarizing splitter.
    NcnA,
    /// Photon b entering the NCN polarizing splitter.
    NcnB,
    /// Photon a entering the CN central splitter.
    CnA,
    /// Photon c entering the CN central splitter.
    CnC,
}

impl MismatchSite {
    pub const ALL: [MismatchSite; 4] =
        [MismatchSite::NcnA, MismatchSite::NcnB, MismatchSite::CnA, MismatchSite::CnC];

    /// Canonical modes of the photon passing the site.
    pub fn modes(self) -> [usize; 2] {
        match self {
            MismatchSite::NcnA | MismatchSite::CnA => [circuits::A_H, circuits::A_V],
            MismatchSite::NcnB => [circuits::B_H, circuits::B_V],
            MismatchSite::CnC => [circuits::C_H, circuits::C_V],
        }
    }

    pub fn before_cn(self) -> bool {
        matches!(self, MismatchSite::CnA | MismatchSite::CnC)
    }
}

/// Imperfection parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Mode overlap at every mismatch site unless overridden.
    pub xi: f64,
    pub site_xi: BTreeMap<MismatchSite, f64>,
    /// Transmissivity of every detection path.
    pub zeta: f64,
    /// Efficiency of the heralded single-photon source (photon a).
    pub eps1: f64,
    /// Efficiency of the entangled-pair source (photons b, c).
    pub eps2: f64,
    pub convention: SpdcConvention,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            xi: 1.0,
            site_xi: BTreeMap::new(),
            zeta: DEFAULT_ZETA,
            eps1: 0.0,
            eps2: 0.0,
            convention: SpdcConvention::FockKet,
        }
    }
}

impl NoiseConfig {
    pub fn mismatch(xi: f64) -> Self {
        Self { xi, ..Self::default() }
    }

    pub fn spdc(eps1: f64, eps2: f64) -> Self {
        Self { eps1, eps2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        check_range("xi", self.xi, 0.0, 1.0)?;
        for v in self.site_xi.values() {
            check_range("xi", *v, 0.0, 1.0)?;
        }
        check_range("zeta", self.zeta, 0.0, 1.0)?;
        check_range("eps1", self.eps1, 0.0, MAX_EPSILON)?;
        check_range("eps2", self.eps2, 0.0, MAX_EPSILON)?;
        Ok(())
    }

    pub fn site_overlap(&self, site: MismatchSite) -> f64 {
        self.site_xi.get(&site).copied().unwrap_or(self.xi)
    }

    fn has_mismatch(&self) -> bool {
        MismatchSite::ALL.iter().any(|&s| self.site_overlap(s) < 1.0)
    }

    fn has_spdc(&self) -> bool {
        self.eps1 > 0.0 || self.eps2 > 0.0
    }

    /// The model implied by which parameters are non-trivial.
    pub fn default_mode(&self) -> NoiseMode {
        match (self.has_mismatch(), self.has_spdc()) {
            (true, true) => NoiseMode::Combined,
            (false, true) => NoiseMode::SpdcHigherOrder,
            _ => NoiseMode::Mismatch,
        }
    }
}

/// Which imperfections [`noisy_probe_state`] simulates. Detector loss is
/// always included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Ideal three-photon input, mismatch at every site with `ξ < 1`.
    Mismatch,
    /// Truncated down-conversion sources, perfect mode overlap.
    SpdcHigherOrder,
    /// Both.
    Combined,
}

/// Mismatch splitter between shared and private copies of the listed
/// modes: `shared → √ξ shared + √(1−ξ) private`,
/// `private → −√(1−ξ) shared + √ξ private`.
pub fn insert_mismatch(
    registry: &ModeRegistry,
    shared_private: &[(usize, usize)],
    xi: f64,
) -> Result<LinearNetwork, NoiseError> {
    check_range("xi", xi, 0.0, 1.0)?;
    let mut s = DMatrix::<Complex64>::identity(registry.len(), registry.len());
    let (r, t) = (xi.sqrt(), (1.0 - xi).sqrt());
    for &(i, j) in shared_private {
        registry.check_mode(i)?;
        registry.check_mode(j)?;
        s[(i, i)] = Complex64::new(r, 0.0);
        s[(j, i)] = Complex64::new(t, 0.0);
        s[(i, j)] = Complex64::new(-t, 0.0);
        s[(j, j)] = Complex64::new(r, 0.0);
    }
    Ok(LinearNetwork::new(registry, s)?)
}

/// Appends one loss mode per detection path and returns the extended
/// registry with the loss network on it. Each path keeps amplitude `√ζ`.
pub fn insert_loss(
    registry: &ModeRegistry,
    paths: &[usize],
    zeta: f64,
) -> Result<(ModeRegistry, LinearNetwork), NoiseError> {
    check_range("zeta", zeta, 0.0, 1.0)?;
    for &p in paths {
        registry.check_mode(p)?;
    }
    let extended =
        registry.extended(paths.iter().map(|&p| format!("loss:{}", registry.name(p))))?;
    let m = extended.len();
    let mut s = DMatrix::<Complex64>::identity(m, m);
    let (r, t) = (zeta.sqrt(), (1.0 - zeta).sqrt());
    for (k, &d) in paths.iter().enumerate() {
        let l = registry.len() + k;
        s[(d, d)] = Complex64::new(r, 0.0);
        s[(l, d)] = Complex64::new(t, 0.0);
        s[(d, l)] = Complex64::new(-t, 0.0);
        s[(l, l)] = Complex64::new(r, 0.0);
    }
    Ok((extended.clone(), LinearNetwork::new(&extended, s)?))
}

/// Embeds `state` into the loss-extended registry and applies the loss.
pub fn apply_loss(
    state: &FockPolynomial,
    paths: &[usize],
    zeta: f64,
) -> Result<FockPolynomial, NoiseError> {
    let (reg, net) = insert_loss(state.registry(), paths, zeta)?;
    Ok(apply_network(&state.embed(&reg)?, &net)?)
}

/// Coincidence probability and dip visibility of the two-photon bench.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomResult {
    pub p_coin: f64,
    pub visibility: f64,
}

/// Balanced-splitter closed form: `p_coin = (1 − ξ₁ξ₂)/2`, `ν = ξ₁ξ₂`.
pub fn hom_visibility(xi1: f64, xi2: f64) -> Result<HomResult, NoiseError> {
    check_range("xi1", xi1, 0.0, 1.0)?;
    check_range("xi2", xi2, 0.0, 1.0)?;
    Ok(HomResult { p_coin: 0.5 * (1.0 - xi1 * xi2), visibility: xi1 * xi2 })
}

/// Coincidence probability for a splitter of reflectivity `eta`:
/// `η² + (1−η)² − 2η(1−η)ξ₁ξ₂`.
pub fn hom_coincidence(eta: f64, xi1: f64, xi2: f64) -> f64 {
    1.0 - 2.0 * eta * (1.0 - eta) - 2.0 * eta * (1.0 - eta) * xi1 * xi2
}

/// Coincidence probability computed in the Fock picture on the six-mode
/// bench: photons in `a` and `b` each pass a mismatch splitter into a
/// private copy, then all copies meet on one splitter.
pub fn hom_brute_force(xi1: f64, xi2: f64, eta: f64) -> Result<f64, NoiseError> {
    let reg = ModeRegistry::new(["a", "b", "a#1", "b#1", "a#2", "b#2"])?;
    let input = FockPolynomial::monomial(&reg, &["a", "b"], Complex64::new(1.0, 0.0))?;
    let split = insert_mismatch(&reg, &[(0, 2)], xi1)?
        .then(&insert_mismatch(&reg, &[(1, 5)], xi2)?)?;
    let pair = ModeRegistry::new(["x", "y"])?;
    let bs = LinearNetwork::beam_splitter(&pair, 0, 1, eta)?
        .lift_to_copies(&reg, &[vec![0, 1], vec![2, 3], vec![4, 5]])?;
    let out = apply_network(&apply_network(&input, &split)?, &bs)?;
    Ok(bundle_number_expectation(&out, &[vec![0, 2, 4], vec![1, 3, 5]])?)
}

/// Which down-conversion source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpdcSource {
    /// Photon `a_H` heralded by its partner in the trigger mode, to third order.
    Heralded { eps: f64 },
    /// Polarization-entangled pair `γ b_H c_H + β b_V c_V`, to second order.
    EntangledPair { eps: f64, gamma: f64, beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdcSpec {
    pub source: SpdcSource,
    pub convention: SpdcConvention,
}

impl SpdcSpec {
    pub fn max_order(&self) -> u32 {
        match self.source {
            SpdcSource::Heralded { .. } => 3,
            SpdcSource::EntangledPair { .. } => 2,
        }
    }

    fn validate(&self) -> Result<(), NoiseError> {
        match self.source {
            SpdcSource::Heralded { eps } => check_range("eps", eps, 0.0, MAX_EPSILON),
            SpdcSource::EntangledPair { eps, gamma, beta } => {
                check_range("eps", eps, 0.0, MAX_EPSILON)?;
                let n = gamma * gamma + beta * beta;
                if (n - 1.0).abs() > 1e-9 {
                    return Err(NoiseError::Unnormalized(n));
                }
                Ok(())
            }
        }
    }
}

/// Canonical modes plus the trigger.
pub fn spdc_registry() -> ModeRegistry {
    canonical_registry().extended([TRIGGER]).expect("trigger label is new")
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// The order-`n` terms of each source, `n = 0..=max_order`, as separate
/// polynomials on [`spdc_registry`]. Order 0 is the vacuum.
pub fn spdc_orders(spec: &SpdcSpec) -> Result<Vec<FockPolynomial>, NoiseError> {
    spec.validate()?;
    let reg = spdc_registry();
    let t = reg.index(TRIGGER)?;
    let (eps, pair_terms): (f64, Vec<(Monomial, f64)>) = match spec.source {
        SpdcSource::Heralded { eps } => (eps, vec![(Monomial::from_modes([circuits::A_H, t]), 1.0)]),
        SpdcSource::EntangledPair { eps, gamma, beta } => (
            eps,
            vec![
                (Monomial::from_modes([circuits::B_H, circuits::C_H]), gamma),
                (Monomial::from_modes([circuits::B_V, circuits::C_V]), beta),
            ],
        ),
    };
    let base = FockPolynomial::from_terms(
        &reg,
        pair_terms.into_iter().map(|(m, c)| (m, Complex64::new(c, 0.0))),
    )?;
    let mut orders = vec![FockPolynomial::vacuum(&reg)];
    let mut power = FockPolynomial::vacuum(&reg);
    for n in 1..=spec.max_order() {
        power = power.product(&base)?;
        let mut scale = eps.powi(n as i32) / factorial(n);
        if spec.convention == SpdcConvention::FockKet {
            scale /= factorial(n);
        }
        orders.push(power.scaled(Complex64::new(scale, 0.0)));
    }
    Ok(orders)
}

/// The truncated (unnormalized) source state `Σ_n order_n`.
pub fn spdc_state(spec: &SpdcSpec) -> Result<FockPolynomial, NoiseError> {
    let orders = spdc_orders(spec)?;
    let mut acc = FockPolynomial::zero(&spdc_registry());
    for o in &orders {
        acc = acc.sum(o)?;
    }
    Ok(acc)
}

/// Schmidt form of a real two-qubit target: `γ`, `β` and the polarization
/// rotation angles that map `γ b_H c_H + β b_V c_V` onto it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchmidtForm {
    pub gamma: f64,
    pub beta: f64,
    pub theta_b: f64,
    pub theta_c: f64,
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

impl SchmidtForm {
    /// `R(ϑ_b) diag(γ, β) R(ϑ_c)ᵀ` flattened as `(HH, HV, VH, VV)`.
    pub fn reconstruct(&self) -> [f64; 4] {
        let a = rotation(self.theta_b)
            * Matrix2::new(self.gamma, 0.0, 0.0, self.beta)
            * rotation(self.theta_c).transpose();
        [a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]]
    }
}

/// Real singular-value decomposition of `A = [[α₀, α₁], [α₂, α₃]]` with both
/// orthogonal factors chosen as proper rotations.
pub fn schmidt_rotations(alpha: [f64; 4]) -> Result<SchmidtForm, NoiseError> {
    let n: f64 = alpha.iter().map(|a| a * a).sum();
    if (n - 1.0).abs() > 1e-9 {
        return Err(NoiseError::Unnormalized(n));
    }
    let form = if alpha[1].abs() < 1e-15 && alpha[2].abs() < 1e-15 {
        SchmidtForm { gamma: alpha[0], beta: alpha[3], theta_b: 0.0, theta_c: 0.0 }
    } else {
        let a = Matrix2::new(alpha[0], alpha[1], alpha[2], alpha[3]);
        let svd = a.svd(true, true);
        let mut u = svd.u.expect("requested U");
        let mut v = svd.v_t.expect("requested V").transpose();
        let mut sign = 1.0;
        if u.determinant() < 0.0 {
            u.column_mut(1).neg_mut();
            sign = -sign;
        }
        if v.determinant() < 0.0 {
            v.column_mut(1).neg_mut();
            sign = -sign;
        }
        SchmidtForm {
            gamma: svd.singular_values[0],
            beta: sign * svd.singular_values[1],
            theta_b: u[(1, 0)].atan2(u[(0, 0)]),
            theta_c: v[(1, 0)].atan2(v[(0, 0)]),
        }
    };
    let back = form.reconstruct();
    let err = back.iter().zip(&alpha).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if err > 1e-10 {
        return Err(NoiseError::Schmidt(err));
    }
    Ok(form)
}

/// `ε = √(C / (R λ_i λ_s))` from the coincidence rate `C` at pulse rate `R`
/// with heralding efficiencies `λ_i`, `λ_s`.
pub fn epsilon_from_counts(
    coincidences: f64,
    rate: f64,
    lambda_i: f64,
    lambda_s: f64,
) -> Result<f64, NoiseError> {
    let denom = rate * lambda_i * lambda_s;
    if denom.is_nan() || denom <= 0.0 || coincidences < 0.0 {
        return Err(NoiseError::Denominator);
    }
    Ok((coincidences / denom).sqrt())
}

/// Heralded-source and pair-source orders that together carry three photons
/// into the circuit at the leading orders kept by the model.
pub const KEPT_ORDERS: [(usize, usize); 4] = [(1, 1), (1, 2), (2, 1), (3, 0)];

/// Both sources with the pair rotated onto the optimal `ψ_bc`.
pub fn probe_source(cfg: &NoiseConfig) -> Result<FockPolynomial, NoiseError> {
    let schmidt = schmidt_rotations(optimal_alpha())?;
    let heralded = spdc_orders(&SpdcSpec {
        source: SpdcSource::Heralded { eps: cfg.eps1 },
        convention: cfg.convention,
    })?;
    let pair = spdc_orders(&SpdcSpec {
        source: SpdcSource::EntangledPair {
            eps: cfg.eps2,
            gamma: schmidt.gamma,
            beta: schmidt.beta,
        },
        convention: cfg.convention,
    })?;
    let reg = spdc_registry();
    let mut acc = FockPolynomial::zero(&reg);
    for &(i, j) in &KEPT_ORDERS {
        acc = acc.sum(&heralded[i].product(&pair[j])?)?;
    }
    let rot = LinearNetwork::polarization_rotation(&reg, circuits::B_H, circuits::B_V, schmidt.theta_b)?
        .then(&LinearNetwork::polarization_rotation(
            &reg,
            circuits::C_H,
            circuits::C_V,
            schmidt.theta_c,
        )?)?;
    Ok(apply_network(&acc, &rot)?)
}

/// Output of [`noisy_probe_state`].
#[derive(Clone, Debug)]
pub struct NoisyProbe {
    pub state: QubitState,
    /// Weight of events with exactly one detected photon per qubit (and a
    /// trigger click when the heralded source is used).
    pub success_probability: f64,
    /// Weight of threshold coincidences (at least one photon per qubit).
    pub click_probability: f64,
    /// Number of terms in the final polynomial.
    pub terms: usize,
}

fn label_name(name: &str, label: usize) -> String {
    if label == 0 {
        name.to_string()
    } else {
        format!("{name}#{label}")
    }
}

/// Runs source, mismatch sites, gates, frame and detector loss, then reads
/// out the register with the auxiliary modes traced out.
pub fn noisy_probe_state(cfg: &NoiseConfig, mode: NoiseMode) -> Result<NoisyProbe, NoiseError> {
    cfg.validate()?;
    let use_mismatch = matches!(mode, NoiseMode::Mismatch | NoiseMode::Combined);
    let use_spdc = matches!(mode, NoiseMode::SpdcHigherOrder | NoiseMode::Combined);

    // Sites with perfect overlap do nothing and are skipped.
    let sites: Vec<(MismatchSite, f64)> = if use_mismatch {
        MismatchSite::ALL
            .iter()
            .map(|&s| (s, cfg.site_overlap(s)))
            .filter(|&(_, xi)| xi < 1.0)
            .collect()
    } else {
        Vec::new()
    };
    let labels = 1 + sites.len();
    let mut names: Vec<String> = (0..labels)
        .flat_map(|l| CANONICAL_MODES.iter().map(move |n| label_name(n, l)))
        .collect();
    if use_spdc {
        names.push(TRIGGER.to_string());
    }
    let reg = ModeRegistry::new(names)?;
    let copy = |label: usize, mode: usize| label * CANONICAL_MODES.len() + mode;

    let source = if use_spdc {
        probe_source(cfg)?
    } else {
        prepare_input(&real_alpha(optimal_alpha()))?
    };
    let mut state = source.embed(&reg)?;

    let all_copies: Vec<Vec<usize>> =
        (0..labels).map(|l| (0..CANONICAL_MODES.len()).map(|m| copy(l, m)).collect()).collect();
    let ncn = build_ncn().lift_to_copies(&reg, &all_copies)?;
    let cn = build_cn().then(&cn_output_frame())?.lift_to_copies(&reg, &all_copies)?;

    let site_net = |stage_cn: bool| -> Result<Option<LinearNetwork>, NoiseError> {
        let mut net: Option<LinearNetwork> = None;
        for (k, &(site, xi)) in sites.iter().enumerate() {
            if site.before_cn() != stage_cn {
                continue;
            }
            let pairs: Vec<(usize, usize)> =
                site.modes().iter().map(|&m| (copy(0, m), copy(k + 1, m))).collect();
            let s = insert_mismatch(&reg, &pairs, xi)?;
            net = Some(match net {
                Some(n) => n.then(&s)?,
                None => s,
            });
        }
        Ok(net)
    };

    if let Some(n) = site_net(false)? {
        state = apply_network(&state, &n)?;
    }
    state = apply_network(&state, &ncn)?;
    if let Some(n) = site_net(true)? {
        state = apply_network(&state, &n)?;
    }
    state = apply_network(&state, &cn)?;

    let mut paths: Vec<usize> = Vec::new();
    for l in 0..labels {
        for (h, v) in qubit_pairs() {
            paths.push(copy(l, h));
            paths.push(copy(l, v));
        }
    }
    let trigger = if use_spdc { Some(reg.index(TRIGGER)?) } else { None };
    paths.extend(trigger);
    let state = apply_loss(&state, &paths, cfg.zeta)?;

    let rails = qubit_pairs()
        .iter()
        .map(|&(h, v)| DualRail {
            h: (0..labels).map(|l| copy(l, h)).collect(),
            v: (0..labels).map(|l| copy(l, v)).collect(),
        })
        .collect();
    let mut model = DetectionModel::new(rails);
    if let Some(t) = trigger {
        model = model.with_herald(vec![t], PhotonConstraint::AtLeast(1));
    }
    let det = model.detect(&state)?;
    Ok(NoisyProbe {
        state: det.state,
        success_probability: det.success_probability,
        click_probability: det.click_probability,
        terms: state.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::TargetState;
    use crate::metrics::fidelity;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn hom_closed_form_examples() {
        let r = hom_visibility(1.0, 1.0).unwrap();
        assert_eq!((r.p_coin, r.visibility), (0.0, 1.0));
        let r = hom_visibility(0.0, 0.7).unwrap();
        assert_eq!((r.p_coin, r.visibility), (0.5, 0.0));
        let r = hom_visibility(0.9, 0.9).unwrap();
        assert_abs_diff_eq!(r.p_coin, 0.095, epsilon = 1e-15);
        assert_abs_diff_eq!(r.visibility, 0.81, epsilon = 1e-15);
        assert!(hom_visibility(1.1, 0.5).is_err());
    }

    #[test]
    fn hom_brute_force_matches_closed_form_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (x1, x2): (f64, f64) = (rng.random(), rng.random());
            let bf = hom_brute_force(x1, x2, 0.5).unwrap();
            assert_abs_diff_eq!(bf, hom_visibility(x1, x2).unwrap().p_coin, epsilon = 1e-10);
            let eta: f64 = rng.random();
            assert_abs_diff_eq!(hom_brute_force(x1, x2, eta).unwrap(), hom_coincidence(eta, x1, x2), epsilon = 1e-10);
        }
    }

    #[test]
    fn mismatch_at_unit_overlap_is_identity() {
        let reg = ModeRegistry::new(["a", "a#1"]).unwrap();
        let net = insert_mismatch(&reg, &[(0, 1)], 1.0).unwrap();
        assert_eq!(net, LinearNetwork::identity(&reg));
        assert!(insert_mismatch(&reg, &[(0, 1)], -0.1).is_err());
    }

    #[test]
    fn loss_limits() {
        let reg = ModeRegistry::new(["a"]).unwrap();
        let p = FockPolynomial::monomial(&reg, &["a"], c(1.0)).unwrap();
        let full = apply_loss(&p, &[0], 1.0).unwrap();
        assert_eq!(full.coefficient_of(&["a"]).unwrap(), c(1.0));
        let none = apply_loss(&p, &[0], 0.0).unwrap();
        assert!(none.coefficient_of(&["a"]).unwrap().norm() < 1e-15);
        assert!(apply_loss(&p, &[0], 2.0).is_err());
    }

    #[test]
    fn uniform_loss_scales_success_by_zeta_cubed_and_keeps_state() {
        let target = TargetState::OptimalN7.qubit_state().unwrap();
        for zeta in [1.0, 0.5, 0.13] {
            let cfg = NoiseConfig { zeta, ..NoiseConfig::default() };
            let out = noisy_probe_state(&cfg, NoiseMode::Mismatch).unwrap();
            assert_abs_diff_eq!(out.success_probability, zeta.powi(3) / 18.0, epsilon = 1e-12);
            assert_abs_diff_eq!(fidelity(&out.state, &target).unwrap(), 1.0, epsilon = 1e-10);
        }
        let cfg = NoiseConfig { zeta: 0.0, ..NoiseConfig::default() };
        assert!(noisy_probe_state(&cfg, NoiseMode::Mismatch).is_err());
    }

    #[test]
    fn mismatch_fidelity_decreases_monotonically() {
        let target = TargetState::OptimalN7.qubit_state().unwrap();
        let mut last = 1.0 + 1e-12;
        for k in 0..=10 {
            let xi = 1.0 - 0.01 * k as f64;
            let out = noisy_probe_state(&NoiseConfig::mismatch(xi), NoiseMode::Mismatch).unwrap();
            let f = fidelity(&out.state, &target).unwrap();
            assert!(f <= last, "xi {xi}: {f} > {last}");
            assert!(1.0 - f <= 4.0 * (1.0 - xi) + 1e-12);
            last = f;
        }
        assert!(last < 0.99);
    }

    #[test]
    fn site_overrides_are_respected() {
        let mut cfg = NoiseConfig::mismatch(1.0);
        cfg.site_xi.insert(MismatchSite::CnC, 0.9);
        let only_c = noisy_probe_state(&cfg, NoiseMode::Mismatch).unwrap();
        let all = noisy_probe_state(&NoiseConfig::mismatch(0.9), NoiseMode::Mismatch).unwrap();
        let target = TargetState::OptimalN7.qubit_state().unwrap();
        let f1 = fidelity(&only_c.state, &target).unwrap();
        let f4 = fidelity(&all.state, &target).unwrap();
        assert!(f1 < 1.0 - 1e-6 && f4 < f1);
    }

    #[test]
    fn spdc_coefficients() {
        let vac = spdc_state(&SpdcSpec {
            source: SpdcSource::Heralded { eps: 0.0 },
            convention: SpdcConvention::Operator,
        })
        .unwrap();
        assert_eq!(vac.len(), 1);
        assert_eq!(vac.max_photons(), 0);

        let eps = 0.07;
        let her = spdc_state(&SpdcSpec {
            source: SpdcSource::Heralded { eps },
            convention: SpdcConvention::Operator,
        })
        .unwrap();
        assert_abs_diff_eq!(her.coefficient_of(&["a_H", "a_H", "t", "t"]).unwrap().re, eps * eps / 2.0, epsilon = 1e-16);
        assert_abs_diff_eq!(her.coefficient_of(&["a_H", "a_H", "a_H", "t", "t", "t"]).unwrap().re, eps.powi(3) / 6.0, epsilon = 1e-16);

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let pair = spdc_state(&SpdcSpec {
            source: SpdcSource::EntangledPair { eps, gamma: r, beta: r },
            convention: SpdcConvention::Operator,
        })
        .unwrap();
        assert_abs_diff_eq!(pair.coefficient_of(&["b_H", "c_H"]).unwrap().re, eps * r, epsilon = 1e-16);
        assert_eq!(pair.max_photons(), 4);
    }

    #[test]
    fn fock_ket_convention_gives_eps_n_over_n_factorial_amplitudes() {
        let eps = 0.1;
        let her = spdc_state(&SpdcSpec {
            source: SpdcSource::Heralded { eps },
            convention: SpdcConvention::FockKet,
        })
        .unwrap();
        let amps = her.to_fock_amplitudes();
        let reg = spdc_registry();
        for n in 0..=3u32 {
            let mut occ = vec![0; reg.len()];
            occ[circuits::A_H] = n;
            occ[reg.index(TRIGGER).unwrap()] = n;
            let expected = eps.powi(n as i32) / factorial(n);
            assert_abs_diff_eq!(amps[&occ].re, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn schmidt_examples() {
        let s = schmidt_rotations([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((s.gamma, s.beta, s.theta_b, s.theta_c), (1.0, 0.0, 0.0, 0.0));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let s = schmidt_rotations([r, 0.0, 0.0, r]).unwrap();
        assert_eq!((s.gamma, s.beta, s.theta_b, s.theta_c), (r, r, 0.0, 0.0));
        let s = schmidt_rotations(optimal_alpha()).unwrap();
        assert_abs_diff_eq!(s.gamma, 0.99517, epsilon = 1e-5);
        assert_abs_diff_eq!(s.beta.abs(), 0.09818, epsilon = 1e-5);
        assert!(schmidt_rotations([1.0, 1.0, 0.0, 0.0]).is_err());
    }

    /// Oracle: rotate the single-pair term of the pair source in the Fock
    /// picture and compare with the target two-photon amplitudes.
    fn single_pair_sector(alpha: [f64; 4]) -> [f64; 4] {
        let s = schmidt_rotations(alpha).unwrap();
        let reg = spdc_registry();
        let orders = spdc_orders(&SpdcSpec {
            source: SpdcSource::EntangledPair { eps: 0.1, gamma: s.gamma, beta: s.beta },
            convention: SpdcConvention::FockKet,
        })
        .unwrap();
        let rot = LinearNetwork::polarization_rotation(&reg, circuits::B_H, circuits::B_V, s.theta_b)
            .unwrap()
            .then(&LinearNetwork::polarization_rotation(&reg, circuits::C_H, circuits::C_V, s.theta_c).unwrap())
            .unwrap();
        let one = apply_network(&orders[1], &rot).unwrap().scaled(c(10.0));
        [
            one.coefficient_of(&["b_H", "c_H"]).unwrap().re,
            one.coefficient_of(&["b_H", "c_V"]).unwrap().re,
            one.coefficient_of(&["b_V", "c_H"]).unwrap().re,
            one.coefficient_of(&["b_V", "c_V"]).unwrap().re,
        ]
    }

    #[test]
    fn schmidt_round_trip_on_random_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut targets = vec![optimal_alpha()];
        for _ in 0..50 {
            let v: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() - 0.5);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            targets.push(v.map(|x| x / n));
        }
        for t in targets {
            let got = single_pair_sector(t);
            for k in 0..4 {
                assert_abs_diff_eq!(got[k], t[k], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn epsilon_from_counts_examples() {
        let e = epsilon_from_counts(5200.0, 80e6, 0.13, 0.13).unwrap();
        assert_abs_diff_eq!(e, 0.062, epsilon = 5e-4);
        assert_eq!(epsilon_from_counts(0.0, 80e6, 0.13, 0.13).unwrap(), 0.0);
        let e4 = epsilon_from_counts(4.0 * 5200.0, 80e6, 0.13, 0.13).unwrap();
        assert_abs_diff_eq!(e4, 2.0 * e, epsilon = 1e-15);
        assert!(matches!(epsilon_from_counts(1.0, 0.0, 0.1, 0.1), Err(NoiseError::Denominator)));
    }

    #[test]
    fn spdc_probe_approaches_ideal_for_small_eps() {
        let target = TargetState::OptimalN7.qubit_state().unwrap();
        let out = noisy_probe_state(&NoiseConfig::spdc(1e-4, 1e-4), NoiseMode::SpdcHigherOrder).unwrap();
        assert!(fidelity(&out.state, &target).unwrap() > 1.0 - 1e-6);
        let noisy = noisy_probe_state(&NoiseConfig::spdc(0.1, 0.05), NoiseMode::SpdcHigherOrder).unwrap();
        assert!(fidelity(&noisy.state, &target).unwrap() < 0.99);
        assert!(noisy.click_probability >= noisy.success_probability);
    }

    #[test]
    fn config_validation_and_modes() {
        assert!(NoiseConfig { eps1: 0.3, ..NoiseConfig::default() }.validate().is_err());
        assert!(NoiseConfig { zeta: -0.1, ..NoiseConfig::default() }.validate().is_err());
        assert_eq!(NoiseConfig::default().default_mode(), NoiseMode::Mismatch);
        assert_eq!(NoiseConfig::spdc(0.05, 0.05).default_mode(), NoiseMode::SpdcHigherOrder);
        let both = NoiseConfig { xi: 0.95, ..NoiseConfig::spdc(0.05, 0.05) };
        assert_eq!(both.default_mode(), NoiseMode::Combined);
        let out = noisy_probe_state(&both, NoiseMode::Combined).unwrap();
        assert!(out.state.purity() < 1.0);
    }
}
