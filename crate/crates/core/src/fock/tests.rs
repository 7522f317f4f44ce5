use super::*;
use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn two_modes() -> ModeRegistry {
    ModeRegistry::new(["x", "y"]).unwrap()
}

/// Haar-ish random unitary from the QR factor of a complex Gaussian matrix.
fn random_unitary(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(m, m, |_, _| {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        Complex64::new(r * (std::f64::consts::TAU * u2).cos(), r * (std::f64::consts::TAU * u2).sin())
    });
    g.qr().q()
}

fn random_state(reg: &ModeRegistry, photons: u32, terms: usize, rng: &mut ChaCha8Rng) -> FockPolynomial {
    let m = reg.len();
    let list: Vec<(Monomial, Complex64)> = (0..terms)
        .map(|_| {
            let modes: Vec<usize> = (0..photons).map(|_| rng.random_range(0..m)).collect();
            (Monomial::from_modes(modes), Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        })
        .collect();
    FockPolynomial::from_terms(reg, list).unwrap().normalized().unwrap()
}

fn max_coeff_diff(a: &FockPolynomial, b: &FockPolynomial) -> f64 {
    let mut keys: Vec<&Monomial> = a.terms().map(|(m, _)| m).collect();
    keys.extend(b.terms().map(|(m, _)| m));
    keys.iter().map(|m| (a.coefficient(m) - b.coefficient(m)).norm()).fold(0.0, f64::max)
}

#[test]
fn registry_rejects_duplicates_and_unknown_labels() {
    assert!(matches!(ModeRegistry::new(["a", "a"]), Err(FockError::DuplicateMode(_))));
    assert!(matches!(ModeRegistry::new(Vec::<String>::new()), Err(FockError::EmptyRegistry)));
    let r = two_modes();
    assert_eq!(r.index("y").unwrap(), 1);
    assert!(matches!(r.index("z"), Err(FockError::UnknownMode(_))));
}

#[test]
fn fock_amplitudes_carry_factorials() {
    let r = two_modes();
    let p = FockPolynomial::monomial(&r, &["x", "x"], c(1.0)).unwrap();
    let amps = p.to_fock_amplitudes();
    assert_abs_diff_eq!(amps[&vec![2, 0]].re, 2f64.sqrt(), epsilon = 1e-15);
    assert_abs_diff_eq!(p.squared_norm(), 2.0, epsilon = 1e-15);

    let vac = FockPolynomial::vacuum(&r).to_fock_amplitudes();
    assert_eq!(vac.len(), 1);
    assert_eq!(vac[&vec![0, 0]], c(1.0));

    let flat = FockPolynomial::monomial(&r, &["x", "y"], Complex64::new(0.3, -0.4)).unwrap();
    assert_eq!(flat.to_fock_amplitudes()[&vec![1, 1]], Complex64::new(0.3, -0.4));
}

#[test]
fn fock_amplitude_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = ModeRegistry::new(["a", "b", "c"]).unwrap();
    let s = random_state(&r, 3, 12, &mut rng);
    let amps = s.to_fock_amplitudes();
    let total: f64 = amps.values().map(|a| a.norm_sqr()).sum();
    assert_abs_diff_eq!(total, s.squared_norm(), epsilon = 1e-12);
    let back = FockPolynomial::from_fock_amplitudes(&r, &amps).unwrap();
    assert!(max_coeff_diff(&s, &back) < 1e-12);
}

#[test]
fn identity_network_leaves_state_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = ModeRegistry::new(["a", "b", "c", "d"]).unwrap();
    let s = random_state(&r, 2, 6, &mut rng);
    let out = apply_network(&s, &LinearNetwork::identity(&r)).unwrap();
    assert!(max_coeff_diff(&s, &out) < 1e-15);
}

#[test]
fn balanced_splitter_single_photon() {
    let r = two_modes();
    let bs = LinearNetwork::beam_splitter(&r, 0, 1, 0.5).unwrap();
    let out = apply_network(&FockPolynomial::monomial(&r, &["x"], c(1.0)).unwrap(), &bs).unwrap();
    assert_abs_diff_eq!(out.coefficient_of(&["x"]).unwrap().norm_sqr(), 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(out.coefficient_of(&["y"]).unwrap().norm_sqr(), 0.5, epsilon = 1e-15);
}

#[test]
fn hong_ou_mandel_cancellation() {
    // (−x + y)(x + y)/2 = (y² − x²)/2: no xy term.
    let r = two_modes();
    let bs = LinearNetwork::beam_splitter(&r, 0, 1, 0.5).unwrap();
    let input = FockPolynomial::monomial(&r, &["x", "y"], c(1.0)).unwrap();
    let out = apply_network(&input, &bs).unwrap();
    assert!(out.coefficient_of(&["x", "y"]).unwrap().norm() < 1e-15);
    assert_abs_diff_eq!(out.coefficient_of(&["x", "x"]).unwrap().re, -0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(out.coefficient_of(&["y", "y"]).unwrap().re, 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(out.squared_norm(), 1.0, epsilon = 1e-15);
}

#[test]
fn non_unitary_and_mismatched_networks_are_rejected() {
    let r = two_modes();
    let err = LinearNetwork::from_real(&r, &[&[1.0, 0.0], &[0.0, 0.9]]).unwrap_err();
    assert!(matches!(err, FockError::NonUnitary(_)));
    let other = ModeRegistry::new(["p", "q"]).unwrap();
    let s = FockPolynomial::vacuum(&other);
    assert!(matches!(
        apply_network(&s, &LinearNetwork::identity(&r)),
        Err(FockError::RegistryMismatch)
    ));
    assert!(matches!(
        LinearNetwork::beam_splitter(&r, 0, 1, 1.5),
        Err(FockError::ParameterOutOfRange { .. })
    ));
}

#[test]
fn cutoff_is_enforced() {
    let r = two_modes();
    let p = FockPolynomial::monomial(&r, &["x", "x", "y"], c(1.0)).unwrap();
    assert!(matches!(p.clone().with_cutoff(2), Err(FockError::CutoffExceeded { found: 3, cutoff: 2 })));
    let q = p.with_cutoff(3).unwrap();
    assert!(matches!(q.product(&q), Err(FockError::CutoffExceeded { .. })));
}

#[test]
fn post_select_any_pattern_is_rejected_and_exhaustive_partition_sums_to_one() {
    let r = ModeRegistry::new(["a", "b", "c"]).unwrap();
    assert!(matches!(
        SelectionPattern::per_mode(&[PhotonConstraint::Any; 3]),
        Err(FockError::TrivialPattern)
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = random_state(&r, 3, 10, &mut rng);
    let u = LinearNetwork::new(&r, random_unitary(3, &mut rng)).unwrap();
    let s = apply_network(&s, &u).unwrap();
    let mut total = 0.0;
    for n in 0..=3 {
        let pattern = SelectionPattern::new(vec![(vec![0], PhotonConstraint::Exactly(n))]).unwrap();
        total += post_select(&s, &pattern, false).unwrap().1;
    }
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    // "Any" elsewhere plus a constraint satisfied by everything keeps the state.
    let all = SelectionPattern::new(vec![(vec![0, 1, 2], PhotonConstraint::AtLeast(0))]).unwrap();
    let (kept, p) = post_select(&s, &all, true).unwrap();
    assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
    assert!(max_coeff_diff(&kept, &s) < 1e-12);
}

#[test]
fn post_select_requires_normalized_input_and_nonempty_result() {
    let r = two_modes();
    let p = FockPolynomial::monomial(&r, &["x"], c(2.0)).unwrap();
    let pat = SelectionPattern::per_mode(&[PhotonConstraint::Exactly(1), PhotonConstraint::Any]).unwrap();
    assert!(matches!(post_select(&p, &pat, true), Err(FockError::NotNormalized(_))));
    let q = FockPolynomial::monomial(&r, &["y"], c(1.0)).unwrap();
    assert!(matches!(post_select(&q, &pat, true), Err(FockError::EmptySelection(_))));
}

#[test]
fn bundle_expectation_single_photon_and_overlap() {
    let r = two_modes();
    let p = FockPolynomial::monomial(&r, &["x"], c(1.0)).unwrap();
    assert_abs_diff_eq!(bundle_number_expectation(&p, &[vec![0]]).unwrap(), 1.0);
    assert!(matches!(
        bundle_number_expectation(&p, &[vec![0, 1], vec![1]]),
        Err(FockError::OverlappingBundles(_))
    ));
}

#[test]
fn extract_qubit_state_reads_dual_rail() {
    let r = two_modes();
    let p = FockPolynomial::monomial(&r, &["x"], c(1.0)).unwrap();
    let q = extract_qubit_state(&p, &[(0, 1)]).unwrap();
    assert_abs_diff_eq!(q.matrix()[(0, 0)].re, 1.0);
    let two = FockPolynomial::monomial(&r, &["x", "y"], c(1.0)).unwrap();
    assert!(matches!(extract_qubit_state(&two, &[(0, 1)]), Err(FockError::OutsideQubitSubspace(_))));
}

#[test]
fn detection_traces_environment_labels() {
    // One photon in superposition of H and V, but the V branch also leaves a
    // marker photon in an environment mode: the qubit decoheres completely.
    let r = ModeRegistry::new(["h", "v", "env"]).unwrap();
    let s = FockPolynomial::from_terms(
        &r,
        [
            (Monomial::from_modes([0]), c(0.5f64.sqrt())),
            (Monomial::from_modes([1, 2]), c(0.5f64.sqrt())),
        ],
    )
    .unwrap();
    let det = DetectionModel::new(vec![DualRail::single(0, 1)]).detect(&s).unwrap();
    assert_abs_diff_eq!(det.success_probability, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(det.state.purity(), 0.5, epsilon = 1e-12);
    let herald = DetectionModel::new(vec![DualRail::single(0, 1)])
        .with_herald(vec![2], PhotonConstraint::AtLeast(1))
        .detect(&s)
        .unwrap();
    assert_abs_diff_eq!(herald.success_probability, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(herald.state.matrix()[(1, 1)].re, 1.0, epsilon = 1e-12);
}

#[test]
fn detection_counts_label_copies_as_one_detector() {
    let r = ModeRegistry::new(["h0", "v0", "h1", "v1"]).unwrap();
    let s = FockPolynomial::from_terms(
        &r,
        [(Monomial::from_modes([0]), c(0.6)), (Monomial::from_modes([2]), c(0.8))],
    )
    .unwrap();
    let rail = DualRail { h: vec![0, 2], v: vec![1, 3] };
    let det = DetectionModel::new(vec![rail]).detect(&s).unwrap();
    assert_abs_diff_eq!(det.state.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(det.click_probability, 1.0, epsilon = 1e-12);
}

#[test]
fn embedding_and_lifting_agree() {
    let small = two_modes();
    let big = ModeRegistry::new(["x", "y", "z"]).unwrap();
    let bs = LinearNetwork::beam_splitter(&small, 0, 1, 0.3).unwrap();
    let lifted = bs.embed(&big).unwrap();
    let copies = bs.lift_to_copies(&big, &[vec![0, 1]]).unwrap();
    assert_eq!(lifted.matrix(), copies.matrix());
    let p = FockPolynomial::monomial(&small, &["x"], c(1.0)).unwrap();
    let a = apply_network(&p, &bs).unwrap().embed(&big).unwrap();
    let b = apply_network(&p.embed(&big).unwrap(), &lifted).unwrap();
    assert!(max_coeff_diff(&a, &b) < 1e-15);
}

#[test]
fn swap_and_phase_constructors() {
    let r = two_modes();
    let sw = LinearNetwork::swap(&r, 0, 1).unwrap();
    let p = FockPolynomial::monomial(&r, &["x"], c(1.0)).unwrap();
    let out = apply_network(&p, &sw).unwrap();
    assert_eq!(out.coefficient_of(&["y"]).unwrap(), c(1.0));
    let ph = LinearNetwork::phase_shift(&r, 0, std::f64::consts::PI).unwrap();
    let out = apply_network(&p, &ph).unwrap();
    assert_abs_diff_eq!(out.coefficient_of(&["x"]).unwrap().re, -1.0, epsilon = 1e-15);
    let diag = LinearNetwork::phases(&r, &[0.0, 1.0]).unwrap();
    assert_abs_diff_eq!(diag.matrix()[(1, 1)].arg(), 1.0, epsilon = 1e-15);
}

fn check_norm_and_composition(seed: u64, m: usize, photons: u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..m).map(|i| format!("m{i}")).collect();
    let r = ModeRegistry::new(names).unwrap();
    let s = random_state(&r, photons, 5, &mut rng);
    let u1 = LinearNetwork::new(&r, random_unitary(m, &mut rng)).unwrap();
    let u2 = LinearNetwork::new(&r, random_unitary(m, &mut rng)).unwrap();
    let once = apply_network(&s, &u1).unwrap();
    assert!((once.squared_norm() - 1.0).abs() < 1e-9, "norm {}", once.squared_norm());
    let twice = apply_network(&once, &u2).unwrap();
    let composed = apply_network(&s, &u1.then(&u2).unwrap()).unwrap();
    assert!(max_coeff_diff(&twice, &composed) < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_unitaries_preserve_norm_and_compose(seed in any::<u64>(), m in 2usize..=8, photons in 1u32..=4) {
        check_norm_and_composition(seed, m, photons);
    }
}

#[test]
fn amplitude_map_rejects_wrong_length() {
    let r = two_modes();
    let mut amps = BTreeMap::new();
    amps.insert(vec![1, 0, 0], c(1.0));
    assert!(FockPolynomial::from_fock_amplitudes(&r, &amps).is_err());
}
