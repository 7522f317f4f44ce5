//! Precision figures of merit and the bounds they are compared against.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::hpea::{
    binary_estimate, outcome_distribution, Estimator, HpeaError, OutcomeDistribution,
    ProtocolConfig, ProtocolRun,
};
use crate::qubit::{QubitError, QubitState, PSD_TOL};

/// Mean resultant lengths below this make the Holevo deviation meaningless.
pub const MIN_RESULTANT: f64 = 1e-12;
/// Default number of phase grid points for exact averages.
pub const DEFAULT_PHASE_GRID: usize = 4096;
/// Smallest grid accepted by [`calibrate_estimator`].
pub const MIN_CALIBRATION_GRID: usize = 720;
/// Default number of random restarts of the shot-noise-limit search.
pub const DEFAULT_SNL_RESTARTS: usize = 64;
/// Simplex convergence tolerance for the shot-noise-limit search.
pub const SNL_TOLERANCE: f64 = 1e-8;
/// Largest photon number accepted by [`snl_mu`].
pub const MAX_SNL_PHOTONS: usize = 12;
/// Optimized single-photon measurement angles for seven photons.
pub const SNL_ANGLES_N7: [f64; 7] = [0.0, 0.0, 2.31099, 1.32133, 1.32133, 0.843774, -0.830605];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("deviation overflow: mean resultant length {0:.3e} is below {MIN_RESULTANT:e}")]
    DeviationOverflow(f64),
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("coefficients have squared norm {0}, expected 1")]
    Unnormalized(f64),
    #[error("resource count N = {0} must be at least 1")]
    Resources(usize),
    #[error("calibration grid has {0} points, need at least {MIN_CALIBRATION_GRID}")]
    GridTooSmall(usize),
    #[error("outcome {0} has a vanishing posterior resultant")]
    VanishingPosterior(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("matrix has eigenvalue {0:.3e} below the PSD tolerance")]
    NotPositive(f64),
    #[error("{0} photons exceed the enumeration limit {MAX_SNL_PHOTONS}")]
    TooManyPhotons(usize),
    #[error("angle search did not converge within its restart budget")]
    NoConvergence,
    #[error(transparent)]
    Hpea(#[from] HpeaError),
    #[error(transparent)]
    Qubit(#[from] QubitError),
}

/// Ensemble summary of `e^{i(φ − φ_est)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolevoStats {
    /// Mean resultant length.
    pub mu: f64,
    /// Holevo deviation `μ^{−2} − 1`.
    pub deviation: f64,
    pub n_ens: usize,
    pub mu_stderr: f64,
    pub deviation_stderr: f64,
}

fn deviation_from_mu(mu: f64) -> Result<f64, MetricsError> {
    if mu.is_nan() || mu < MIN_RESULTANT {
        return Err(MetricsError::DeviationOverflow(mu));
    }
    Ok(mu.powi(-2) - 1.0)
}

/// Holevo statistics of `(φ_true, φ_est)` pairs. The standard error uses the
/// delta method: the spread of the samples projected on the mean direction.
pub fn holevo_from_pairs<I>(pairs: I) -> Result<HolevoStats, MetricsError>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let z: Vec<Complex64> =
        pairs.into_iter().map(|(phi, est)| Complex64::from_polar(1.0, phi - est)).collect();
    let n = z.len();
    if n == 0 {
        return Err(MetricsError::EmptyEnsemble);
    }
    let mean = z.iter().sum::<Complex64>() / n as f64;
    let mu = mean.norm();
    let deviation = deviation_from_mu(mu)?;
    let dir = mean / mu;
    let proj: Vec<f64> = z.iter().map(|w| (w * dir.conj()).re).collect();
    let var = if n > 1 {
        proj.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let mu_stderr = (var / n as f64).sqrt();
    Ok(HolevoStats { mu, deviation, n_ens: n, mu_stderr, deviation_stderr: 2.0 * mu.powi(-3) * mu_stderr })
}

pub fn holevo_from_runs(runs: &[ProtocolRun]) -> Result<HolevoStats, MetricsError> {
    holevo_from_pairs(runs.iter().map(|r| (r.phi_true, r.phi_est)))
}

/// `D_H^φ = |Σ_y P(y|φ) e^{i(φ − φ_est(y))}|^{−2} − 1`.
pub fn phase_dependent_deviation(
    dist: &OutcomeDistribution,
    estimator: &Estimator,
) -> Result<f64, MetricsError> {
    deviation_from_mu(dist.resultant(estimator).norm())
}

/// Phase grid `2πi/n`, `i = 0..n`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * i as f64 / n as f64).collect()
}

/// Outcome distributions on a uniform phase grid.
pub fn tabulate(
    config: &ProtocolConfig,
    grid: usize,
) -> Result<Vec<OutcomeDistribution>, MetricsError> {
    phase_grid(grid)
        .into_par_iter()
        .map(|phi| outcome_distribution(config, phi).map_err(MetricsError::from))
        .collect()
}

/// Phase-averaged Holevo deviation from exact outcome distributions. For a
/// register using `N` resources the averaged resultant is a trigonometric
/// polynomial of degree `N`, so any grid with more than `N + 1` points gives
/// the exact value.
pub fn exact_holevo_deviation(
    config: &ProtocolConfig,
    grid: usize,
) -> Result<f64, MetricsError> {
    let table = tabulate(config, grid)?;
    holevo_from_table(&table, &config.estimator)
}

pub fn holevo_from_table(
    table: &[OutcomeDistribution],
    estimator: &Estimator,
) -> Result<f64, MetricsError> {
    if table.is_empty() {
        return Err(MetricsError::EmptyEnsemble);
    }
    let sum: Complex64 = table.iter().map(|d| d.resultant(estimator)).sum();
    deviation_from_mu((sum / table.len() as f64).norm())
}

/// `P(φ_est | φ) = (1/2π) |Σ_n C_n e^{−in(φ_est − φ)}|²` for `Σ|C_n|² = 1`.
pub fn analytic_pdf(coeffs: &[Complex64], phi: f64, phi_est: f64) -> Result<f64, MetricsError> {
    let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(MetricsError::Unnormalized(norm));
    }
    let s: Complex64 = coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| c * Complex64::from_polar(1.0, -(n as f64) * (phi_est - phi)))
        .sum();
    Ok(s.norm_sqr() / TAU)
}

/// `tan²(π/(N+2))`.
pub fn hl_bound(n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::Resources(n));
    }
    Ok((PI / (n as f64 + 2.0)).tan().powi(2))
}

/// `2/N + 1/N²`.
pub fn qpea_bound(n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::Resources(n));
    }
    let n = n as f64;
    Ok(2.0 / n + 1.0 / (n * n))
}

/// Per-outcome estimates `φ_est(y)`, each in `[0, 2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationTable {
    estimates: Vec<f64>,
}

impl CalibrationTable {
    pub fn new(estimates: Vec<f64>) -> Self {
        Self { estimates: estimates.into_iter().map(|e| e.rem_euclid(TAU)).collect() }
    }

    /// The binary estimates `2πy/2^(K+1)`.
    pub fn dyadic(k: usize) -> Self {
        Self::new((0..1usize << (k + 1)).map(|y| binary_estimate(k, y)).collect())
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn estimate(&self, y: usize) -> f64 {
        self.estimates[y]
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }
}

/// `φ_est(y) = arg ∫ P(y|φ) e^{iφ} dφ`, evaluated by the trapezoid rule on
/// the tabulated periodic grid.
pub fn calibrate_estimator(table: &[OutcomeDistribution]) -> Result<CalibrationTable, MetricsError> {
    if table.len() < MIN_CALIBRATION_GRID {
        return Err(MetricsError::GridTooSmall(table.len()));
    }
    let outcomes = table[0].probabilities.len();
    let mut acc = vec![Complex64::default(); outcomes];
    for d in table {
        for (y, &p) in d.probabilities.iter().enumerate() {
            acc[y] += Complex64::from_polar(p, d.phi);
        }
    }
    let mut estimates = Vec::with_capacity(outcomes);
    for (y, a) in acc.iter().enumerate() {
        if a.norm() / (table.len() as f64) < MIN_RESULTANT {
            return Err(MetricsError::VanishingPosterior(y));
        }
        estimates.push(a.arg());
    }
    Ok(CalibrationTable::new(estimates))
}

/// Tabulates the protocol on `grid` phases and calibrates from it.
pub fn calibrate_protocol(
    config: &ProtocolConfig,
    grid: usize,
) -> Result<CalibrationTable, MetricsError> {
    calibrate_estimator(&tabulate(config, grid)?)
}

/// Square root of a positive semidefinite Hermitian matrix.
fn psd_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`; `⟨ψ|ρ|ψ⟩` when either side is pure.
pub fn fidelity(rho: &QubitState, sigma: &QubitState) -> Result<f64, MetricsError> {
    if rho.dim() != sigma.dim() {
        return Err(MetricsError::Dimension(rho.dim(), sigma.dim()));
    }
    for s in [rho, sigma] {
        let min = s.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(MetricsError::NotPositive(min));
        }
    }
    if sigma.purity() > 1.0 - 1e-12 {
        return Ok(rho.expectation_pure(&sigma.principal_vector()));
    }
    if rho.purity() > 1.0 - 1e-12 {
        return Ok(sigma.expectation_pure(&rho.principal_vector()));
    }
    let s = psd_sqrt(rho.matrix());
    let inner = &s * sigma.matrix() * &s;
    let eig = inner.symmetric_eigenvalues();
    let t: f64 = eig.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok(t * t)
}

pub fn purity(rho: &QubitState) -> f64 {
    rho.purity()
}

/// `Σ_u |∫ e^{iφ} Π_ℓ ½(1 + u_ℓ cos(φ − θ_ℓ)) dφ/2π|` over all sign strings
/// `u ∈ {±1}^m`. Each factor is `½ + (u/4)e^{−iθ}z + (u/4)e^{iθ}z̄` with
/// `z = e^{iφ}`, so the integral is the `z^{−1}` coefficient of the product.
pub fn snl_mu(angles: &[f64]) -> Result<f64, MetricsError> {
    let m = angles.len();
    if m > MAX_SNL_PHOTONS {
        return Err(MetricsError::TooManyPhotons(m));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let factors: Vec<Complex64> = angles.iter().map(|&t| Complex64::from_polar(0.25, -t)).collect();
    // Coefficients indexed by power + m, powers −m..=m.
    let width = 2 * m + 1;
    let mut total = 0.0;
    let mut poly = vec![Complex64::default(); width];
    let mut next = vec![Complex64::default(); width];
    for signs in 0u32..(1 << m) {
        poly.iter_mut().for_each(|c| *c = Complex64::default());
        poly[m] = Complex64::new(1.0, 0.0);
        for (l, f) in factors.iter().enumerate() {
            let u = if signs >> l & 1 == 0 { 1.0 } else { -1.0 };
            let up = f * u;
            let down = f.conj() * u;
            next.iter_mut().for_each(|c| *c = Complex64::default());
            for p in 0..width {
                let c = poly[p];
                if c == Complex64::default() {
                    continue;
                }
                next[p] += c * 0.5;
                if p + 1 < width {
                    next[p + 1] += c * up;
                }
                if p >= 1 {
                    next[p - 1] += c * down;
                }
            }
            std::mem::swap(&mut poly, &mut next);
        }
        total += poly[m - 1].norm();
    }
    Ok(total)
}

/// `μ^{−2} − 1` for [`snl_mu`].
pub fn snl_variance(angles: &[f64]) -> Result<f64, MetricsError> {
    deviation_from_mu(snl_mu(angles)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnlResult {
    pub angles: Vec<f64>,
    pub variance: f64,
    pub restarts: usize,
}

/// Minimal Nelder–Mead simplex search.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: Vec<f64>,
    step: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, bool) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.clone(), f(&start)));
    for i in 0..n {
        let mut p = start.clone();
        p[i] += step;
        let v = f(&p);
        simplex.push((p, v));
    }
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() < tol {
            return (simplex[0].0.clone(), simplex[0].1, true);
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(p, _)| p[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflected = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (towards, ft) = if fr < worst.1 { (&reflected, fr) } else { (&worst.0, worst.1) };
            let contracted = lerp(&centroid, towards, 0.5);
            let fc = f(&contracted);
            if fc < ft {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lerp(&best, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0.clone(), simplex[0].1, false)
}

/// Minimizes [`snl_variance`] over `m` measurement angles with Nelder–Mead
/// from `restarts` random starting points (ChaCha8, stream per restart).
/// The landscape is multimodal and minimizers are not unique; only the
/// value is meaningful.
pub fn snl_optimize(m: usize, restarts: usize, seed: u64) -> Result<SnlResult, MetricsError> {
    if m == 0 || m > 10 {
        return Err(MetricsError::TooManyPhotons(m));
    }
    let objective = |x: &[f64]| snl_variance(x).unwrap_or(f64::INFINITY);
    let best = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let start: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * TAU).collect();
            let (x, v, converged) = nelder_mead(&objective, start, 0.5, SNL_TOLERANCE, 20_000);
            // Restart from the best vertex to escape a collapsed simplex.
            let (x, v2, converged2) = nelder_mead(&objective, x, 0.05, SNL_TOLERANCE, 20_000);
            (x, v.min(v2), converged || converged2)
        })
        .filter(|(_, v, c)| *c && v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(MetricsError::NoConvergence)?;
    Ok(SnlResult {
        angles: best.0.iter().map(|a| a.rem_euclid(TAU)).collect(),
        variance: best.1,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{optimal_amplitudes, TargetState};
    use crate::hpea::qpea_state;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::{prop, prop_assert, prop_assume, proptest, ProptestConfig};

    fn optimal_config() -> ProtocolConfig {
        ProtocolConfig::new(TargetState::OptimalN7.qubit_state().unwrap(), Estimator::Binary).unwrap()
    }

    #[test]
    fn bounds() {
        assert_abs_diff_eq!(hl_bound(7).unwrap(), 0.132474, epsilon = 1e-6);
        assert_abs_diff_eq!(hl_bound(3).unwrap(), 0.527864, epsilon = 1e-6);
        assert_eq!(qpea_bound(7).unwrap(), 2.0 / 7.0 + 1.0 / 49.0);
        assert!(hl_bound(0).is_err());
    }

    #[test]
    fn holevo_of_perfect_estimates_is_zero() {
        let s = holevo_from_pairs((0..100).map(|i| (i as f64 * 0.1, i as f64 * 0.1))).unwrap();
        assert_abs_diff_eq!(s.deviation, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mu_stderr, 0.0, epsilon = 1e-12);
        assert!(matches!(holevo_from_pairs(Vec::new()), Err(MetricsError::EmptyEnsemble)));
        // Opposite pairs cancel exactly: overflow sentinel, not a huge float.
        let r = holevo_from_pairs([(0.0, 0.0), (PI, 0.0)]);
        assert!(matches!(r, Err(MetricsError::DeviationOverflow(_))));
    }

    #[test]
    fn holevo_stderr_matches_spread() {
        // Oracle: for wrapped-normal errors of width s, μ = e^{−s²/2}.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = 0.4;
        let n = 200_000;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-300);
                let u2: f64 = rng.random();
                let g = (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
                (1.0, 1.0 + s * g)
            })
            .collect();
        let st = holevo_from_pairs(pairs).unwrap();
        let mu = (-s * s / 2.0f64).exp();
        assert!((st.mu - mu).abs() < 4.0 * st.mu_stderr);
        assert!(st.mu_stderr > 0.0 && st.mu_stderr < 1e-3);
    }

    #[test]
    fn exact_holevo_of_optimal_state_is_heisenberg_limited() {
        let d = exact_holevo_deviation(&optimal_config(), 64).unwrap();
        assert_abs_diff_eq!(d, (PI / 9.0).tan().powi(2), epsilon = 1e-10);
        let q = ProtocolConfig::new(qpea_state(2), Estimator::Binary).unwrap();
        assert_abs_diff_eq!(exact_holevo_deviation(&q, 64).unwrap(), qpea_bound(7).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn calibration_of_ideal_states_is_dyadic() {
        for cfg in [optimal_config(), ProtocolConfig::new(qpea_state(2), Estimator::Binary).unwrap()] {
            let table = calibrate_protocol(&cfg, 720).unwrap();
            let dy = CalibrationTable::dyadic(2);
            for y in 0..8 {
                let diff = (table.estimate(y) - dy.estimate(y) + PI).rem_euclid(TAU) - PI;
                assert!(diff.abs() < 1e-6, "y {y}: {}", table.estimate(y));
            }
        }
        assert!(matches!(
            calibrate_protocol(&optimal_config(), 100),
            Err(MetricsError::GridTooSmall(100))
        ));
    }

    #[test]
    fn phase_dependent_minima_at_multiples_of_quarter_pi() {
        let cfg = optimal_config();
        let n = 256;
        let table = tabulate(&cfg, n).unwrap();
        let dev: Vec<f64> =
            table.iter().map(|d| phase_dependent_deviation(d, &Estimator::Binary).unwrap()).collect();
        for j in 0..8 {
            let i = j * n / 8;
            let prev = dev[(i + n - 1) % n];
            let next = dev[(i + 1) % n];
            assert!(dev[i] < prev && dev[i] < next, "not a minimum at j={j}");
        }
    }

    #[test]
    fn analytic_pdf_examples() {
        let n = 7;
        let c: Vec<Complex64> = (0..=n).map(|_| Complex64::new(1.0 / ((n + 1) as f64).sqrt(), 0.0)).collect();
        assert_abs_diff_eq!(analytic_pdf(&c, 1.0, 1.0).unwrap(), (n + 1) as f64 / TAU, epsilon = 1e-12);
        let bad = vec![Complex64::new(1.0, 0.0); 3];
        assert!(matches!(analytic_pdf(&bad, 0.0, 0.0), Err(MetricsError::Unnormalized(_))));
    }

    #[test]
    fn qpea_peak_narrows_with_resources() {
        let width = |n: usize| {
            let c: Vec<Complex64> =
                (0..=n).map(|_| Complex64::new(1.0 / ((n + 1) as f64).sqrt(), 0.0)).collect();
            let peak = analytic_pdf(&c, 0.0, 0.0).unwrap();
            let mut x = 0.0;
            while analytic_pdf(&c, 0.0, x).unwrap() > peak / 2.0 {
                x += 1e-4;
            }
            x
        };
        let (w3, w7) = (width(3), width(7));
        assert!(w7 < w3 && (w3 / w7 - 2.0).abs() < 0.3);
    }

    #[test]
    fn optimal_coefficients_reduce_tails() {
        let n = 7;
        let q: Vec<Complex64> = (0..=n).map(|_| Complex64::new(1.0 / 8f64.sqrt(), 0.0)).collect();
        let h: Vec<Complex64> =
            optimal_amplitudes(7).unwrap().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let tail = |c: &[Complex64]| analytic_pdf(c, 0.0, PI).unwrap() + analytic_pdf(c, 0.0, 0.6 * PI).unwrap();
        assert!(tail(&h) < tail(&q));
    }

    #[test]
    fn outcome_probabilities_match_analytic_pdf() {
        // P(y|φ) = (2π/(N+1)) P(φ_est = 2πy/(N+1) | φ) with C = ψ.
        let cfg = optimal_config();
        let c: Vec<Complex64> =
            optimal_amplitudes(7).unwrap().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for phi in phase_grid(50) {
            let d = outcome_distribution(&cfg, phi).unwrap();
            for y in 0..8 {
                let p = TAU / 8.0 * analytic_pdf(&c, phi, binary_estimate(2, y)).unwrap();
                assert_abs_diff_eq!(d.probabilities[y], p, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fidelity_and_purity_examples() {
        let opt = TargetState::OptimalN7.qubit_state().unwrap();
        assert_abs_diff_eq!(fidelity(&opt, &opt).unwrap(), 1.0, epsilon = 1e-12);
        let ghz0 = TargetState::Ghz(0).qubit_state().unwrap();
        assert_abs_diff_eq!(fidelity(&opt, &ghz0).unwrap(), 0.051990, epsilon = 1e-6);
        let mixed = QubitState::maximally_mixed(3);
        assert_abs_diff_eq!(purity(&mixed), 0.125, epsilon = 1e-14);
        assert_abs_diff_eq!(fidelity(&mixed, &mixed).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fidelity(&mixed, &opt).unwrap(), 0.125, epsilon = 1e-12);
        let two = QubitState::maximally_mixed(2);
        assert!(matches!(fidelity(&mixed, &two), Err(MetricsError::Dimension(8, 4))));
    }

    #[test]
    fn uhlmann_fidelity_of_commuting_states() {
        // Oracle: for diagonal states F = (Σ √(p_i q_i))².
        let p: [f64; 4] = [0.5, 0.3, 0.2, 0.0];
        let q: [f64; 4] = [0.25, 0.25, 0.25, 0.25];
        let diag = |v: &[f64; 4]| {
            QubitState::new(DMatrix::from_diagonal(&DVector::from_iterator(
                4,
                v.iter().map(|&x| Complex64::new(x, 0.0)),
            )))
            .unwrap()
        };
        let expected: f64 = p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum::<f64>().powi(2);
        assert_abs_diff_eq!(fidelity(&diag(&p), &diag(&q)).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn snl_single_photon_and_published_sets() {
        assert_abs_diff_eq!(snl_mu(&[0.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(snl_variance(&[0.0]).unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(snl_variance(&[0.0, 0.0, PI / 2.0]).unwrap(), 0.655845, epsilon = 1e-6);
        assert_abs_diff_eq!(snl_variance(&SNL_ANGLES_N7).unwrap(), 0.232688, epsilon = 1e-6);
        assert!(snl_mu(&[0.0; 13]).is_err());
    }

    /// Oracle: trapezoid quadrature of the periodic integrand on a fine grid.
    fn snl_mu_quadrature(angles: &[f64], n: usize) -> f64 {
        let m = angles.len();
        let mut total = 0.0;
        for signs in 0u32..(1 << m) {
            let mut acc = Complex64::default();
            for i in 0..n {
                let phi = TAU * i as f64 / n as f64;
                let p: f64 = angles
                    .iter()
                    .enumerate()
                    .map(|(l, t)| {
                        let u = if signs >> l & 1 == 0 { 1.0 } else { -1.0 };
                        0.5 * (1.0 + u * (phi - t).cos())
                    })
                    .product();
                acc += Complex64::from_polar(p, phi);
            }
            total += (acc / n as f64).norm();
        }
        total
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn snl_mu_matches_quadrature(angles in prop::collection::vec(0.0..TAU, 1..=7)) {
            let a = snl_mu(&angles).unwrap();
            let b = snl_mu_quadrature(&angles, 97);
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn analytic_pdf_has_unit_mass(raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=16), phi in 0.0..TAU) {
            let c: Vec<Complex64> = raw.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
            let n = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(n > 1e-3);
            let c: Vec<Complex64> = c.iter().map(|z| z / n).collect();
            let grid = 64;
            let mass: f64 = phase_grid(grid).iter().map(|&e| analytic_pdf(&c, phi, e).unwrap()).sum::<f64>() * TAU / grid as f64;
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn calibrated_estimator_never_loses_to_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let v: Vec<DVector<Complex64>> = (0..2)
                .map(|_| {
                    DVector::from_fn(8, |_, _| {
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                    })
                })
                .collect();
            let state = QubitState::from_unnormalized_vectors(&v).unwrap();
            let cfg = ProtocolConfig::new(state, Estimator::Binary).unwrap();
            let table = tabulate(&cfg, 720).unwrap();
            let binary = holevo_from_table(&table, &Estimator::Binary);
            let cal = calibrate_estimator(&table).unwrap();
            let calibrated = holevo_from_table(&table, &Estimator::Calibrated(cal)).unwrap();
            match binary {
                Ok(b) => assert!(calibrated <= b + 1e-12, "{calibrated} > {b}"),
                Err(MetricsError::DeviationOverflow(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn snl_optimizer_small_cases() {
        let r1 = snl_optimize(1, 4, 0).unwrap();
        assert_abs_diff_eq!(r1.variance, 3.0, epsilon = 1e-9);
        let r3 = snl_optimize(3, 16, 1).unwrap();
        assert!(r3.variance <= 0.655845 + 1e-4, "{}", r3.variance);
        assert!(hl_bound(3).unwrap() < r3.variance);
    }
}
