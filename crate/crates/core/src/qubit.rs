//! Density matrices on registers of dual-rail qubits.
//!
//! Basis index `n = Σ_k bit_k 2^k`. In Kronecker products the first factor is
//! the most significant qubit, so for the three-photon probe `n = 4a + 2b + c`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Trace and Hermiticity tolerance for validated states.
pub const STATE_TOL: f64 = 1e-9;
/// Most negative eigenvalue accepted without repair.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QubitError {
    #[error("matrix is {rows}x{cols}; expected a square power-of-two dimension")]
    BadDimension { rows: usize, cols: usize },
    #[error("trace is {0}, expected 1")]
    Trace(f64),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix has eigenvalue {0:.3e} below the PSD tolerance")]
    NotPositive(f64),
    #[error("state vector has zero norm")]
    ZeroVector,
    #[error("dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// A validated density matrix on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitState {
    qubits: usize,
    rho: DMatrix<Complex64>,
}

/// What [`QubitState::repaired`] changed.
#[derive(Clone, Debug, PartialEq)]
pub struct RepairReport {
    pub trace_before: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub clipped_weight: f64,
}

impl RepairReport {
    pub fn changed_anything(&self, tol: f64) -> bool {
        (self.trace_before - 1.0).abs() > tol
            || self.hermiticity_error > tol
            || self.min_eigenvalue < -tol
    }
}

fn qubit_count(rows: usize, cols: usize) -> Result<usize, QubitError> {
    if rows != cols || rows == 0 || !rows.is_power_of_two() {
        return Err(QubitError::BadDimension { rows, cols });
    }
    Ok(rows.trailing_zeros() as usize)
}

fn hermiticity_error(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn trace_re(m: &DMatrix<Complex64>) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

impl QubitState {
    /// Validates trace, Hermiticity and positivity within the default tolerances.
    pub fn new(rho: DMatrix<Complex64>) -> Result<Self, QubitError> {
        Self::with_tolerance(rho, STATE_TOL)
    }

    pub fn with_tolerance(rho: DMatrix<Complex64>, tol: f64) -> Result<Self, QubitError> {
        let qubits = qubit_count(rho.nrows(), rho.ncols())?;
        let herm = hermiticity_error(&rho);
        if herm > tol {
            return Err(QubitError::NotHermitian(herm));
        }
        let tr = trace_re(&rho);
        if (tr - 1.0).abs() > tol {
            return Err(QubitError::Trace(tr));
        }
        let min = hermitian_eigenvalues(&rho)[0];
        if min < -tol.max(PSD_TOL) {
            return Err(QubitError::NotPositive(min));
        }
        Ok(Self { qubits, rho: hermitian_part(&rho) })
    }

    /// `|ψ⟩⟨ψ|` for a state vector, normalized first.
    pub fn from_pure(psi: &DVector<Complex64>) -> Result<Self, QubitError> {
        let qubits = qubit_count(psi.len(), psi.len())?;
        let n = psi.norm();
        if n < 1e-300 {
            return Err(QubitError::ZeroVector);
        }
        let v = psi.unscale(n);
        Ok(Self { qubits, rho: &v * v.adjoint() })
    }

    pub fn from_real_amplitudes(amps: &[f64]) -> Result<Self, QubitError> {
        let v = DVector::from_iterator(amps.len(), amps.iter().map(|&a| Complex64::new(a, 0.0)));
        Self::from_pure(&v)
    }

    /// `Σ_k v_k v_k^†`, normalized to unit trace.
    pub fn from_unnormalized_vectors(vectors: &[DVector<Complex64>]) -> Result<Self, QubitError> {
        let first = vectors.first().ok_or(QubitError::ZeroVector)?;
        let d = first.len();
        let mut rho = DMatrix::zeros(d, d);
        for v in vectors {
            if v.len() != d {
                return Err(QubitError::DimensionMismatch(d, v.len()));
            }
            rho += v * v.adjoint();
        }
        let tr = trace_re(&rho);
        if tr <= 0.0 {
            return Err(QubitError::ZeroVector);
        }
        Self::new(rho.unscale(tr))
    }

    /// The maximally mixed state `I/2^n`.
    pub fn maximally_mixed(qubits: usize) -> Self {
        let d = 1usize << qubits;
        Self { qubits, rho: DMatrix::identity(d, d).unscale(d as f64) }
    }

    /// Repairs a nearly valid matrix the way tomography output is usually
    /// post-processed: Hermitian part, negative eigenvalues clipped to zero,
    /// trace renormalized. The report records how far the input was off.
    pub fn repaired(rho: DMatrix<Complex64>) -> Result<(Self, RepairReport), QubitError> {
        let qubits = qubit_count(rho.nrows(), rho.ncols())?;
        let hermiticity_error = hermiticity_error(&rho);
        let trace_before = trace_re(&rho);
        let h = hermitian_part(&rho);
        let eig = h.clone().symmetric_eigen();
        let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let clipped_weight: f64 = eig.eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
        let clipped = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0), 0.0));
        let fixed = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.adjoint();
        let tr = trace_re(&fixed);
        if tr <= 0.0 {
            return Err(QubitError::Trace(tr));
        }
        let state = Self { qubits, rho: hermitian_part(&fixed.unscale(tr)) };
        Ok((state, RepairReport { trace_before, hermiticity_error, min_eigenvalue, clipped_weight }))
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.rho
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.rho)
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.rho)
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized vector `ψ`.
    pub fn expectation_pure(&self, psi: &DVector<Complex64>) -> f64 {
        (psi.adjoint() * &self.rho * psi)[(0, 0)].re
    }

    /// Dominant eigenvector; the state itself when the input is pure.
    pub fn principal_vector(&self) -> DVector<Complex64> {
        let eig = self.rho.clone().symmetric_eigen();
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        eig.eigenvectors.column(k).into_owned()
    }
}

/// Kronecker product of a list of square matrices, first factor most significant.
pub fn kron_all(factors: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    factors
        .iter()
        .fold(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)), |acc, f| acc.kronecker(f))
}

/// The operator `op` acting on qubit `k` of an `n`-qubit register.
pub fn single_qubit_operator(n: usize, k: usize, op: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let factors: Vec<DMatrix<Complex64>> = (0..n)
        .rev()
        .map(|q| if q == k { op.clone() } else { DMatrix::identity(2, 2) })
        .collect();
    kron_all(&factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pure_state_has_unit_purity() {
        let s = QubitState::from_real_amplitudes(&[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.qubits(), 2);
        assert_abs_diff_eq!(s.purity(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn maximally_mixed_purity() {
        let s = QubitState::maximally_mixed(3);
        assert_abs_diff_eq!(s.purity(), 0.125, epsilon = 1e-14);
    }

    #[test]
    fn rejects_invalid_matrices() {
        let mut m = DMatrix::<Complex64>::identity(4, 4);
        assert!(matches!(QubitState::new(m.clone()), Err(QubitError::Trace(_))));
        m = m.unscale(4.0);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(QubitState::new(m.clone()), Err(QubitError::NotHermitian(_))));
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(1.2, 0.0),
            Complex64::new(-0.2, 0.0),
        ]));
        assert!(matches!(QubitState::new(bad), Err(QubitError::NotPositive(_))));
        let odd = DMatrix::<Complex64>::identity(3, 3).unscale(3.0);
        assert!(matches!(QubitState::new(odd), Err(QubitError::BadDimension { .. })));
    }

    #[test]
    fn repair_clips_and_renormalizes() {
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(1.1, 0.0),
            Complex64::new(-0.05, 0.0),
        ]));
        let (s, report) = QubitState::repaired(bad).unwrap();
        assert!(report.changed_anything(1e-9));
        assert_abs_diff_eq!(report.min_eigenvalue, -0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(s.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.matrix()[(1, 1)].re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_qubit_operator_targets_the_right_bit() {
        let x = DMatrix::from_row_slice(
            2,
            2,
            &[0.0, 1.0, 1.0, 0.0].map(|v| Complex64::new(v, 0.0)),
        );
        // Flip qubit 2 (most significant) of a 3-qubit register: |000> -> |100> = index 4.
        let op = single_qubit_operator(3, 2, &x);
        assert_abs_diff_eq!(op[(4, 0)].re, 1.0);
        let op0 = single_qubit_operator(3, 0, &x);
        assert_abs_diff_eq!(op0[(1, 0)].re, 1.0);
    }
}
