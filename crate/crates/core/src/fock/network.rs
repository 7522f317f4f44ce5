use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{FockError, FockPolynomial, ModeRegistry, Monomial, PRUNE_TOL, UNITARY_TOL};

/// A passive linear-optical network: an `M×M` unitary mode-transfer matrix.
///
/// Column `m` of `S` is the image of `a_m^†`. Loss is never represented by a
/// non-unitary `S`; it is modelled with explicit vacuum modes instead.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearNetwork {
    registry: ModeRegistry,
    matrix: DMatrix<Complex64>,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<(), FockError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(FockError::ParameterOutOfRange { name, value })
    }
}

/// Largest entry of `|S†S − I|`.
pub(crate) fn unitarity_error(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let g = m.adjoint() * m;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - c(target)).norm());
        }
    }
    worst
}

impl LinearNetwork {
    pub fn new(registry: &ModeRegistry, matrix: DMatrix<Complex64>) -> Result<Self, FockError> {
        let m = registry.len();
        if matrix.nrows() != m || matrix.ncols() != m {
            return Err(FockError::DimensionMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                modes: m,
            });
        }
        let err = unitarity_error(&matrix);
        if err > UNITARY_TOL {
            return Err(FockError::NonUnitary(err));
        }
        Ok(Self { registry: registry.clone(), matrix })
    }

    /// Builds a network from a real row-major matrix.
    pub fn from_real(registry: &ModeRegistry, rows: &[&[f64]]) -> Result<Self, FockError> {
        let m = registry.len();
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(FockError::DimensionMismatch {
                rows: rows.len(),
                cols: rows.first().map_or(0, |r| r.len()),
                modes: m,
            });
        }
        let matrix = DMatrix::from_fn(m, m, |i, j| c(rows[i][j]));
        Self::new(registry, matrix)
    }

    pub fn identity(registry: &ModeRegistry) -> Self {
        let m = registry.len();
        Self { registry: registry.clone(), matrix: DMatrix::identity(m, m) }
    }

    /// Two-mode splitter with reflectivity `eta` between modes `i` and `j`:
    /// `S_ii = −√η`, `S_ij = S_ji = √(1−η)`, `S_jj = √η`.
    pub fn beam_splitter(
        registry: &ModeRegistry,
        i: usize,
        j: usize,
        eta: f64,
    ) -> Result<Self, FockError> {
        check_unit_interval("eta", eta)?;
        registry.check_mode(i)?;
        registry.check_mode(j)?;
        let mut s = DMatrix::identity(registry.len(), registry.len());
        let r = eta.sqrt();
        let t = (1.0 - eta).sqrt();
        s[(i, i)] = c(-r);
        s[(i, j)] = c(t);
        s[(j, i)] = c(t);
        s[(j, j)] = c(r);
        Self::new(registry, s)
    }

    /// Real rotation by `theta` in the `(h, v)` plane:
    /// `a_h^† → cos θ a_h^† + sin θ a_v^†`, `a_v^† → −sin θ a_h^† + cos θ a_v^†`.
    pub fn polarization_rotation(
        registry: &ModeRegistry,
        h: usize,
        v: usize,
        theta: f64,
    ) -> Result<Self, FockError> {
        registry.check_mode(h)?;
        registry.check_mode(v)?;
        let mut s = DMatrix::identity(registry.len(), registry.len());
        let (sn, cs) = theta.sin_cos();
        s[(h, h)] = c(cs);
        s[(v, h)] = c(sn);
        s[(h, v)] = c(-sn);
        s[(v, v)] = c(cs);
        Self::new(registry, s)
    }

    /// `a_m^† → e^{iθ} a_m^†`.
    pub fn phase_shift(registry: &ModeRegistry, mode: usize, theta: f64) -> Result<Self, FockError> {
        registry.check_mode(mode)?;
        let mut s = DMatrix::identity(registry.len(), registry.len());
        s[(mode, mode)] = Complex64::from_polar(1.0, theta);
        Self::new(registry, s)
    }

    /// Diagonal network with one phase per mode.
    pub fn phases(registry: &ModeRegistry, thetas: &[f64]) -> Result<Self, FockError> {
        if thetas.len() != registry.len() {
            return Err(FockError::DimensionMismatch {
                rows: thetas.len(),
                cols: thetas.len(),
                modes: registry.len(),
            });
        }
        let s = DMatrix::from_fn(thetas.len(), thetas.len(), |i, j| {
            if i == j {
                Complex64::from_polar(1.0, thetas[i])
            } else {
                Complex64::default()
            }
        });
        Self::new(registry, s)
    }

    pub fn swap(registry: &ModeRegistry, i: usize, j: usize) -> Result<Self, FockError> {
        registry.check_mode(i)?;
        registry.check_mode(j)?;
        let mut s = DMatrix::identity(registry.len(), registry.len());
        s.swap_columns(i, j);
        Self::new(registry, s)
    }

    pub fn registry(&self) -> &ModeRegistry {
        &self.registry
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn unitarity_error(&self) -> f64 {
        unitarity_error(&self.matrix)
    }

    /// The network that applies `self` first and `next` afterwards
    /// (matrix `next · self`).
    pub fn then(&self, next: &LinearNetwork) -> Result<Self, FockError> {
        if self.registry != next.registry {
            return Err(FockError::RegistryMismatch);
        }
        Ok(Self { registry: self.registry.clone(), matrix: &next.matrix * &self.matrix })
    }

    /// Lifts the network onto a larger registry, acting as identity on the
    /// modes it does not know about.
    pub fn embed(&self, target: &ModeRegistry) -> Result<Self, FockError> {
        let map = self.registry.embedding_into(target)?;
        let mut s = DMatrix::identity(target.len(), target.len());
        for (i, &ti) in map.iter().enumerate() {
            for (j, &tj) in map.iter().enumerate() {
                s[(ti, tj)] = self.matrix[(i, j)];
            }
        }
        Ok(Self { registry: target.clone(), matrix: s })
    }

    /// Lifts the network onto `target` through explicit index maps: each
    /// entry of `copies` lists where our modes live in `target`, and the
    /// network acts identically on every copy.
    pub fn lift_to_copies(
        &self,
        target: &ModeRegistry,
        copies: &[Vec<usize>],
    ) -> Result<Self, FockError> {
        let mut s = DMatrix::identity(target.len(), target.len());
        for map in copies {
            if map.len() != self.registry.len() {
                return Err(FockError::DimensionMismatch {
                    rows: map.len(),
                    cols: map.len(),
                    modes: self.registry.len(),
                });
            }
            for &t in map {
                target.check_mode(t)?;
            }
            for (i, &ti) in map.iter().enumerate() {
                for (j, &tj) in map.iter().enumerate() {
                    s[(ti, tj)] = self.matrix[(i, j)];
                }
            }
        }
        Self::new(target, s)
    }
}

/// Evolves `state` through `net` by substituting every creation operator with
/// the corresponding column of the transfer matrix.
pub fn apply_network(
    state: &FockPolynomial,
    net: &LinearNetwork,
) -> Result<FockPolynomial, FockError> {
    if state.registry() != net.registry() {
        return Err(FockError::RegistryMismatch);
    }
    let err = net.unitarity_error();
    if err > UNITARY_TOL {
        return Err(FockError::NonUnitary(err));
    }
    let m = net.registry().len();
    // Sparse columns: nonzero (row, entry) pairs.
    let columns: Vec<Vec<(usize, Complex64)>> = (0..m)
        .map(|col| {
            (0..m)
                .filter_map(|row| {
                    let v = net.matrix()[(row, col)];
                    (v.norm() > 0.0).then_some((row, v))
                })
                .collect()
        })
        .collect();

    let mut out: BTreeMap<Monomial, Complex64> = BTreeMap::new();
    for (mono, coeff) in state.terms() {
        let mut partial: BTreeMap<Monomial, Complex64> = BTreeMap::new();
        partial.insert(Monomial::vacuum(), *coeff);
        for &mode in mono.mode_list() {
            let mut next: BTreeMap<Monomial, Complex64> = BTreeMap::new();
            for (pm, pc) in &partial {
                for &(row, s) in &columns[mode as usize] {
                    *next.entry(pm.times_mode(row)).or_default() += pc * s;
                }
            }
            next.retain(|_, v| v.norm() >= PRUNE_TOL * 1e-3);
            partial = next;
        }
        for (pm, pc) in partial {
            *out.entry(pm).or_default() += pc;
        }
    }
    Ok(FockPolynomial::from_parts(state.registry(), out, state.cutoff()))
}
