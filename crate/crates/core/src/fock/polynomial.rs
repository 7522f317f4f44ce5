use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use smallvec::SmallVec;

use super::{FockError, ModeRegistry, DEFAULT_PHOTON_CUTOFF, PRUNE_TOL};

/// Product of creation operators, stored as a sorted multiset of mode indices.
///
/// `a_2^† a_2^† a_5^†` is `[2, 2, 5]`; the empty monomial is the vacuum.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(SmallVec<[u16; 8]>);

impl Monomial {
    pub fn vacuum() -> Self {
        Self::default()
    }

    pub fn from_modes<I: IntoIterator<Item = usize>>(modes: I) -> Self {
        let mut v: SmallVec<[u16; 8]> = modes.into_iter().map(|m| m as u16).collect();
        v.sort_unstable();
        Self(v)
    }

    pub fn from_occupations(occupations: &[u32]) -> Self {
        let mut v = SmallVec::new();
        for (mode, &n) in occupations.iter().enumerate() {
            for _ in 0..n {
                v.push(mode as u16);
            }
        }
        Self(v)
    }

    pub fn photon_count(&self) -> u32 {
        self.0.len() as u32
    }

    pub fn occupation(&self, mode: usize) -> u32 {
        self.0.iter().filter(|&&m| m as usize == mode).count() as u32
    }

    pub fn occupations(&self, modes: usize) -> Vec<u32> {
        let mut occ = vec![0; modes];
        for &m in &self.0 {
            occ[m as usize] += 1;
        }
        occ
    }

    /// `(mode, occupation)` pairs for occupied modes, in mode order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        let mut i = 0;
        std::iter::from_fn(move || {
            let m = *self.0.get(i)?;
            let mut n = 0;
            while self.0.get(i) == Some(&m) {
                i += 1;
                n += 1;
            }
            Some((m as usize, n))
        })
    }

    /// `Π √(n_m!)`, the factor turning a coefficient into a Fock amplitude.
    pub fn fock_factor(&self) -> f64 {
        self.occupied()
            .map(|(_, n)| (1..=n).map(f64::from).product::<f64>().sqrt())
            .product()
    }

    pub(crate) fn times_mode(&self, mode: usize) -> Self {
        let m = mode as u16;
        let mut v = self.0.clone();
        let pos = v.partition_point(|&x| x <= m);
        v.insert(pos, m);
        Self(v)
    }

    pub(crate) fn times(&self, other: &Monomial) -> Self {
        let mut v: SmallVec<[u16; 8]> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        Self(v)
    }

    pub(crate) fn mode_list(&self) -> &[u16] {
        &self.0
    }

    pub(crate) fn remap(&self, map: &[usize]) -> Self {
        Self::from_modes(self.0.iter().map(|&m| map[m as usize]))
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Monomial{:?}", self.0.as_slice())
    }
}

/// A multimode state `f(a^†)|0⟩` with complex coefficients over a registry.
///
/// Coefficients are stored in a `BTreeMap` so iteration, and therefore every
/// floating-point sum over terms, happens in a fixed order.
#[derive(Clone, PartialEq)]
pub struct FockPolynomial {
    registry: ModeRegistry,
    terms: BTreeMap<Monomial, Complex64>,
    cutoff: u32,
}

impl FockPolynomial {
    pub fn zero(registry: &ModeRegistry) -> Self {
        Self { registry: registry.clone(), terms: BTreeMap::new(), cutoff: DEFAULT_PHOTON_CUTOFF }
    }

    pub fn vacuum(registry: &ModeRegistry) -> Self {
        let mut p = Self::zero(registry);
        p.terms.insert(Monomial::vacuum(), Complex64::new(1.0, 0.0));
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, merging
    /// repeated monomials.
    pub fn from_terms<I>(registry: &ModeRegistry, terms: I) -> Result<Self, FockError>
    where
        I: IntoIterator<Item = (Monomial, Complex64)>,
    {
        let mut p = Self::zero(registry);
        for (mono, c) in terms {
            for &m in mono.mode_list() {
                registry.check_mode(m as usize)?;
            }
            p.add_term(mono, c);
        }
        p.prune();
        p.check_cutoff()?;
        Ok(p)
    }

    /// `coefficient · Π a_{name}^†` for the listed labels (repeats allowed).
    pub fn monomial(
        registry: &ModeRegistry,
        names: &[&str],
        coefficient: Complex64,
    ) -> Result<Self, FockError> {
        let modes = registry.indices(names)?;
        Self::from_terms(registry, [(Monomial::from_modes(modes), coefficient)])
    }

    pub fn with_cutoff(mut self, cutoff: u32) -> Result<Self, FockError> {
        self.cutoff = cutoff;
        self.check_cutoff()?;
        Ok(self)
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn registry(&self) -> &ModeRegistry {
        &self.registry
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, mono: &Monomial) -> Complex64 {
        self.terms.get(mono).copied().unwrap_or_default()
    }

    /// Coefficient of the monomial named by mode labels.
    pub fn coefficient_of(&self, names: &[&str]) -> Result<Complex64, FockError> {
        let modes = self.registry.indices(names)?;
        Ok(self.coefficient(&Monomial::from_modes(modes)))
    }

    pub fn max_photons(&self) -> u32 {
        self.terms.keys().map(Monomial::photon_count).max().unwrap_or(0)
    }

    /// `⟨ψ|ψ⟩`, using Fock amplitudes.
    pub fn squared_norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c.norm_sqr() * m.fock_factor().powi(2))
            .sum()
    }

    /// Occupation vector → Fock amplitude.
    pub fn to_fock_amplitudes(&self) -> BTreeMap<Vec<u32>, Complex64> {
        let modes = self.registry.len();
        self.terms
            .iter()
            .map(|(m, c)| (m.occupations(modes), c * m.fock_factor()))
            .collect()
    }

    /// Inverse of [`to_fock_amplitudes`](Self::to_fock_amplitudes).
    pub fn from_fock_amplitudes(
        registry: &ModeRegistry,
        amplitudes: &BTreeMap<Vec<u32>, Complex64>,
    ) -> Result<Self, FockError> {
        let mut terms = Vec::with_capacity(amplitudes.len());
        for (occ, a) in amplitudes {
            if occ.len() != registry.len() {
                return Err(FockError::DimensionMismatch {
                    rows: occ.len(),
                    cols: 1,
                    modes: registry.len(),
                });
            }
            let mono = Monomial::from_occupations(occ);
            let c = a / mono.fock_factor();
            terms.push((mono, c));
        }
        Self::from_terms(registry, terms)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= factor;
        }
        out.prune();
        out
    }

    pub fn normalized(&self) -> Result<Self, FockError> {
        let n = self.squared_norm();
        if n < PRUNE_TOL {
            return Err(FockError::NotNormalized(n));
        }
        Ok(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    pub fn sum(&self, other: &Self) -> Result<Self, FockError> {
        if self.registry != other.registry {
            return Err(FockError::RegistryMismatch);
        }
        let mut out = self.clone();
        out.cutoff = out.cutoff.max(other.cutoff);
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out.prune();
        Ok(out)
    }

    /// Operator product `f·g` (creation operators commute).
    pub fn product(&self, other: &Self) -> Result<Self, FockError> {
        if self.registry != other.registry {
            return Err(FockError::RegistryMismatch);
        }
        let mut out = Self::zero(&self.registry);
        out.cutoff = self.cutoff.max(other.cutoff);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.times(m2), c1 * c2);
            }
        }
        out.prune();
        out.check_cutoff()?;
        Ok(out)
    }

    /// Re-expresses the state over a larger registry; new modes are vacuum.
    pub fn embed(&self, target: &ModeRegistry) -> Result<Self, FockError> {
        let map = self.registry.embedding_into(target)?;
        let mut out = Self::zero(target);
        out.cutoff = self.cutoff;
        for (m, c) in &self.terms {
            out.add_term(m.remap(&map), *c);
        }
        Ok(out)
    }

    /// Keeps only the terms for which `keep` holds.
    pub fn filtered<F: FnMut(&Monomial) -> bool>(&self, mut keep: F) -> Self {
        let mut out = self.clone();
        out.terms.retain(|m, _| keep(m));
        out
    }

    pub(crate) fn add_term(&mut self, mono: Monomial, c: Complex64) {
        *self.terms.entry(mono).or_default() += c;
    }

    pub(crate) fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() >= PRUNE_TOL);
    }

    pub(crate) fn check_cutoff(&self) -> Result<(), FockError> {
        let found = self.max_photons();
        if found > self.cutoff {
            Err(FockError::CutoffExceeded { found, cutoff: self.cutoff })
        } else {
            Ok(())
        }
    }

    pub(crate) fn from_parts(
        registry: &ModeRegistry,
        terms: BTreeMap<Monomial, Complex64>,
        cutoff: u32,
    ) -> Self {
        let mut p = Self { registry: registry.clone(), terms, cutoff };
        p.prune();
        p
    }
}

impl fmt::Debug for FockPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.registry.names();
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)", c.re, c.im)?;
            for (mode, n) in m.occupied() {
                if n == 1 {
                    write!(f, " {}†", names[mode])?;
                } else {
                    write!(f, " {}†^{}", names[mode], n)?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}
