//! Tensor-product Hilbert spaces of a few bosonic modes and at most one qubit.
//!
//! Basis ordering is row-major: the leftmost subsystem is the most
//! significant digit of the flattened index. The canonical subsystem order is
//! `(a1, b1, a2, b2[, q | c])`. Kets written with the qubit between the two
//! cavities, `|a1 b1 q a2 b2>`, are stored here as `|a1 b1 a2 b2 q>`.

use std::collections::HashSet;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::HermitianEigen;
use crate::error::{Error, Result};
use crate::matrix::{self, ComplexMatrix, ONE, ZERO};

pub const STATE_TOL: f64 = 1e-10;
pub const MIN_EIGENVALUE_TOL: f64 = -1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    A1,
    B1,
    A2,
    B2,
    /// Single fiber mode in the short-fiber limit.
    C,
}

impl ModeLabel {
    pub const CAVITY_MODES: [ModeLabel; 4] = [ModeLabel::A1, ModeLabel::B1, ModeLabel::A2, ModeLabel::B2];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::A1 => "a1",
            ModeLabel::B1 => "b1",
            ModeLabel::A2 => "a2",
            ModeLabel::B2 => "b2",
            ModeLabel::C => "c",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubsystemKind {
    Mode(ModeLabel),
    Qubit,
}

impl SubsystemKind {
    pub fn label(self) -> &'static str {
        match self {
            SubsystemKind::Mode(m) => m.as_str(),
            SubsystemKind::Qubit => "q",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        Ok(match label {
            "a1" => SubsystemKind::Mode(ModeLabel::A1),
            "b1" => SubsystemKind::Mode(ModeLabel::B1),
            "a2" => SubsystemKind::Mode(ModeLabel::A2),
            "b2" => SubsystemKind::Mode(ModeLabel::B2),
            "c" => SubsystemKind::Mode(ModeLabel::C),
            "q" | "qubit" => SubsystemKind::Qubit,
            other => return Err(Error::UnknownName(other.to_string())),
        })
    }
}

impl fmt::Display for SubsystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subsystem {
    pub kind: SubsystemKind,
    pub local_dim: usize,
}

impl Subsystem {
    /// A bosonic mode truncated at `cutoff` photons.
    pub fn mode(label: ModeLabel, cutoff: usize) -> Self {
        Self {
            kind: SubsystemKind::Mode(label),
            local_dim: cutoff + 1,
        }
    }

    pub fn qubit() -> Self {
        Self {
            kind: SubsystemKind::Qubit,
            local_dim: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemLayout {
    subsystems: Vec<Subsystem>,
    total_dim: usize,
}

impl SystemLayout {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::InvalidLayout("no subsystems".into()));
        }
        let mut seen = HashSet::new();
        for s in &subsystems {
            if s.local_dim < 2 {
                return Err(Error::InvalidLayout(format!(
                    "subsystem {} has local dimension {} < 2",
                    s.kind, s.local_dim
                )));
            }
            if s.kind == SubsystemKind::Qubit && s.local_dim != 2 {
                return Err(Error::InvalidLayout("qubit local dimension must be 2".into()));
            }
            if !seen.insert(s.kind) {
                return Err(Error::InvalidLayout(format!("duplicate subsystem {}", s.kind)));
            }
        }
        let total_dim = subsystems.iter().map(|s| s.local_dim).product();
        Ok(Self {
            subsystems,
            total_dim,
        })
    }

    /// `(a1, b1, a2, b2)` each truncated at `cutoff` photons.
    pub fn four_modes(cutoff: usize) -> Result<Self> {
        Self::new(ModeLabel::CAVITY_MODES.iter().map(|&m| Subsystem::mode(m, cutoff)).collect())
    }

    pub fn four_modes_and_qubit(cutoff: usize) -> Result<Self> {
        let mut subs: Vec<_> = ModeLabel::CAVITY_MODES.iter().map(|&m| Subsystem::mode(m, cutoff)).collect();
        subs.push(Subsystem::qubit());
        Self::new(subs)
    }

    pub fn four_modes_and_fiber(cutoff: usize) -> Result<Self> {
        let mut subs: Vec<_> = ModeLabel::CAVITY_MODES.iter().map(|&m| Subsystem::mode(m, cutoff)).collect();
        subs.push(Subsystem::mode(ModeLabel::C, cutoff));
        Self::new(subs)
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn local_dim(&self, site: usize) -> Result<usize> {
        self.subsystems
            .get(site)
            .map(|s| s.local_dim)
            .ok_or(Error::InvalidSite(site))
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.local_dim).collect()
    }

    pub fn site_of(&self, kind: SubsystemKind) -> Option<usize> {
        self.subsystems.iter().position(|s| s.kind == kind)
    }

    pub fn require_site(&self, kind: SubsystemKind) -> Result<usize> {
        self.site_of(kind)
            .ok_or_else(|| Error::LayoutMismatch(format!("layout has no subsystem {kind}")))
    }

    pub fn has_qubit(&self) -> bool {
        self.site_of(SubsystemKind::Qubit).is_some()
    }

    /// Flattened index of a tuple of local occupations.
    pub fn flat_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: occupations.len(),
            });
        }
        let mut idx = 0;
        for (site, (&n, s)) in occupations.iter().zip(&self.subsystems).enumerate() {
            if n >= s.local_dim {
                return Err(Error::IndexOutOfRange {
                    site,
                    index: n,
                    dim: s.local_dim,
                });
            }
            idx = idx * s.local_dim + n;
        }
        Ok(idx)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.len()];
        for (slot, s) in occ.iter_mut().zip(&self.subsystems).rev() {
            *slot = index % s.local_dim;
            index /= s.local_dim;
        }
        occ
    }

    pub fn sub_layout(&self, sites: &[usize]) -> Result<Self> {
        let subs = sites
            .iter()
            .map(|&s| self.subsystems.get(s).copied().ok_or(Error::InvalidSite(s)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(subs)
    }
}

/// Truncated annihilation operator `a|n> = sqrt(n)|n-1>`. On a 2-level
/// system this is the qubit lowering operator `sigma^- = |g><e|`.
pub fn annihilation(dim: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn number(dim: usize) -> ComplexMatrix {
    ComplexMatrix::diagonal(&(0..dim).map(|n| Complex64::new(n as f64, 0.0)).collect::<Vec<_>>())
}

/// `1 ⊗ ... ⊗ local_op ⊗ ... ⊗ 1` with `local_op` at `site`.
pub fn embed_operator(layout: &SystemLayout, site: usize, local_op: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = layout.local_dim(site)?;
    if local_op.rows() != d || local_op.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: local_op.rows().max(local_op.cols()),
        });
    }
    let dims = layout.dims();
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    Ok(ComplexMatrix::identity(left)
        .kron(local_op)
        .kron(&ComplexMatrix::identity(right)))
}

/// Annihilation operator of `kind` lifted to the full space.
pub fn lowering(layout: &SystemLayout, kind: SubsystemKind) -> Result<ComplexMatrix> {
    let site = layout.require_site(kind)?;
    embed_operator(layout, site, &annihilation(layout.local_dim(site)?))
}

/// Total excitation number `N = Σ n_site` over every subsystem (photons plus qubit excitation).
pub fn excitation_number(layout: &SystemLayout) -> ComplexMatrix {
    let diag: Vec<Complex64> = (0..layout.total_dim())
        .map(|i| Complex64::new(layout.occupations(i).iter().sum::<usize>() as f64, 0.0))
        .collect();
    ComplexMatrix::diagonal(&diag)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    Pure(Vec<Complex64>),
    Density(ComplexMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    layout: SystemLayout,
    repr: Representation,
}

impl QuantumState {
    /// Validates the norm; use [`normalized_pure`](Self::normalized_pure) to rescale.
    pub fn pure(layout: SystemLayout, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                found: amplitudes.len(),
            });
        }
        let n = matrix::norm(&amplitudes);
        if (n - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("state norm {n} differs from 1")));
        }
        Ok(Self {
            layout,
            repr: Representation::Pure(amplitudes),
        })
    }

    pub fn normalized_pure(layout: SystemLayout, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let n = matrix::norm(&amplitudes);
        if n == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        amplitudes.iter_mut().for_each(|z| *z /= n);
        Self::pure(layout, amplitudes)
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn density(layout: SystemLayout, rho: ComplexMatrix) -> Result<Self> {
        let d = layout.total_dim();
        if rho.rows() != d || rho.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rho.rows(),
            });
        }
        validate_density(&rho, STATE_TOL, MIN_EIGENVALUE_TOL)?;
        Ok(Self {
            layout,
            repr: Representation::Density(rho),
        })
    }

    /// Skips validation; callers check tolerances on their own terms.
    pub(crate) fn density_unchecked(layout: SystemLayout, rho: ComplexMatrix) -> Self {
        Self {
            layout,
            repr: Representation::Density(rho),
        }
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn amplitudes(&self) -> Option<&[Complex64]> {
        match &self.repr {
            Representation::Pure(v) => Some(v),
            Representation::Density(_) => None,
        }
    }

    pub fn is_pure_vector(&self) -> bool {
        matches!(self.repr, Representation::Pure(_))
    }

    pub fn density_matrix(&self) -> ComplexMatrix {
        match &self.repr {
            Representation::Pure(v) => ComplexMatrix::outer(v, v),
            Representation::Density(rho) => rho.clone(),
        }
    }

    pub fn expectation(&self, op: &ComplexMatrix) -> Result<Complex64> {
        match &self.repr {
            Representation::Pure(v) => Ok(matrix::inner(v, &op.mul_vec(v)?)),
            Representation::Density(rho) => Ok(op.matmul(rho)?.trace()),
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.repr {
            Representation::Pure(v) => matrix::norm(v).powi(2),
            Representation::Density(rho) => rho.trace().re,
        }
    }

    pub fn purity(&self) -> f64 {
        match &self.repr {
            Representation::Pure(v) => matrix::norm(v).powi(4),
            Representation::Density(rho) => rho.matmul(rho).map(|m| m.trace().re).unwrap_or(f64::NAN),
        }
    }

    /// Probability of finding `site` with local occupation `level`.
    pub fn population(&self, site: usize, level: usize) -> Result<f64> {
        let d = self.layout.local_dim(site)?;
        if level >= d {
            return Err(Error::IndexOutOfRange { site, index: level, dim: d });
        }
        let mut p = 0.0;
        for i in 0..self.layout.total_dim() {
            if self.layout.occupations(i)[site] == level {
                p += match &self.repr {
                    Representation::Pure(v) => v[i].norm_sqr(),
                    Representation::Density(rho) => rho[(i, i)].re,
                };
            }
        }
        Ok(p)
    }

    /// Mean occupation `<n>` of `site`.
    pub fn mean_occupation(&self, site: usize) -> Result<f64> {
        let d = self.layout.local_dim(site)?;
        (0..d).map(|n| Ok(n as f64 * self.population(site, n)?)).sum()
    }
}

/// Checks Hermiticity and unit trace to `tol` and a minimum eigenvalue above `min_eig`.
pub fn validate_density(rho: &ComplexMatrix, tol: f64, min_eig: f64) -> Result<()> {
    let herm = rho.hermitian_deviation();
    if herm > tol {
        return Err(Error::InvalidState(format!(
            "density matrix not Hermitian (deviation {herm:e})"
        )));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return Err(Error::InvalidState(format!("density matrix trace {tr} differs from 1")));
    }
    let lowest = HermitianEigen::new(rho, tol.max(1e-12))?.min_value();
    if lowest < min_eig {
        return Err(Error::InvalidState(format!(
            "density matrix has negative eigenvalue {lowest:e}"
        )));
    }
    Ok(())
}

/// Product basis ket with the given local occupations.
pub fn basis_state(layout: &SystemLayout, occupations: &[usize]) -> Result<QuantumState> {
    let idx = layout.flat_index(occupations)?;
    let mut v = vec![ZERO; layout.total_dim()];
    v[idx] = ONE;
    QuantumState::pure(layout.clone(), v)
}

/// Reduced density matrix on `keep` (sorted into layout order).
pub fn partial_trace(state: &QuantumState, keep: &[usize]) -> Result<QuantumState> {
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let layout = state.layout();
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&s| s >= layout.len()) {
        return Err(Error::InvalidSite(bad));
    }
    let traced: Vec<usize> = (0..layout.len()).filter(|s| !kept.contains(s)).collect();
    let dims = layout.dims();
    let sub = layout.sub_layout(&kept)?;
    let kept_dim = sub.total_dim();
    let traced_dim: usize = traced.iter().map(|&s| dims[s]).product();

    // full index for every (kept, traced) pair
    let compose = |k: usize, t: usize| -> usize {
        let kocc = sub.occupations(k);
        let mut tocc = vec![0; traced.len()];
        let mut rem = t;
        for (slot, &s) in tocc.iter_mut().zip(&traced).rev() {
            *slot = rem % dims[s];
            rem /= dims[s];
        }
        let mut occ = vec![0; layout.len()];
        for (&s, &n) in kept.iter().zip(&kocc) {
            occ[s] = n;
        }
        for (&s, &n) in traced.iter().zip(&tocc) {
            occ[s] = n;
        }
        occ.iter().zip(&dims).fold(0, |acc, (&n, &d)| acc * d + n)
    };
    let index: Vec<Vec<usize>> = (0..kept_dim)
        .map(|k| (0..traced_dim).map(|t| compose(k, t)).collect())
        .collect();

    let mut out = ComplexMatrix::zeros(kept_dim, kept_dim);
    match state.representation() {
        Representation::Pure(v) => {
            for i in 0..kept_dim {
                for j in 0..kept_dim {
                    out[(i, j)] = (0..traced_dim)
                        .map(|t| v[index[i][t]] * v[index[j][t]].conj())
                        .sum();
                }
            }
        }
        Representation::Density(rho) => {
            for i in 0..kept_dim {
                for j in 0..kept_dim {
                    out[(i, j)] = (0..traced_dim).map(|t| rho[(index[i][t], index[j][t])]).sum();
                }
            }
        }
    }
    Ok(QuantumState::density_unchecked(sub, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn basis_state_flat_index() {
        let layout = SystemLayout::four_modes(1).unwrap();
        let s = basis_state(&layout, &[1, 0, 0, 0]).unwrap();
        let v = s.amplitudes().unwrap();
        assert_eq!(v.len(), 16);
        assert_eq!(v[8], ONE);
        assert_eq!(v.iter().filter(|z| **z != ZERO).count(), 1);

        let vac = basis_state(&layout, &[0, 0, 0, 0]).unwrap();
        assert_eq!(vac.amplitudes().unwrap()[0], ONE);
    }

    #[test]
    fn basis_state_errors() {
        let layout = SystemLayout::four_modes(1).unwrap();
        assert!(matches!(
            basis_state(&layout, &[0, 0, 0, 2]),
            Err(Error::IndexOutOfRange { site: 3, index: 2, dim: 2 })
        ));
        assert!(matches!(basis_state(&layout, &[0, 0, 0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn layout_rejects_duplicates_and_small_dims() {
        let dup = vec![Subsystem::mode(ModeLabel::A1, 1), Subsystem::mode(ModeLabel::A1, 1)];
        assert!(SystemLayout::new(dup).is_err());
        let tiny = vec![Subsystem::mode(ModeLabel::A1, 0)];
        assert!(SystemLayout::new(tiny).is_err());
    }

    #[test]
    fn embed_annihilation_two_sites() {
        let layout = SystemLayout::new(vec![
            Subsystem::mode(ModeLabel::A1, 1),
            Subsystem::mode(ModeLabel::B1, 1),
        ])
        .unwrap();
        let m = embed_operator(&layout, 0, &annihilation(2)).unwrap();
        assert_eq!(m.rows(), 4);
        // <00|M|10> = 1, nothing else nonzero except <01|M|11>
        assert_eq!(m[(0, 2)], ONE);
        assert_eq!(m[(1, 3)], ONE);
        assert_eq!(m.as_slice().iter().filter(|z| **z != ZERO).count(), 2);

        let id = embed_operator(&layout, 1, &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(id, ComplexMatrix::identity(4));
    }

    #[test]
    fn embed_errors() {
        let layout = SystemLayout::four_modes(1).unwrap();
        assert!(matches!(embed_operator(&layout, 7, &annihilation(2)), Err(Error::InvalidSite(7))));
        assert!(matches!(
            embed_operator(&layout, 0, &annihilation(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn qubit_lowering_maps_excited_to_ground() {
        let layout = SystemLayout::four_modes_and_qubit(1).unwrap();
        let sm = lowering(&layout, SubsystemKind::Qubit).unwrap();
        let e = basis_state(&layout, &[0, 0, 0, 0, 1]).unwrap();
        let out = sm.mul_vec(e.amplitudes().unwrap()).unwrap();
        let g = basis_state(&layout, &[0, 0, 0, 0, 0]).unwrap();
        assert_eq!(out, g.amplitudes().unwrap());
    }

    #[test]
    fn partial_trace_bell_marginal() {
        let layout = SystemLayout::new(vec![
            Subsystem::mode(ModeLabel::A1, 1),
            Subsystem::mode(ModeLabel::B1, 1),
        ])
        .unwrap();
        let s = FRAC_1_SQRT_2;
        let bell = QuantumState::pure(layout, vec![ZERO, c(s), c(s), ZERO]).unwrap();
        let r = partial_trace(&bell, &[0]).unwrap().density_matrix();
        let expected = ComplexMatrix::diagonal(&[c(0.5), c(0.5)]);
        assert!(r.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn partial_trace_product_state() {
        let layout = SystemLayout::new(vec![
            Subsystem::mode(ModeLabel::A1, 1),
            Subsystem::mode(ModeLabel::B1, 1),
        ])
        .unwrap();
        let s = basis_state(&layout, &[1, 0]).unwrap();
        let r = partial_trace(&s, &[0]).unwrap().density_matrix();
        assert!(r.max_abs_diff(&ComplexMatrix::diagonal(&[ZERO, ONE])) < 1e-15);
    }

    #[test]
    fn partial_trace_four_mode_w_state() {
        // oracle: sum of outer products of the four kets, traced by hand
        let layout = SystemLayout::four_modes(1).unwrap();
        let mut v = vec![ZERO; 16];
        for occ in [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]] {
            v[layout.flat_index(&occ).unwrap()] = c(0.5);
        }
        let w = QuantumState::pure(layout, v).unwrap();
        let r = partial_trace(&w, &[0, 1]).unwrap().density_matrix();
        // |00><00| weight 1/2, single-excitation block all 1/4
        let mut expected = ComplexMatrix::zeros(4, 4);
        expected[(0, 0)] = c(0.5);
        for i in [1, 2] {
            for j in [1, 2] {
                expected[(i, j)] = c(0.25);
            }
        }
        assert!(r.max_abs_diff(&expected) < 1e-15);
        let eig = HermitianEigen::new(&r, 1e-12).unwrap();
        assert_eq!(eig.values.iter().filter(|&&x| x > 1e-12).count(), 2);
    }

    #[test]
    fn partial_trace_errors() {
        let layout = SystemLayout::four_modes(1).unwrap();
        let s = basis_state(&layout, &[0, 0, 0, 0]).unwrap();
        assert!(matches!(partial_trace(&s, &[]), Err(Error::EmptyKeep)));
        assert!(matches!(partial_trace(&s, &[4]), Err(Error::InvalidSite(4))));
    }

    #[test]
    fn density_validation() {
        let layout = SystemLayout::new(vec![Subsystem::qubit()]).unwrap();
        let bad = ComplexMatrix::diagonal(&[c(1.5), c(-0.5)]);
        assert!(QuantumState::density(layout.clone(), bad).is_err());
        let ok = ComplexMatrix::diagonal(&[c(0.25), c(0.75)]);
        let st = QuantumState::density(layout, ok).unwrap();
        assert!((st.population(0, 1).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn excitation_number_counts_all_sites() {
        let layout = SystemLayout::four_modes_and_qubit(1).unwrap();
        let n = excitation_number(&layout);
        let idx = layout.flat_index(&[1, 0, 1, 0, 1]).unwrap();
        assert_eq!(n[(idx, idx)], c(3.0));
    }
}
