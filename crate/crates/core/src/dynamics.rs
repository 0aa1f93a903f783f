//! Unitary evolution through an exact Hermitian eigendecomposition,
//! `|psi(tau)> = V exp(-i E tau) V^dagger |psi(0)>`.

use num_complex::Complex64;

use crate::eigen::HermitianEigen;
use crate::error::{Error, Result};
use crate::hilbert::{QuantumState, Representation};
use crate::matrix::{self, ComplexMatrix};

pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Propagator {
    hamiltonian: ComplexMatrix,
    eigen: HermitianEigen,
}

impl Propagator {
    pub fn new(hamiltonian: ComplexMatrix) -> Result<Self> {
        let eigen = HermitianEigen::new(&hamiltonian, HERMITIAN_TOL)?;
        Ok(Self { hamiltonian, eigen })
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eigen.vectors
    }

    pub fn dim(&self) -> usize {
        self.eigen.dim()
    }

    /// Amplitudes in the eigenbasis, `V^dagger psi`.
    pub fn to_eigenbasis(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.len(),
            });
        }
        let v = &self.eigen.vectors;
        Ok((0..self.dim())
            .map(|k| (0..self.dim()).map(|r| v[(r, k)].conj() * psi[r]).sum())
            .collect())
    }

    /// Evolves eigenbasis coefficients to `tau` and maps back to the product basis.
    pub fn from_eigenbasis(&self, coeffs: &[Complex64], tau: f64) -> Vec<Complex64> {
        let v = &self.eigen.vectors;
        let phased: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.eigen.values)
            .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * tau))
            .collect();
        (0..self.dim())
            .map(|r| v.row(r).iter().zip(&phased).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply(&self, psi: &[Complex64], tau: f64) -> Result<Vec<Complex64>> {
        Ok(self.from_eigenbasis(&self.to_eigenbasis(psi)?, tau))
    }

    /// `U(tau) = exp(-i H tau)`
    pub fn unitary(&self, tau: f64) -> ComplexMatrix {
        self.eigen.map(|e| Complex64::from_polar(1.0, -e * tau))
    }

    /// Evolves a pure state or a density matrix.
    pub fn evolve(&self, state: &QuantumState, tau: f64) -> Result<QuantumState> {
        if state.layout().total_dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: state.layout().total_dim(),
            });
        }
        match state.representation() {
            Representation::Pure(psi) => {
                QuantumState::pure(state.layout().clone(), self.apply(psi, tau)?)
            }
            Representation::Density(rho) => {
                let u = self.unitary(tau);
                let out = u.matmul(rho)?.matmul(&u.adjoint())?;
                QuantumState::density(state.layout().clone(), out)
            }
        }
    }
}

/// One-shot evolution; build a [`Propagator`] once when evaluating many times.
pub fn evolve(state: &QuantumState, hamiltonian: &ComplexMatrix, tau: f64) -> Result<QuantumState> {
    Propagator::new(hamiltonian.clone())?.evolve(state, tau)
}

/// `|<a|b>|^2` for pure pairs, `<psi|rho|psi>` for pure-mixed pairs and the
/// Uhlmann fidelity `(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2` otherwise.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    if a.layout().total_dim() != b.layout().total_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.layout().total_dim(),
            found: b.layout().total_dim(),
        });
    }
    let f = match (a.representation(), b.representation()) {
        (Representation::Pure(x), Representation::Pure(y)) => matrix::inner(x, y).norm_sqr(),
        (Representation::Pure(x), Representation::Density(rho))
        | (Representation::Density(rho), Representation::Pure(x)) => {
            matrix::inner(x, &rho.mul_vec(x)?).re
        }
        (Representation::Density(rho), Representation::Density(sigma)) => {
            let root = HermitianEigen::new(rho, 1e-9)?.sqrt_psd();
            let m = root.matmul(sigma)?.matmul(&root)?;
            let eig = HermitianEigen::new(&m, 1e-9)?;
            eig.values.iter().map(|&x| x.max(0.0).sqrt()).sum::<f64>().powi(2)
        }
    };
    Ok(f.clamp(0.0, 1.0))
}
