//! Zero-temperature GKSL dynamics with photon loss in the four cavity modes
//! and spontaneous emission of the bridge qubit.
//!
//! Dissipators carry the factor 2 inside:
//! `D[L] rho = rate (2 L rho L† - L†L rho - rho L†L)`, so a mode with rate
//! `kappa` loses population as `exp(-2 kappa tau)`. In the more common
//! `gamma (L rho L† - {L†L, rho}/2)` normalization this is `gamma = 2 kappa`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Propagator, HERMITIAN_TOL};
use crate::eigen::HermitianEigen;
use crate::entanglement::{Bipartition, ConcurrenceTrace};
use crate::error::{Error, Result};
use crate::hilbert::{lowering, ModeLabel, QuantumState, SubsystemKind, SystemLayout};
use crate::matrix::{ComplexMatrix, I, ZERO};
use crate::models::{total_hamiltonian, CouplingKind, SystemConfig};

pub const DEFAULT_DTAU: f64 = 1e-3;
pub const TRACE_TOL: f64 = 1e-8;
pub const MIN_EIGENVALUE: f64 = -1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Decay rate of every cavity mode, units of `eta`.
    pub kappa: f64,
    /// Qubit spontaneous-emission rate, units of `eta`; must be 0 without a qubit.
    #[serde(default)]
    pub gamma: f64,
}

impl LossConfig {
    pub const DEFAULT_KAPPA: f64 = 5e-2;
    pub const DEFAULT_GAMMA: f64 = 5e-3;

    pub fn lossless() -> Self {
        Self { kappa: 0.0, gamma: 0.0 }
    }

    /// `kappa = 5e-2`, `gamma = 5e-3` (dropped when there is no qubit).
    pub fn defaults_for(coupling: &CouplingKind) -> Self {
        Self {
            kappa: Self::DEFAULT_KAPPA,
            gamma: if coupling.has_qubit() { Self::DEFAULT_GAMMA } else { 0.0 },
        }
    }

    pub fn validate_for(&self, coupling: &CouplingKind) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.gamma != 0.0 && !coupling.has_qubit() {
            return Err(Error::InvalidParameter(format!(
                "gamma = {} but the {} coupling has no qubit",
                self.gamma,
                coupling.name()
            )));
        }
        Ok(())
    }
}

/// Sparse triplet list; every operator in this crate has a handful of entries per row.
#[derive(Clone, Debug)]
struct Sparse {
    entries: Vec<(usize, usize, Complex64)>,
}

impl Sparse {
    fn from_dense(m: &ComplexMatrix) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                let v = m[(r, c)];
                if v != ZERO {
                    entries.push((r, c, v));
                }
            }
        }
        Self { entries }
    }
}

#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    hamiltonian: ComplexMatrix,
    jump_ops: Vec<(f64, ComplexMatrix)>,
    // -i H_eff with H_eff = H - i Σ rate L†L
    drift: Sparse,
    jumps: Vec<(f64, Sparse)>,
}

impl LindbladGenerator {
    pub fn new(hamiltonian: ComplexMatrix, jump_ops: Vec<(f64, ComplexMatrix)>) -> Result<Self> {
        hamiltonian.ensure_hermitian(HERMITIAN_TOL)?;
        let d = hamiltonian.rows();
        let mut damping = ComplexMatrix::zeros(d, d);
        for (rate, l) in &jump_ops {
            if l.rows() != d || l.cols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: l.rows(),
                });
            }
            if !(rate.is_finite() && *rate >= 0.0) {
                return Err(Error::InvalidParameter(format!("jump rate must be >= 0, got {rate}")));
            }
            damping = &damping + &l.adjoint().matmul(l)?.scale(Complex64::new(*rate, 0.0));
        }
        let h_eff = &hamiltonian - &damping.scale(I);
        let drift = Sparse::from_dense(&h_eff.scale(-I));
        let jumps = jump_ops
            .iter()
            .filter(|(rate, _)| *rate > 0.0)
            .map(|(rate, l)| (*rate, Sparse::from_dense(l)))
            .collect();
        Ok(Self {
            hamiltonian,
            jump_ops,
            drift,
            jumps,
        })
    }

    /// Generator for `config` with `losses`: `kappa` on a1, b1, a2, b2 and
    /// `gamma` on the qubit. A fiber mode, when present, is lossless.
    pub fn for_config(config: &SystemConfig, losses: &LossConfig) -> Result<Self> {
        losses.validate_for(&config.coupling)?;
        let layout = config.layout()?;
        let h = total_hamiltonian(config, &layout)?;
        let mut jumps = Vec::new();
        for m in ModeLabel::CAVITY_MODES {
            jumps.push((losses.kappa, lowering(&layout, SubsystemKind::Mode(m))?));
        }
        if layout.has_qubit() {
            jumps.push((losses.gamma, lowering(&layout, SubsystemKind::Qubit)?));
        }
        Self::new(h, jumps)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.rows()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[(f64, ComplexMatrix)] {
        &self.jump_ops
    }

    fn rhs_into(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim();
        out.iter_mut().for_each(|z| *z = ZERO);
        // A rho + rho A† with A = -i H_eff
        for &(r, k, v) in &self.drift.entries {
            let src = &rho[k * d..(k + 1) * d];
            let dst = &mut out[r * d..(r + 1) * d];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += v * s;
            }
        }
        for &(k, c, v) in &self.drift.entries {
            // (rho A†)[i][k] += rho[i][c] * conj(A[k][c])
            let vc = v.conj();
            for i in 0..d {
                out[i * d + k] += rho[i * d + c] * vc;
            }
        }
        for (rate, l) in &self.jumps {
            let w = 2.0 * rate;
            for &(i, k, a) in &l.entries {
                for &(j, m, b) in &l.entries {
                    out[i * d + j] += a * rho[k * d + m] * b.conj() * w;
                }
            }
        }
    }

    /// `-i[H, rho] + Σ rate (2 L rho L† - L†L rho - rho L†L)`
    pub fn rhs(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let d = self.dim();
        if rho.rows() != d || rho.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rho.rows(),
            });
        }
        let mut out = ComplexMatrix::zeros(d, d);
        self.rhs_into(rho.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn rk4_step(&self, rho: &mut [Complex64], h: f64, scratch: &mut Rk4Scratch) {
        let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
        self.rhs_into(rho, k1);
        for ((t, r), k) in tmp.iter_mut().zip(rho.iter()).zip(k1.iter()) {
            *t = r + k * (0.5 * h);
        }
        self.rhs_into(tmp, k2);
        for ((t, r), k) in tmp.iter_mut().zip(rho.iter()).zip(k2.iter()) {
            *t = r + k * (0.5 * h);
        }
        self.rhs_into(tmp, k3);
        for ((t, r), k) in tmp.iter_mut().zip(rho.iter()).zip(k3.iter()) {
            *t = r + k * h;
        }
        self.rhs_into(tmp, k4);
        for (i, r) in rho.iter_mut().enumerate() {
            *r += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }
}

struct Rk4Scratch {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![ZERO; n],
            k2: vec![ZERO; n],
            k3: vec![ZERO; n],
            k4: vec![ZERO; n],
            tmp: vec![ZERO; n],
        }
    }
}

pub fn lindblad_rhs(generator: &LindbladGenerator, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    generator.rhs(rho)
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub tau: f64,
    pub rho: ComplexMatrix,
}

/// Cholesky factorization of `m + shift I`; succeeds iff the smallest
/// eigenvalue of the Hermitian `m` exceeds `-shift`.
fn shifted_cholesky_ok(m: &ComplexMatrix, shift: f64) -> bool {
    let n = m.rows();
    let mut l = vec![ZERO; n * n];
    for j in 0..n {
        let mut d = m[(j, j)].re + shift;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[j * n + j] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / d;
        }
    }
    true
}

fn min_eigenvalue(rho: &ComplexMatrix) -> Result<f64> {
    let mut sym = rho.clone();
    sym.hermitize();
    Ok(HermitianEigen::new(&sym, f64::INFINITY)?.min_value())
}

/// Checks trace, Hermiticity and positivity of an integrated state.
pub fn check_sample(rho: &ComplexMatrix, tau: f64) -> Result<()> {
    let trace_error = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
    let herm = rho.hermitian_deviation();
    let mut sym = rho.clone();
    sym.hermitize();
    let positive = shifted_cholesky_ok(&sym, -MIN_EIGENVALUE);
    if trace_error > TRACE_TOL || !positive || herm > 1e-9 {
        return Err(Error::IntegratorDrift {
            tau,
            trace_error,
            min_eigenvalue: min_eigenvalue(rho)?,
        });
    }
    Ok(())
}

/// Smallest eigenvalue of the Hermitian part of each sample.
pub fn min_eigenvalue_over(samples: &[Sample]) -> Result<f64> {
    samples.iter().try_fold(f64::INFINITY, |m, s| Ok(m.min(min_eigenvalue(&s.rho)?)))
}

/// Classical RK4 from `rho(taus[0]) = rho0`, reporting the state at each of
/// the strictly increasing `taus`. Each interval is split into equal substeps
/// no longer than `dtau`. Outputs are checked, never renormalized.
pub fn integrate_on_grid(
    generator: &LindbladGenerator,
    rho0: &ComplexMatrix,
    taus: &[f64],
    dtau: f64,
) -> Result<Vec<Sample>> {
    let d = generator.dim();
    if rho0.rows() != d || rho0.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rho0.rows(),
        });
    }
    if !(dtau.is_finite() && dtau > 0.0) {
        return Err(Error::InvalidParameter(format!("dtau must be > 0, got {dtau}")));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("tau grid must be strictly increasing".into()));
    }
    let Some(&first) = taus.first() else {
        return Ok(Vec::new());
    };
    check_sample(rho0, first)?;
    let mut rho = rho0.as_slice().to_vec();
    let mut scratch = Rk4Scratch::new(d * d);
    let mut out = Vec::with_capacity(taus.len());
    out.push(Sample {
        tau: first,
        rho: rho0.clone(),
    });
    for w in taus.windows(2) {
        let span = w[1] - w[0];
        let steps = ((span / dtau) - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            generator.rk4_step(&mut rho, h, &mut scratch);
        }
        let m = ComplexMatrix::from_rows(d, d, rho.clone())?;
        check_sample(&m, w[1])?;
        out.push(Sample { tau: w[1], rho: m });
    }
    Ok(out)
}

/// RK4 from `tau = 0` to `tau_end`, one sample per step.
pub fn integrate(generator: &LindbladGenerator, rho0: &ComplexMatrix, tau_end: f64, dtau: f64) -> Result<Vec<Sample>> {
    if !(tau_end > 0.0) {
        return Err(Error::InvalidParameter(format!("tau_end must be > 0, got {tau_end}")));
    }
    if !(dtau.is_finite() && dtau > 0.0) {
        return Err(Error::InvalidParameter(format!("dtau must be > 0, got {dtau}")));
    }
    let steps = ((tau_end / dtau) - 1e-9).ceil().max(1.0) as usize;
    let taus: Vec<f64> = (0..=steps).map(|k| tau_end * k as f64 / steps as f64).collect();
    integrate_on_grid(generator, rho0, &taus, dtau)
}

/// Max |ΔC| between a run at `dtau` and one at `dtau / 2`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub dtau: f64,
    pub max_concurrence_change: f64,
    pub max_element_change: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LossyComparison {
    pub qubit: ConcurrenceTrace,
    pub evanescent: ConcurrenceTrace,
    /// `(tau, value)` of each maximum.
    pub qubit_max: (f64, f64),
    pub evanescent_max: (f64, f64),
}

/// Runs the bridge-qubit and evanescent configs from the same cavity-1
/// superposition with the same losses (gamma dropped for the evanescent run)
/// and compares concurrence on `(a2, b2)`.
pub fn compare_couplings_lossy(
    config_qubit: &SystemConfig,
    config_evanescent: &SystemConfig,
    losses: &LossConfig,
    theta: f64,
    taus: &[f64],
) -> Result<LossyComparison> {
    if !config_qubit.coupling.has_qubit() {
        return Err(Error::InvalidParameter("first config must use a bridge qubit".into()));
    }
    if !matches!(config_evanescent.coupling, CouplingKind::Evanescent { .. }) {
        return Err(Error::InvalidParameter("second config must use evanescent coupling".into()));
    }
    let ev_losses = LossConfig {
        gamma: 0.0,
        ..*losses
    };
    let run = |cfg: &SystemConfig, l: &LossConfig| -> Result<ConcurrenceTrace> {
        let spec = crate::experiment::ExperimentSpec::new(cfg.clone())
            .with_losses(Some(*l))
            .with_theta(theta);
        let layout = cfg.layout()?;
        let bp = Bipartition::from_kinds(
            &layout,
            SubsystemKind::Mode(ModeLabel::A2),
            SubsystemKind::Mode(ModeLabel::B2),
        )?;
        spec.concurrence_trace(bp, taus)
    };
    let qubit = run(config_qubit, losses)?;
    let evanescent = run(config_evanescent, &ev_losses)?;
    Ok(LossyComparison {
        qubit_max: qubit.max(),
        evanescent_max: evanescent.max(),
        qubit,
        evanescent,
    })
}

/// Unitary reference for a lossless generator, `max |rho_RK4 - rho_exact|`.
pub fn unitary_deviation(
    generator: &LindbladGenerator,
    psi0: &QuantumState,
    taus: &[f64],
    dtau: f64,
) -> Result<f64> {
    let prop = Propagator::new(generator.hamiltonian().clone())?;
    let samples = integrate_on_grid(generator, &psi0.density_matrix(), taus, dtau)?;
    let mut worst = 0.0f64;
    for s in &samples {
        let exact = prop.evolve(psi0, s.tau - taus[0])?.density_matrix();
        worst = worst.max(exact.max_abs_diff(&s.rho));
    }
    Ok(worst)
}

/// Population of the global vacuum, `<0...0|rho|0...0>`.
pub fn vacuum_population(rho: &ComplexMatrix) -> f64 {
    rho[(0, 0)].re
}

pub fn layout_for(config: &SystemConfig) -> Result<SystemLayout> {
    config.layout()
}
