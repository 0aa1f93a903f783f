//! Closed-form amplitudes for the single-excitation dynamics, transcribed
//! literally (including apparent misprints) so they can be audited against the
//! numeric propagator. Nothing here is corrected: where the printed
//! expressions disagree with `exp(-iHt)`, the audit reports it.
//!
//! Initial state `(cos θ |10> + sin θ |01>)_{c1} |vac>` with `J1 = J2 = J`.
//!
//! * Bridge qubit, amplitudes `G1..G4` on `|10g00>, |01g00>, |00e00>` and
//!   `G4` on both `|00g10>` and `|00g01>`.
//! * Evanescent, amplitudes `W1..W4` on `|1000>, |0100>, |0010>, |0001>`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::Propagator;
use crate::error::{Error, Result};
use crate::hilbert::SystemLayout;
use crate::matrix::{ZERO, I};
use crate::models::{total_hamiltonian, SystemConfig};

pub const AUDIT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    QubitG,
    EvanescentW,
}

impl Scheme {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Scheme::QubitG => &["G1", "G2", "G3", "G4"],
            Scheme::EvanescentW => &["W1", "W2", "W3", "W4"],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyticAmplitudes {
    pub scheme: Scheme,
    pub values: Vec<Complex64>,
    /// Σ |amplitude|² over the kets each amplitude multiplies (`G4` counts twice).
    pub norm: f64,
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Printed `G1..G4` at normalized time `tau = g t`.
pub fn analytic_qubit_amplitudes(theta: f64, j: f64, g: f64, tau: f64) -> Result<AnalyticAmplitudes> {
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::InvalidParameter(format!("g must be > 0, got {g}")));
    }
    if !(theta.is_finite() && j.is_finite() && tau.is_finite()) {
        return Err(Error::InvalidParameter("theta, J and tau must be finite".into()));
    }
    let t = tau / g;
    let (cs, sn) = (theta.cos(), theta.sin());
    let alpha = I * j;
    let gamma = (alpha * t).exp() * (cs + sn);
    // Δ = sqrt(i [16 + (J/g)^2]) appears only squared
    let delta2 = I * (16.0 + (j / g).powi(2));
    let beta = (alpha * t / 2.0).exp() * (cs + sn) * (delta2 * (delta2 * g * t).cosh() + I * j * (delta2 * g * t).sinh() / g)
        / delta2;

    let g1 = (2.0 * (-alpha * t).exp() * (cs - sn) + gamma + beta) / 4.0;
    let g2 = (2.0 * (-alpha * t).exp() * (sn - cs) + gamma + beta) / 4.0;
    let g3 = 2.0 * I * gamma * (-alpha * t / 2.0).exp() * (delta2 * g * t / 2.0).sinh() / delta2;
    let e = (delta2 * g * t).exp();
    let g4 = (cs + sn) * ((alpha - delta2 * g) * t / 2.0).exp() / (8.0 * g * delta2)
        * (I * (e - 1.0) * j + (1.0 + e - 2.0 * ((alpha + delta2 * g) * t / 2.0).exp()) * delta2 * g);

    let norm = g1.norm_sqr() + g2.norm_sqr() + g3.norm_sqr() + 2.0 * g4.norm_sqr();
    Ok(AnalyticAmplitudes {
        scheme: Scheme::QubitG,
        values: vec![g1, g2, g3, g4],
        norm,
    })
}

/// Printed `W1..W4` at normalized time `tau = lambda t`, `J` in units of `lambda`.
pub fn analytic_evanescent_amplitudes(theta: f64, j: f64, tau: f64) -> Result<AnalyticAmplitudes> {
    if !(theta.is_finite() && j.is_finite() && tau.is_finite()) {
        return Err(Error::InvalidParameter("theta, J and tau must be finite".into()));
    }
    let (cs, sn) = (theta.cos(), theta.sin());
    let (cj, sj) = ((j * tau).cos(), (j * tau).sin());
    let w1 = tau.cos() * (c(cs * cj) + I * cs * sj);
    let w2 = tau.cos() * (c(sn * cj) + I * sn * sj);
    let w3 = tau.sin() * (I * cs * cj - sn * sj);
    let w4 = tau.sin() * (I * cs * sj - cs * sj);
    let values = vec![w1, w2, w3, w4];
    let norm = values.iter().map(|z| z.norm_sqr()).sum();
    Ok(AnalyticAmplitudes {
        scheme: Scheme::EvanescentW,
        values,
        norm,
    })
}

/// Occupations (a1, b1, a2, b2[, q]) of the ket each amplitude multiplies.
fn kets(scheme: Scheme) -> Vec<Vec<usize>> {
    match scheme {
        Scheme::QubitG => vec![
            vec![1, 0, 0, 0, 0],
            vec![0, 1, 0, 0, 0],
            vec![0, 0, 0, 0, 1],
            vec![0, 0, 1, 0, 0],
        ],
        Scheme::EvanescentW => vec![
            vec![1, 0, 0, 0],
            vec![0, 1, 0, 0],
            vec![0, 0, 1, 0],
            vec![0, 0, 0, 1],
        ],
    }
}

/// The same amplitudes computed with the numeric propagator.
pub fn numeric_amplitudes(scheme: Scheme, theta: f64, j: f64, tau: f64) -> Result<Vec<Complex64>> {
    let cfg = match scheme {
        Scheme::QubitG => SystemConfig::bridge_qubit(j),
        Scheme::EvanescentW => SystemConfig::evanescent(j),
    };
    let layout = cfg.layout()?;
    let prop = Propagator::new(total_hamiltonian(&cfg, &layout)?)?;
    let psi = prop.apply(&initial_vector(&layout, theta)?, tau)?;
    kets(scheme)
        .iter()
        .map(|occ| Ok(psi[layout.flat_index(occ)?]))
        .collect()
}

fn initial_vector(layout: &SystemLayout, theta: f64) -> Result<Vec<Complex64>> {
    let mut v = vec![ZERO; layout.total_dim()];
    let mut occ = vec![0; layout.len()];
    occ[0] = 1;
    v[layout.flat_index(&occ)?] = c(theta.cos());
    occ[0] = 0;
    occ[1] = 1;
    v[layout.flat_index(&occ)?] = c(theta.sin());
    Ok(v)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AuditPoint {
    pub theta: f64,
    pub j: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AmplitudeFinding {
    pub scheme: Scheme,
    pub amplitude: &'static str,
    pub max_abs_error: f64,
    /// Grid point where the error is largest.
    pub worst_point: AuditPoint,
    pub agrees: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    /// Max |amplitude(0) - initial amplitude| over the grid's theta values.
    pub initial_condition_error: f64,
    pub max_norm_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub points: Vec<AuditPoint>,
    pub findings: Vec<AmplitudeFinding>,
    pub summaries: Vec<SchemeSummary>,
}

impl AuditReport {
    pub fn discrepant(&self) -> Vec<&'static str> {
        self.findings.iter().filter(|f| !f.agrees).map(|f| f.amplitude).collect()
    }

    pub fn all_agree(&self) -> bool {
        self.findings.iter().all(|f| f.agrees)
    }
}

/// The default 20-point grid: θ ∈ {0, π/3}, J ∈ {0, 1.5}, τ ∈ {0, 0.3, π/4, π/2, 2}.
pub fn default_audit_grid() -> Vec<AuditPoint> {
    let mut pts = Vec::with_capacity(20);
    for theta in [0.0, PI / 3.0] {
        for j in [0.0, 1.5] {
            for tau in [0.0, 0.3, PI / 4.0, PI / 2.0, 2.0] {
                pts.push(AuditPoint { theta, j, tau });
            }
        }
    }
    pts
}

fn analytic(scheme: Scheme, p: AuditPoint) -> Result<AnalyticAmplitudes> {
    match scheme {
        Scheme::QubitG => analytic_qubit_amplitudes(p.theta, p.j, 1.0, p.tau),
        Scheme::EvanescentW => analytic_evanescent_amplitudes(p.theta, p.j, p.tau),
    }
}

/// Compares every printed amplitude with the numeric propagator on `points`.
pub fn audit(points: &[AuditPoint]) -> Result<AuditReport> {
    let mut findings = Vec::new();
    let mut summaries = Vec::new();
    for scheme in [Scheme::QubitG, Scheme::EvanescentW] {
        let labels = scheme.labels();
        let mut worst = vec![(0.0f64, points.first().copied()); labels.len()];
        let mut norm_dev = 0.0f64;
        for &p in points {
            let a = analytic(scheme, p)?;
            let n = numeric_amplitudes(scheme, p.theta, p.j, p.tau)?;
            for (k, (x, y)) in a.values.iter().zip(&n).enumerate() {
                let err = (x - y).norm();
                // NaN from overflowing exponentials counts as a discrepancy
                let err = if err.is_finite() { err } else { f64::INFINITY };
                if err > worst[k].0 || worst[k].1.is_none() {
                    worst[k] = (err, Some(p));
                }
            }
            let dev = (a.norm - 1.0).abs();
            norm_dev = norm_dev.max(if dev.is_finite() { dev } else { f64::INFINITY });
        }
        for (k, label) in labels.iter().enumerate() {
            let (err, at) = worst[k];
            findings.push(AmplitudeFinding {
                scheme,
                amplitude: label,
                max_abs_error: err,
                worst_point: at.unwrap_or(AuditPoint { theta: 0.0, j: 0.0, tau: 0.0 }),
                agrees: err < AUDIT_TOL,
            });
        }

        let mut init_err = 0.0f64;
        for &p in points {
            let a = analytic(scheme, AuditPoint { tau: 0.0, ..p })?;
            let expected = [c(p.theta.cos()), c(p.theta.sin()), ZERO, ZERO];
            for (x, y) in a.values.iter().zip(expected) {
                init_err = init_err.max((x - y).norm());
            }
        }
        summaries.push(SchemeSummary {
            scheme,
            initial_condition_error: init_err,
            max_norm_deviation: norm_dev,
        });
    }
    Ok(AuditReport {
        points: points.to_vec(),
        findings,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn qubit_formulas_satisfy_initial_condition() {
        let a = analytic_qubit_amplitudes(FRAC_PI_4, 0.0, 1.0, 0.0).unwrap();
        let expected = [c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2), ZERO, ZERO];
        for (x, y) in a.values.iter().zip(expected) {
            assert!((x - y).norm() < 1e-15);
        }
        assert!((a.norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn evanescent_formulas_at_zero() {
        let theta = 0.4;
        let a = analytic_evanescent_amplitudes(theta, 1.3, 0.0).unwrap();
        let expected = [c(theta.cos()), c(theta.sin()), ZERO, ZERO];
        for (x, y) in a.values.iter().zip(expected) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn evanescent_quarter_period_amplitude_lands_on_b2() {
        // numeric: a1 -> b2 hop, so |0001> carries -i/√2; the printed W3 puts i/√2 on |0010>
        let a = analytic_evanescent_amplitudes(0.0, 0.0, FRAC_PI_4).unwrap();
        assert!((a.values[0] - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((a.values[2] - I * FRAC_1_SQRT_2).norm() < 1e-15);
        let n = numeric_amplitudes(Scheme::EvanescentW, 0.0, 0.0, FRAC_PI_4).unwrap();
        assert!((n[0] - c(FRAC_1_SQRT_2)).norm() < 1e-12);
        assert!(n[2].norm() < 1e-12);
        assert!((n[3] + I * FRAC_1_SQRT_2).norm() < 1e-12);
    }

    #[test]
    fn evanescent_full_transfer_for_any_theta() {
        let theta = 1.1;
        let n = numeric_amplitudes(Scheme::EvanescentW, theta, 0.0, FRAC_PI_2).unwrap();
        let cavity2 = n[2].norm_sqr() + n[3].norm_sqr();
        assert!((cavity2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_g() {
        assert!(analytic_qubit_amplitudes(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn default_grid_has_twenty_points() {
        assert_eq!(default_audit_grid().len(), 20);
    }
}
