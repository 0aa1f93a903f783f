//! Parameter sets and Hamiltonian builders for the three inter-cavity couplings.
//!
//! All rates are angular frequencies in units of the reference coupling `eta`
//! (`g`, `lambda` or `nu` depending on the coupling), so that time is the
//! dimensionless `tau = eta * t`. A config tagged `"units": "MHz"` carries
//! rates as `f / 2π` in MHz instead and is rescaled by [`SystemConfig::normalized`].

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{lowering, ModeLabel, SubsystemKind, SystemLayout};
use crate::matrix::ComplexMatrix;

pub const MAX_CUTOFF: usize = 7;

/// Experimental scales, `rate / 2π` in MHz.
pub const EXPERIMENTAL_G_MHZ: f64 = 70.0;
pub const EXPERIMENTAL_LAMBDA_MHZ: f64 = 30.0;
pub const EXPERIMENTAL_J_MAX_MHZ: f64 = 250.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingKind {
    /// Two-level system coupled to all four modes: `g1` to cavity 1, `g2` to cavity 2.
    BridgeQubit {
        g1: f64,
        g2: f64,
        #[serde(default)]
        omega_a: f64,
    },
    /// Direct photon hopping `a1 <-> b2`, `b1 <-> a2` with propagation phase `phi`.
    Evanescent {
        lambda: f64,
        #[serde(default)]
        phi: f64,
    },
    /// Single fiber mode `c` coupled equally to all four cavity modes.
    Fiber { nu: f64 },
}

impl CouplingKind {
    pub fn name(&self) -> &'static str {
        match self {
            CouplingKind::BridgeQubit { .. } => "qubit",
            CouplingKind::Evanescent { .. } => "evanescent",
            CouplingKind::Fiber { .. } => "fiber",
        }
    }

    pub fn has_qubit(&self) -> bool {
        matches!(self, CouplingKind::BridgeQubit { .. })
    }

    fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        match *self {
            CouplingKind::BridgeQubit { g1, g2, omega_a } => {
                check("g1", g1)?;
                check("g2", g2)?;
                if !omega_a.is_finite() {
                    return Err(Error::InvalidParameter("omega_a must be finite".into()));
                }
            }
            CouplingKind::Evanescent { lambda, phi } => {
                check("lambda", lambda)?;
                if !(0.0..TAU).contains(&phi) {
                    return Err(Error::InvalidParameter(format!("phi must lie in [0, 2π), got {phi}")));
                }
            }
            CouplingKind::Fiber { nu } => check("nu", nu)?,
        }
        Ok(())
    }

    fn scaled(&self, s: f64) -> Self {
        match *self {
            CouplingKind::BridgeQubit { g1, g2, omega_a } => CouplingKind::BridgeQubit {
                g1: g1 * s,
                g2: g2 * s,
                omega_a: omega_a * s,
            },
            CouplingKind::Evanescent { lambda, phi } => CouplingKind::Evanescent { lambda: lambda * s, phi },
            CouplingKind::Fiber { nu } => CouplingKind::Fiber { nu: nu * s },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    #[default]
    #[serde(rename = "eta")]
    Eta,
    #[serde(rename = "MHz")]
    Mhz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    #[serde(default)]
    pub omega_c1: f64,
    #[serde(default)]
    pub omega_c2: f64,
    #[serde(rename = "J1", alias = "j1", default)]
    pub j1: f64,
    #[serde(rename = "J2", alias = "j2", default)]
    pub j2: f64,
    pub coupling: CouplingKind,
    /// Drop every free-evolution term (`omega_c1`, `omega_c2`, `omega_a`).
    #[serde(default = "default_true")]
    pub rotating_frame: bool,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Photon-number cutoff per mode; 1 is exact for single-excitation dynamics.
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default)]
    pub units: Units,
}

fn default_true() -> bool {
    true
}

fn default_eta() -> f64 {
    1.0
}

fn default_cutoff() -> usize {
    1
}

impl SystemConfig {
    fn resonant(coupling: CouplingKind, j: f64) -> Self {
        Self {
            omega_c1: 0.0,
            omega_c2: 0.0,
            j1: j,
            j2: j,
            coupling,
            rotating_frame: true,
            eta: 1.0,
            cutoff: 1,
            units: Units::Eta,
        }
    }

    /// Bridge qubit with `g1 = g2 = 1` and `J1 = J2 = j` (units of `g`).
    pub fn bridge_qubit(j: f64) -> Self {
        Self::resonant(
            CouplingKind::BridgeQubit {
                g1: 1.0,
                g2: 1.0,
                omega_a: 0.0,
            },
            j,
        )
    }

    /// Evanescent coupling with `lambda = 1`, `phi = 0`, `J1 = J2 = j` (units of `lambda`).
    pub fn evanescent(j: f64) -> Self {
        Self::resonant(CouplingKind::Evanescent { lambda: 1.0, phi: 0.0 }, j)
    }

    /// Fiber coupling with `nu = 1`, `J1 = J2 = j` (units of `nu`).
    pub fn fiber(j: f64) -> Self {
        Self::resonant(CouplingKind::Fiber { nu: 1.0 }, j)
    }

    /// Bridge qubit at experimental scale, `g/2π = 70 MHz`.
    pub fn experimental_bridge_qubit(j_mhz: f64) -> Self {
        Self {
            j1: j_mhz,
            j2: j_mhz,
            eta: EXPERIMENTAL_G_MHZ,
            units: Units::Mhz,
            ..Self::resonant(
                CouplingKind::BridgeQubit {
                    g1: EXPERIMENTAL_G_MHZ,
                    g2: EXPERIMENTAL_G_MHZ,
                    omega_a: 0.0,
                },
                0.0,
            )
        }
    }

    /// Evanescent coupling at experimental scale, `lambda/2π = 30 MHz`.
    pub fn experimental_evanescent(j_mhz: f64) -> Self {
        Self {
            j1: j_mhz,
            j2: j_mhz,
            eta: EXPERIMENTAL_LAMBDA_MHZ,
            units: Units::Mhz,
            ..Self::resonant(
                CouplingKind::Evanescent {
                    lambda: EXPERIMENTAL_LAMBDA_MHZ,
                    phi: 0.0,
                },
                0.0,
            )
        }
    }

    pub fn with_j(mut self, j: f64) -> Self {
        self.j1 = j;
        self.j2 = j;
        self
    }

    /// Sets the inter-cavity rate: `g1 = g2`, `lambda` or `nu`.
    pub fn with_coupling_strength(mut self, eta: f64) -> Self {
        self.coupling = match self.coupling {
            CouplingKind::BridgeQubit { omega_a, .. } => CouplingKind::BridgeQubit {
                g1: eta,
                g2: eta,
                omega_a,
            },
            CouplingKind::Evanescent { phi, .. } => CouplingKind::Evanescent { lambda: eta, phi },
            CouplingKind::Fiber { .. } => CouplingKind::Fiber { nu: eta },
        };
        self
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("J1", self.j1), ("J2", self.j2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.omega_c1.is_finite() && self.omega_c2.is_finite()) {
            return Err(Error::InvalidParameter("cavity frequencies must be finite".into()));
        }
        if self.cutoff == 0 || self.cutoff > MAX_CUTOFF {
            return Err(Error::InvalidParameter(format!(
                "cutoff must lie in 1..={MAX_CUTOFF}, got {}",
                self.cutoff
            )));
        }
        self.coupling.validate()
    }

    /// Rates in units of `eta` (no-op unless the config is in MHz).
    pub fn normalized(&self) -> Self {
        match self.units {
            Units::Eta => self.clone(),
            Units::Mhz => {
                let s = 1.0 / self.eta;
                Self {
                    omega_c1: self.omega_c1 * s,
                    omega_c2: self.omega_c2 * s,
                    j1: self.j1 * s,
                    j2: self.j2 * s,
                    coupling: self.coupling.scaled(s),
                    rotating_frame: self.rotating_frame,
                    eta: 1.0,
                    cutoff: self.cutoff,
                    units: Units::Eta,
                }
            }
        }
    }

    /// Canonical layout for this coupling: four modes plus the qubit or fiber mode.
    pub fn layout(&self) -> Result<SystemLayout> {
        match self.coupling {
            CouplingKind::BridgeQubit { .. } => SystemLayout::four_modes_and_qubit(self.cutoff),
            CouplingKind::Evanescent { .. } => SystemLayout::four_modes(self.cutoff),
            CouplingKind::Fiber { .. } => SystemLayout::four_modes_and_fiber(self.cutoff),
        }
    }
}

fn mode(layout: &SystemLayout, m: ModeLabel) -> Result<ComplexMatrix> {
    lowering(layout, SubsystemKind::Mode(m))
}

/// `x^dagger y`
fn hop(x: &ComplexMatrix, y: &ComplexMatrix) -> ComplexMatrix {
    x.adjoint().matmul(y).expect("operators share a layout")
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// `omega_c1 (a1†a1 + b1†b1) + omega_c2 (a2†a2 + b2†b2) + J1 (a1†b1 + h.c.) + J2 (a2†b2 + h.c.)`
pub fn build_intracavity_hamiltonian(config: &SystemConfig, layout: &SystemLayout) -> Result<ComplexMatrix> {
    config.validate()?;
    let cfg = config.normalized();
    let [a1, b1, a2, b2] = ModeLabel::CAVITY_MODES.map(|m| mode(layout, m));
    let (a1, b1, a2, b2) = (a1?, b1?, a2?, b2?);

    let d = layout.total_dim();
    let mut h = ComplexMatrix::zeros(d, d);
    if !cfg.rotating_frame {
        let n1 = &hop(&a1, &a1) + &hop(&b1, &b1);
        let n2 = &hop(&a2, &a2) + &hop(&b2, &b2);
        h = &h + &n1.scale(real(cfg.omega_c1));
        h = &h + &n2.scale(real(cfg.omega_c2));
    }
    let j1 = &hop(&a1, &b1) + &hop(&b1, &a1);
    let j2 = &hop(&a2, &b2) + &hop(&b2, &a2);
    h = &h + &j1.scale(real(cfg.j1));
    h = &h + &j2.scale(real(cfg.j2));
    Ok(h)
}

pub fn build_coupling_hamiltonian(config: &SystemConfig, layout: &SystemLayout) -> Result<ComplexMatrix> {
    config.validate()?;
    let cfg = config.normalized();
    let has_qubit = layout.site_of(SubsystemKind::Qubit).is_some();
    let has_fiber = layout.site_of(SubsystemKind::Mode(ModeLabel::C)).is_some();
    let [a1, b1, a2, b2] = ModeLabel::CAVITY_MODES.map(|m| mode(layout, m));
    let (a1, b1, a2, b2) = (a1?, b1?, a2?, b2?);

    match cfg.coupling {
        CouplingKind::BridgeQubit { g1, g2, omega_a } => {
            if has_fiber {
                return Err(Error::LayoutMismatch("bridge-qubit coupling with a fiber mode".into()));
            }
            let sm = lowering(layout, SubsystemKind::Qubit)?;
            let mut h = ComplexMatrix::zeros(layout.total_dim(), layout.total_dim());
            if !cfg.rotating_frame {
                h = &h + &hop(&sm, &sm).scale(real(omega_a));
            }
            for (g, op) in [(g1, &a1), (g1, &b1), (g2, &a2), (g2, &b2)] {
                // g (x† σ- + x σ+)
                let term = &hop(op, &sm) + &hop(&sm, op);
                h = &h + &term.scale(real(g));
            }
            Ok(h)
        }
        CouplingKind::Evanescent { lambda, phi } => {
            if has_qubit || has_fiber {
                return Err(Error::LayoutMismatch(
                    "evanescent coupling takes the four cavity modes only".into(),
                ));
            }
            let minus = Complex64::from_polar(lambda, -phi);
            let plus = Complex64::from_polar(lambda, phi);
            let mut h = hop(&a1, &b2).scale(minus);
            h = &h + &hop(&b2, &a1).scale(plus);
            h = &h + &hop(&b1, &a2).scale(minus);
            h = &h + &hop(&a2, &b1).scale(plus);
            Ok(h)
        }
        CouplingKind::Fiber { nu } => {
            if has_qubit {
                return Err(Error::LayoutMismatch("fiber coupling with a qubit".into()));
            }
            let c = mode(layout, ModeLabel::C)?;
            let mut h = ComplexMatrix::zeros(layout.total_dim(), layout.total_dim());
            for op in [&a1, &b1, &a2, &b2] {
                let term = &hop(op, &c) + &hop(&c, op);
                h = &h + &term.scale(real(nu));
            }
            Ok(h)
        }
    }
}

/// Intra-cavity plus inter-cavity Hamiltonian.
pub fn total_hamiltonian(config: &SystemConfig, layout: &SystemLayout) -> Result<ComplexMatrix> {
    let hs = build_intracavity_hamiltonian(config, layout)?;
    let hc = build_coupling_hamiltonian(config, layout)?;
    Ok(&hs + &hc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::excitation_number;
    use crate::matrix::{I, ZERO};
    use std::f64::consts::FRAC_PI_2;

    fn idx(layout: &SystemLayout, occ: &[usize]) -> usize {
        layout.flat_index(occ).unwrap()
    }

    #[test]
    fn zero_intracavity_in_rotating_frame() {
        let cfg = SystemConfig::evanescent(0.0);
        let layout = cfg.layout().unwrap();
        let h = build_intracavity_hamiltonian(&cfg, &layout).unwrap();
        assert_eq!(h.max_abs(), 0.0);
    }

    #[test]
    fn intracavity_hopping_element() {
        let mut cfg = SystemConfig::evanescent(0.0);
        cfg.j1 = 1.0;
        let layout = cfg.layout().unwrap();
        let h = build_intracavity_hamiltonian(&cfg, &layout).unwrap();
        assert_eq!(h[(idx(&layout, &[0, 1, 0, 0]), idx(&layout, &[1, 0, 0, 0]))], Complex64::new(1.0, 0.0));
        assert_eq!(h[(idx(&layout, &[0, 0, 0, 1]), idx(&layout, &[0, 0, 1, 0]))], ZERO);
    }

    #[test]
    fn free_terms_only_outside_rotating_frame() {
        let mut cfg = SystemConfig::bridge_qubit(0.0);
        cfg.omega_c1 = 3.0;
        cfg.coupling = CouplingKind::BridgeQubit {
            g1: 0.0,
            g2: 0.0,
            omega_a: 5.0,
        };
        let layout = cfg.layout().unwrap();
        assert_eq!(total_hamiltonian(&cfg, &layout).unwrap().max_abs(), 0.0);
        cfg.rotating_frame = false;
        let h = total_hamiltonian(&cfg, &layout).unwrap();
        let k = idx(&layout, &[1, 1, 0, 0, 1]);
        assert!((h[(k, k)].re - 11.0).abs() < 1e-15);
    }

    #[test]
    fn evanescent_elements_phi_zero() {
        let cfg = SystemConfig::evanescent(0.0);
        let layout = cfg.layout().unwrap();
        let h = build_coupling_hamiltonian(&cfg, &layout).unwrap();
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(h[(idx(&layout, &[0, 0, 0, 1]), idx(&layout, &[1, 0, 0, 0]))], one);
        assert_eq!(h[(idx(&layout, &[0, 0, 1, 0]), idx(&layout, &[0, 1, 0, 0]))], one);
        assert_eq!(h[(idx(&layout, &[0, 0, 1, 0]), idx(&layout, &[1, 0, 0, 0]))], ZERO);
        assert!(h.as_slice().iter().all(|z| z.im == 0.0));
        assert_eq!(h.hermitian_deviation(), 0.0);
    }

    #[test]
    fn evanescent_phase_convention() {
        // b2† a1 carries e^{+i phi}
        let mut cfg = SystemConfig::evanescent(0.0);
        cfg.coupling = CouplingKind::Evanescent {
            lambda: 1.0,
            phi: FRAC_PI_2,
        };
        let layout = cfg.layout().unwrap();
        let h = build_coupling_hamiltonian(&cfg, &layout).unwrap();
        let b2 = idx(&layout, &[0, 0, 0, 1]);
        let a1 = idx(&layout, &[1, 0, 0, 0]);
        assert!((h[(b2, a1)] - I).norm() < 1e-15);
        assert!((h[(a1, b2)] + I).norm() < 1e-15);
        assert!(h.hermitian_deviation() < 1e-15);
    }

    #[test]
    fn bridge_qubit_hops() {
        let cfg = SystemConfig::bridge_qubit(0.0);
        let layout = cfg.layout().unwrap();
        let h = build_coupling_hamiltonian(&cfg, &layout).unwrap();
        let excited = idx(&layout, &[0, 0, 0, 0, 1]);
        for occ in [[1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0], [0, 0, 0, 1, 0]] {
            assert_eq!(h[(idx(&layout, &occ), excited)], Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn bridge_qubit_single_excitation_block_by_hand() {
        // kets |10g00>,|01g00>,|00e00>,|00g10>,|00g01>,|00g00>; J = 2g
        let cfg = SystemConfig::bridge_qubit(2.0);
        let layout = cfg.layout().unwrap();
        let h = total_hamiltonian(&cfg, &layout).unwrap();
        let kets = [
            [1, 0, 0, 0, 0],
            [0, 1, 0, 0, 0],
            [0, 0, 0, 0, 1],
            [0, 0, 1, 0, 0],
            [0, 0, 0, 1, 0],
            [0, 0, 0, 0, 0],
        ];
        #[rustfmt::skip]
        let expected = [
            [0.0, 2.0, 1.0, 0.0, 0.0, 0.0],
            [2.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 1.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 2.0, 0.0],
            [0.0, 0.0, 1.0, 2.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ];
        for (r, kr) in kets.iter().enumerate() {
            for (c, kc) in kets.iter().enumerate() {
                let v = h[(idx(&layout, kr), idx(&layout, kc))];
                assert_eq!(v, Complex64::new(expected[r][c], 0.0), "({r}, {c})");
            }
        }
    }

    #[test]
    fn layout_mismatch_errors() {
        let cfg = SystemConfig::bridge_qubit(0.0);
        let wrong = SystemLayout::four_modes(1).unwrap();
        assert!(matches!(build_coupling_hamiltonian(&cfg, &wrong), Err(Error::LayoutMismatch(_))));
        let ev = SystemConfig::evanescent(0.0);
        let with_q = SystemLayout::four_modes_and_qubit(1).unwrap();
        assert!(matches!(build_coupling_hamiltonian(&ev, &with_q), Err(Error::LayoutMismatch(_))));
        let fib = SystemConfig::fiber(0.0);
        assert!(build_coupling_hamiltonian(&fib, &wrong).is_err());
    }

    #[test]
    fn validation() {
        assert!(SystemConfig::evanescent(-1.0).validate().is_err());
        let mut cfg = SystemConfig::evanescent(0.0);
        cfg.coupling = CouplingKind::Evanescent { lambda: 1.0, phi: TAU };
        assert!(cfg.validate().is_err());
        cfg = SystemConfig::bridge_qubit(0.0);
        cfg.eta = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mhz_config_normalizes_to_eta_units() {
        let cfg = SystemConfig::experimental_bridge_qubit(140.0).normalized();
        assert_eq!(cfg.units, Units::Eta);
        assert!((cfg.j1 - 2.0).abs() < 1e-15);
        assert_eq!(
            cfg.coupling,
            CouplingKind::BridgeQubit {
                g1: 1.0,
                g2: 1.0,
                omega_a: 0.0
            }
        );
        let json = serde_json::to_string(&SystemConfig::experimental_evanescent(60.0)).unwrap();
        assert!(json.contains("\"units\":\"MHz\""));
        let back: SystemConfig = serde_json::from_str(&json).unwrap();
        assert!((back.normalized().j2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg: SystemConfig = serde_json::from_str(r#"{"J1": 2, "J2": 2, "coupling": {"kind": "evanescent", "lambda": 1}}"#).unwrap();
        assert_eq!(cfg, SystemConfig::evanescent(2.0));
    }

    #[test]
    fn hamiltonians_conserve_excitation_number() {
        for cfg in [
            SystemConfig::bridge_qubit(1.3),
            SystemConfig::evanescent(0.7),
            SystemConfig::fiber(2.0),
            SystemConfig::fiber(2.0).with_cutoff(2),
        ] {
            let layout = cfg.layout().unwrap();
            let h = total_hamiltonian(&cfg, &layout).unwrap();
            let n = excitation_number(&layout);
            assert!(h.commutator(&n).unwrap().max_abs() < 1e-12);
            assert!(h.hermitian_deviation() < 1e-12);
        }
    }
}
