//! Wootters concurrence for two-level pairs of subsystems, concurrence time
//! series, and detectors for vanishing and frozen entanglement.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::HermitianEigen;
use crate::error::{Error, Result};
use crate::experiment::ExperimentSpec;
use crate::hilbert::{partial_trace, validate_density, QuantumState, SubsystemKind, SystemLayout};
use crate::matrix::ComplexMatrix;

/// Eigenvalues of `rho rho~` in `[-CLAMP_TOL, 0)` are rounding noise.
pub const CLAMP_TOL: f64 = 1e-9;
/// Default threshold below which concurrence counts as zero.
pub const ZERO_EPSILON: f64 = 1e-4;
/// Bisection stops once an interval endpoint is bracketed this tightly.
pub const REFINE_TOL: f64 = 1e-5;
/// Narrower zero intervals are isolated touch-downs, not sudden death.
pub const SDE_MIN_WIDTH: f64 = 0.05;

const INPUT_TOL: f64 = 1e-8;
const INPUT_MIN_EIG: f64 = -1e-6;
/// Eigenvalues of `rho` below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Bipartition {
    pub site_a: usize,
    pub site_b: usize,
}

impl Bipartition {
    pub fn new(layout: &SystemLayout, site_a: usize, site_b: usize) -> Result<Self> {
        if site_a == site_b {
            return Err(Error::InvalidParameter("bipartition needs two distinct subsystems".into()));
        }
        for s in [site_a, site_b] {
            let d = layout.local_dim(s)?;
            // cutoffs above 1 are projected before evaluating the concurrence
            if d < 2 {
                return Err(Error::InvalidParameter(format!("subsystem {s} has local dimension {d}")));
            }
        }
        Ok(Self { site_a, site_b })
    }

    pub fn from_kinds(layout: &SystemLayout, a: SubsystemKind, b: SubsystemKind) -> Result<Self> {
        Self::new(layout, layout.require_site(a)?, layout.require_site(b)?)
    }

    /// `"a1b2"`-style name.
    pub fn name(&self, layout: &SystemLayout) -> String {
        let label = |s: usize| {
            layout
                .subsystems()
                .get(s)
                .map(|x| x.kind.label())
                .unwrap_or("?")
        };
        format!("{}{}", label(self.site_a), label(self.site_b))
    }
}

/// `(sigma_y ⊗ sigma_y) rho* (sigma_y ⊗ sigma_y)` for a 4x4 matrix in the
/// `|00>, |01>, |10>, |11>` basis.
pub fn spin_flip(rho: &ComplexMatrix) -> ComplexMatrix {
    // sigma_y ⊗ sigma_y is the real anti-diagonal matrix with signs (-1, 1, 1, -1)
    let sign = [-1.0, 1.0, 1.0, -1.0];
    ComplexMatrix::from_fn(4, 4, |r, c| rho[(3 - r, 3 - c)].conj() * (sign[r] * sign[c]))
}

/// `C = max(0, √λ1 - √λ2 - √λ3 - √λ4)` with `λi` the eigenvalues of `rho rho~`
/// in decreasing order.
pub fn concurrence(state: &QuantumState) -> Result<f64> {
    let dims = state.layout().dims();
    if dims != [2, 2] {
        return Err(Error::InvalidParameter(format!(
            "concurrence needs a two-qubit state, got local dimensions {dims:?}"
        )));
    }
    let rho = state.density_matrix();
    concurrence_of_matrix(&rho)
}

/// The `√λi` are the singular values of `tau_kl = <w_k| sigma_y ⊗ sigma_y |w_l*>`
/// with `w_k = √p_k v_k` from the eigendecomposition of `rho`. The singular
/// values come from the Hermitian dilation `[[0, tau], [tau†, 0]]`, so no square
/// root of a rounding-level eigenvalue is ever taken.
pub fn concurrence_of_matrix(rho: &ComplexMatrix) -> Result<f64> {
    if rho.rows() != 4 || rho.cols() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: rho.rows(),
        });
    }
    validate_density(rho, INPUT_TOL, INPUT_MIN_EIG)?;
    let mut rho = rho.clone();
    rho.hermitize();
    let eig = HermitianEigen::new(&rho, INPUT_TOL)?;
    let p_max = eig.values.iter().copied().fold(0.0, f64::max);
    let w: Vec<[Complex64; 4]> = (0..4)
        .filter(|&k| eig.values[k] > RANK_TOL * p_max)
        .map(|k| {
            let s = eig.values[k].sqrt();
            std::array::from_fn(|r| eig.vectors[(r, k)] * s)
        })
        .collect();
    let n = w.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sign = [-1.0, 1.0, 1.0, -1.0];
    let tau = |k: usize, l: usize| -> Complex64 {
        (0..4).map(|r| w[k][r].conj() * w[l][3 - r].conj() * sign[r]).sum()
    };
    let dilation = ComplexMatrix::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
        (true, false) => tau(r, c - n),
        (false, true) => tau(c, r - n).conj(),
        _ => Complex64::new(0.0, 0.0),
    });
    let sv = HermitianEigen::new(&dilation, 1e-12)?;
    // eigenvalues come in ± pairs; the top n are the singular values
    let mut sigma: Vec<f64> = sv.values.iter().rev().take(n).map(|&x| x.max(0.0)).collect();
    sigma.resize(4, 0.0);
    let c = sigma[0] - sigma[1] - sigma[2] - sigma[3];
    if c > 1.0 + CLAMP_TOL {
        return Err(Error::NumericalBreakdown(format!("concurrence {c} exceeds 1")));
    }
    Ok(c.clamp(0.0, 1.0))
}

/// Keeps the `{0, 1}` occupations of each of the two subsystems, renormalizes,
/// and returns the population that fell outside that block.
pub fn project_to_two_qubits(state: &QuantumState) -> Result<(QuantumState, f64)> {
    let layout = state.layout();
    if layout.len() != 2 {
        return Err(Error::InvalidParameter("projection needs a two-subsystem state".into()));
    }
    let rho = state.density_matrix();
    let idx: Vec<usize> = [[0, 0], [0, 1], [1, 0], [1, 1]]
        .iter()
        .map(|occ| layout.flat_index(occ))
        .collect::<Result<_>>()?;
    let mut block = ComplexMatrix::from_fn(4, 4, |r, c| rho[(idx[r], idx[c])]);
    let kept = block.trace().re;
    let leakage = (rho.trace().re - kept).max(0.0);
    if kept <= 0.0 {
        return Err(Error::InvalidState("no population in the two-qubit block".into()));
    }
    block = block.scale(Complex64::new(1.0 / kept, 0.0));
    let sub = SystemLayout::new(
        layout
            .subsystems()
            .iter()
            .map(|s| crate::hilbert::Subsystem {
                kind: s.kind,
                local_dim: 2,
            })
            .collect(),
    )?;
    Ok((QuantumState::density_unchecked(sub, block), leakage))
}

/// Concurrence of the reduced state on `bipartition`, plus the population
/// projected out when the modes are truncated above one photon.
pub fn pair_concurrence(state: &QuantumState, bipartition: Bipartition) -> Result<(f64, f64)> {
    let mut reduced = partial_trace(state, &[bipartition.site_a, bipartition.site_b])?;
    let mut leakage = 0.0;
    if reduced.layout().dims() != [2, 2] {
        let (projected, leak) = project_to_two_qubits(&reduced)?;
        reduced = projected;
        leakage = leak;
    }
    Ok((concurrence(&reduced)?, leakage))
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcurrenceTrace {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub bipartition: String,
    /// Content hash of the experiment that produced the trace.
    pub config_summary: String,
    pub max_leakage: f64,
}

impl ConcurrenceTrace {
    pub fn new(taus: Vec<f64>, values: Vec<f64>, bipartition: String, config_summary: String) -> Result<Self> {
        if taus.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: taus.len(),
                found: values.len(),
            });
        }
        for &v in &values {
            if !(-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&v) {
                return Err(Error::NumericalBreakdown(format!("concurrence {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            taus,
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            bipartition,
            config_summary,
            max_leakage: 0.0,
        })
    }

    pub fn max(&self) -> (f64, f64) {
        self.taus
            .iter()
            .zip(&self.values)
            .fold((f64::NAN, f64::NEG_INFINITY), |best, (&t, &v)| if v > best.1 { (t, v) } else { best })
    }

    /// Linear interpolation between samples.
    pub fn value_at(&self, tau: f64) -> Option<f64> {
        let k = self.taus.iter().position(|&t| t >= tau)?;
        if k == 0 {
            return (self.taus[0] == tau).then_some(self.values[0]);
        }
        let (t0, t1) = (self.taus[k - 1], self.taus[k]);
        let w = (tau - t0) / (t1 - t0);
        Some(self.values[k - 1] * (1.0 - w) + self.values[k] * w)
    }

    /// CSV with a provenance comment line, then `tau,concurrence`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# config_hash={} bipartition={}", self.config_summary, self.bipartition)?;
        writeln!(out, "tau,concurrence")?;
        for (t, v) in self.taus.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Concurrence of `bipartition` along `taus` for the experiment's evolution.
pub fn concurrence_trace(experiment: &ExperimentSpec, bipartition: Bipartition, taus: &[f64]) -> Result<ConcurrenceTrace> {
    experiment.concurrence_trace(bipartition, taus)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroKind {
    SuddenDeath,
    InitiallyZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroInterval {
    pub tau_start: f64,
    pub tau_end: f64,
    pub kind: ZeroKind,
}

impl ZeroInterval {
    pub fn width(&self) -> f64 {
        self.tau_end - self.tau_start
    }
}

fn check_trace(trace: &ConcurrenceTrace, epsilon: f64) -> Result<()> {
    if trace.taus.len() < 2 {
        return Err(Error::InvalidParameter("trace needs at least two samples".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(())
}

/// Maximal runs of consecutive samples below `epsilon`, as `(first, last)` indices.
fn runs_below(values: &[f64], epsilon: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, &v) in values.iter().enumerate() {
        match (v < epsilon, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, values.len() - 1));
    }
    runs
}

/// Intervals where the concurrence drops below `epsilon`, with endpoints
/// interpolated linearly between samples.
pub fn detect_zero_intervals(trace: &ConcurrenceTrace, epsilon: f64) -> Result<Vec<ZeroInterval>> {
    check_trace(trace, epsilon)?;
    let (t, v) = (&trace.taus, &trace.values);
    let crossing = |i: usize, j: usize| {
        // i above threshold, j below (or vice versa)
        let w = (v[i] - epsilon) / (v[i] - v[j]);
        t[i] + w * (t[j] - t[i])
    };
    Ok(runs_below(v, epsilon)
        .into_iter()
        .map(|(s, e)| {
            let tau_start = if s == 0 { t[0] } else { crossing(s - 1, s) };
            let tau_end = if e == v.len() - 1 { t[e] } else { crossing(e + 1, e) };
            ZeroInterval {
                tau_start,
                tau_end,
                kind: if s == 0 { ZeroKind::InitiallyZero } else { ZeroKind::SuddenDeath },
            }
        })
        .collect())
}

/// Like [`detect_zero_intervals`], with each interior endpoint refined by
/// bisection on `concurrence_at` to within [`REFINE_TOL`].
pub fn detect_zero_intervals_refined(
    trace: &ConcurrenceTrace,
    epsilon: f64,
    concurrence_at: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<ZeroInterval>> {
    check_trace(trace, epsilon)?;
    let t = &trace.taus;
    let bisect = |mut above: f64, mut below: f64| -> Result<f64> {
        while (above - below).abs() > REFINE_TOL {
            let mid = 0.5 * (above + below);
            if concurrence_at(mid)? < epsilon {
                below = mid;
            } else {
                above = mid;
            }
        }
        Ok(0.5 * (above + below))
    };
    runs_below(&trace.values, epsilon)
        .into_iter()
        .map(|(s, e)| {
            let tau_start = if s == 0 { t[0] } else { bisect(t[s - 1], t[s])? };
            let tau_end = if e == t.len() - 1 { t[e] } else { bisect(t[e + 1], t[e])? };
            Ok(ZeroInterval {
                tau_start,
                tau_end,
                kind: if s == 0 { ZeroKind::InitiallyZero } else { ZeroKind::SuddenDeath },
            })
        })
        .collect()
}

/// Intervals that follow an entangled phase and are wider than [`SDE_MIN_WIDTH`].
pub fn sudden_death_intervals(intervals: &[ZeroInterval]) -> Vec<ZeroInterval> {
    intervals
        .iter()
        .filter(|z| z.kind == ZeroKind::SuddenDeath && z.width() > SDE_MIN_WIDTH)
        .copied()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub tau_start: f64,
    pub tau_end: f64,
    pub level: f64,
}

/// Maximal sample windows of width `>= min_width` whose spread `max - min`
/// stays below `epsilon`. Overlapping windows are resolved in favour of the
/// wider one.
pub fn detect_plateaus(trace: &ConcurrenceTrace, epsilon: f64, min_width: f64) -> Result<Vec<Plateau>> {
    check_trace(trace, epsilon)?;
    if !(min_width > 0.0) {
        return Err(Error::InvalidParameter(format!("min_width must be > 0, got {min_width}")));
    }
    let (t, v) = (&trace.taus, &trace.values);
    let n = v.len();
    let mut windows = Vec::new();
    let mut prev_end = None;
    for start in 0..n {
        let (mut lo, mut hi) = (v[start], v[start]);
        let mut end = start;
        while end + 1 < n {
            let x = v[end + 1];
            if hi.max(x) - lo.min(x) >= epsilon {
                break;
            }
            lo = lo.min(x);
            hi = hi.max(x);
            end += 1;
        }
        // maximal only if it reaches past the previous window's end
        if prev_end.is_none_or(|p| end > p) && t[end] - t[start] >= min_width {
            windows.push((start, end));
        }
        prev_end = Some(end);
    }
    windows.sort_by(|a, b| (t[b.1] - t[b.0]).total_cmp(&(t[a.1] - t[a.0])));
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for w in windows {
        if chosen.iter().all(|c| w.1 < c.0 || w.0 > c.1) {
            chosen.push(w);
        }
    }
    chosen.sort_by_key(|w| w.0);
    Ok(chosen
        .into_iter()
        .map(|(s, e)| Plateau {
            tau_start: t[s],
            tau_end: t[e],
            level: v[s..=e].iter().sum::<f64>() / (e - s + 1) as f64,
        })
        .collect())
}

/// Local maxima `(tau, value)` of a trace that rise above `floor`.
pub fn local_maxima(trace: &ConcurrenceTrace, floor: f64) -> Vec<(f64, f64)> {
    let v = &trace.values;
    (1..v.len().saturating_sub(1))
        .filter(|&k| v[k] > floor && v[k] >= v[k - 1] && v[k] > v[k + 1])
        .map(|k| (trace.taus[k], v[k]))
        .collect()
}
