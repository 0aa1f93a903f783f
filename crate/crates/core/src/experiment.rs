//! Declarative experiments: initial states, named target states, observable
//! traces, run manifests, parameter sweeps, the figure catalog and the
//! fiber/qubit equivalence check.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{fidelity, Propagator, HERMITIAN_TOL};
use crate::entanglement::{
    detect_plateaus, detect_zero_intervals, detect_zero_intervals_refined, local_maxima, pair_concurrence,
    sudden_death_intervals, Bipartition, ConcurrenceTrace, Plateau, ZeroInterval, CLAMP_TOL, REFINE_TOL,
    SDE_MIN_WIDTH, ZERO_EPSILON,
};
use crate::error::{Error, Result};
use crate::hilbert::{ModeLabel, QuantumState, SubsystemKind, SystemLayout, STATE_TOL};
use crate::matrix::ZERO;
use crate::models::{total_hamiltonian, SystemConfig};
use crate::open_systems::{
    integrate_on_grid, ConvergenceReport, LindbladGenerator, LossConfig, DEFAULT_DTAU, MIN_EIGENVALUE, TRACE_TOL,
};

/// Largest change in any concurrence sample tolerated when halving `dtau`.
pub const CONVERGENCE_TOL: f64 = 1e-7;
/// Points per `2π` of the default time grid.
pub const DEFAULT_STEPS: usize = 1001;
pub const PLATEAU_EPSILON: f64 = 1e-2;
pub const PLATEAU_MIN_WIDTH: f64 = 0.3;
pub const FIBER_TOL: f64 = 1e-8;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cavity {
    #[default]
    #[serde(alias = "1")]
    One,
    #[serde(alias = "2")]
    Two,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitLevel {
    #[default]
    G,
    E,
}

/// `(cos θ |10> + sin θ |01>)` in one cavity, the other cavity empty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub excited_pair: Cavity,
    #[serde(default)]
    pub qubit_state: QubitLevel,
}

impl InitialStateSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter("theta must be finite".into()));
        }
        Ok(())
    }

    pub fn vector(&self, layout: &SystemLayout) -> Result<Vec<Complex64>> {
        self.validate()?;
        let (ma, mb) = match self.excited_pair {
            Cavity::One => (ModeLabel::A1, ModeLabel::B1),
            Cavity::Two => (ModeLabel::A2, ModeLabel::B2),
        };
        let mut occ = vec![0; layout.len()];
        match (layout.site_of(SubsystemKind::Qubit), self.qubit_state) {
            (Some(q), QubitLevel::E) => occ[q] = 1,
            (None, QubitLevel::E) => {
                return Err(Error::InvalidParameter("qubit_state e needs a bridge-qubit coupling".into()))
            }
            _ => {}
        }
        let sa = layout.require_site(SubsystemKind::Mode(ma))?;
        let sb = layout.require_site(SubsystemKind::Mode(mb))?;
        let mut v = vec![ZERO; layout.total_dim()];
        occ[sa] = 1;
        v[layout.flat_index(&occ)?] = c(self.theta.cos());
        occ[sa] = 0;
        occ[sb] = 1;
        v[layout.flat_index(&occ)?] += c(self.theta.sin());
        Ok(v)
    }

    pub fn state(&self, layout: &SystemLayout) -> Result<QuantumState> {
        QuantumState::pure(layout.clone(), self.vector(layout)?)
    }
}

/// Named target states. Every mode not listed is empty and the qubit or
/// fiber mode is in its ground state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetState {
    /// `cos θ |a2> + sin θ |b2>`, θ taken from the initial state.
    TransferredBell,
    /// `(|a1> + |b1> + |a2> + |b2>) / 2`
    FourPartiteW,
    /// `(|a1> + |b2>) / √2`
    A1b2Bell,
    /// `(|b1> + |a2>) / √2`
    A2b1Bell,
}

impl TargetState {
    pub const ALL: [TargetState; 4] = [
        TargetState::TransferredBell,
        TargetState::FourPartiteW,
        TargetState::A1b2Bell,
        TargetState::A2b1Bell,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetState::TransferredBell => "transferred_bell",
            TargetState::FourPartiteW => "four_partite_w",
            TargetState::A1b2Bell => "a1b2_bell",
            TargetState::A2b1Bell => "a2b1_bell",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    fn amplitudes(self, theta: f64) -> [(ModeLabel, f64); 4] {
        use ModeLabel::*;
        match self {
            TargetState::TransferredBell => [(A1, 0.0), (B1, 0.0), (A2, theta.cos()), (B2, theta.sin())],
            TargetState::FourPartiteW => [(A1, 0.5), (B1, 0.5), (A2, 0.5), (B2, 0.5)],
            TargetState::A1b2Bell => [(A1, FRAC_1_SQRT_2), (B1, 0.0), (A2, 0.0), (B2, FRAC_1_SQRT_2)],
            TargetState::A2b1Bell => [(A1, 0.0), (B1, FRAC_1_SQRT_2), (A2, FRAC_1_SQRT_2), (B2, 0.0)],
        }
    }

    pub fn state(self, layout: &SystemLayout, theta: f64) -> Result<QuantumState> {
        let mut v = vec![ZERO; layout.total_dim()];
        for (m, a) in self.amplitudes(theta) {
            let mut occ = vec![0; layout.len()];
            occ[layout.require_site(SubsystemKind::Mode(m))?] = 1;
            v[layout.flat_index(&occ)?] = c(a);
        }
        QuantumState::pure(layout.clone(), v)
    }
}

/// Largest fidelity reachable by applying independent phase shifts to each
/// subsystem, `(Σ |ψ_k| |t_k|)^2`. Only defined for pure states with at most
/// one excitation.
pub fn local_phase_fidelity(state: &QuantumState, target: &QuantumState) -> Result<f64> {
    let (Some(x), Some(y)) = (state.amplitudes(), target.amplitudes()) else {
        return Err(Error::InvalidState("local phase fidelity needs pure states".into()));
    };
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let layout = state.layout();
    let mut overlap = 0.0;
    for (k, (a, b)) in x.iter().zip(y).enumerate() {
        let w = a.norm() * b.norm();
        if w == 0.0 {
            continue;
        }
        if layout.occupations(k).iter().sum::<usize>() > 1 {
            return Err(Error::InvalidState("local phase fidelity needs at most one excitation".into()));
        }
        overlap += w;
    }
    Ok((overlap * overlap).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Concurrence of two subsystems given by label, e.g. `["a2", "b2"]`.
    Concurrence([String; 2]),
    Fidelity(TargetState),
    /// Mean occupation of one subsystem.
    Population(String),
}

impl Observable {
    pub fn concurrence(a: &str, b: &str) -> Self {
        Observable::Concurrence([a.to_string(), b.to_string()])
    }

    fn file_stem(&self) -> String {
        match self {
            Observable::Concurrence([a, b]) => format!("concurrence_{a}{b}"),
            Observable::Fidelity(t) => format!("fidelity_{}", t.name()),
            Observable::Population(s) => format!("population_{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub start: f64,
    pub end: f64,
    /// Number of grid points, endpoints included.
    pub steps: usize,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            end: 2.0 * PI,
            steps: DEFAULT_STEPS,
        }
    }
}

impl TauGrid {
    pub fn new(start: f64, end: f64, steps: usize) -> Self {
        Self { start, end, steps }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite()) || !(self.end > self.start) {
            return Err(Error::InvalidParameter(format!(
                "tau grid must be increasing, got [{}, {}]",
                self.start, self.end
            )));
        }
        if self.steps < 2 {
            return Err(Error::InvalidParameter(format!("tau grid needs >= 2 steps, got {}", self.steps)));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| self.start + (self.end - self.start) * (k as f64 / n))
            .collect()
    }
}

fn default_dtau() -> f64 {
    DEFAULT_DTAU
}

fn default_observables() -> Vec<Observable> {
    vec![Observable::concurrence("a1", "b1"), Observable::concurrence("a2", "b2")]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    /// Present: GKSL integration. Absent: exact unitary evolution.
    #[serde(default)]
    pub losses: Option<LossConfig>,
    #[serde(default)]
    pub initial: InitialStateSpec,
    #[serde(default)]
    pub tau_grid: TauGrid,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
    /// RK4 step for lossy runs.
    #[serde(default = "default_dtau")]
    pub dtau: f64,
}

impl ExperimentSpec {
    pub fn new(config: SystemConfig) -> Self {
        Self {
            config,
            losses: None,
            initial: InitialStateSpec::default(),
            tau_grid: TauGrid::default(),
            observables: default_observables(),
            dtau: DEFAULT_DTAU,
        }
    }

    pub fn with_losses(mut self, losses: Option<LossConfig>) -> Self {
        self.losses = losses;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.initial.theta = theta;
        self
    }

    pub fn with_initial(mut self, initial: InitialStateSpec) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_tau_grid(mut self, grid: TauGrid) -> Self {
        self.tau_grid = grid;
        self
    }

    pub fn with_observables(mut self, observables: Vec<Observable>) -> Self {
        self.observables = observables;
        self
    }

    pub fn with_dtau(mut self, dtau: f64) -> Self {
        self.dtau = dtau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if let Some(l) = &self.losses {
            l.validate_for(&self.config.coupling)?;
        }
        self.initial.validate()?;
        self.tau_grid.validate()?;
        if !(self.dtau.is_finite() && self.dtau > 0.0) {
            return Err(Error::InvalidParameter(format!("dtau must be > 0, got {}", self.dtau)));
        }
        let layout = self.config.layout()?;
        for o in &self.observables {
            match o {
                Observable::Concurrence(pair) => {
                    self.resolve_pair(&layout, pair)?;
                }
                Observable::Fidelity(_) => {}
                Observable::Population(s) => {
                    layout.require_site(SubsystemKind::parse(s)?)?;
                }
            }
        }
        Ok(())
    }

    fn resolve_pair(&self, layout: &SystemLayout, pair: &[String; 2]) -> Result<Bipartition> {
        Bipartition::from_kinds(layout, SubsystemKind::parse(&pair[0])?, SubsystemKind::parse(&pair[1])?)
    }

    /// SHA-256 over `"blob <len>\0"` followed by the canonical JSON of the spec.
    pub fn content_hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", json.len()).as_bytes());
        h.update(&json);
        Ok(hex::encode(h.finalize()))
    }

    fn evolution(&self) -> Result<Evolution> {
        self.validate()?;
        let layout = self.config.layout()?;
        let psi0 = self.initial.vector(&layout)?;
        match &self.losses {
            None => {
                let prop = Propagator::new(total_hamiltonian(&self.config, &layout)?)?;
                let coeffs = prop.to_eigenbasis(&psi0)?;
                Ok(Evolution::Unitary { layout, prop, coeffs })
            }
            Some(l) => Ok(Evolution::Lossy {
                generator: LindbladGenerator::for_config(&self.config, l)?,
                rho0: QuantumState::pure(layout.clone(), psi0)?.density_matrix(),
                layout,
                dtau: self.dtau,
            }),
        }
    }

    /// States on `taus`, which must be strictly increasing.
    pub fn states(&self, taus: &[f64]) -> Result<Vec<QuantumState>> {
        self.evolution()?.states(taus)
    }

    /// Concurrence of `bipartition` along `taus`.
    pub fn concurrence_trace(&self, bipartition: Bipartition, taus: &[f64]) -> Result<ConcurrenceTrace> {
        let states = self.states(taus)?;
        let layout = self.config.layout()?;
        trace_from_states(&states, taus, bipartition, &layout, self.content_hash()?)
    }
}

fn trace_from_states(
    states: &[QuantumState],
    taus: &[f64],
    bipartition: Bipartition,
    layout: &SystemLayout,
    hash: String,
) -> Result<ConcurrenceTrace> {
    let mut values = Vec::with_capacity(states.len());
    let mut leakage = 0.0f64;
    for (s, &t) in states.iter().zip(taus) {
        let (v, leak) = pair_concurrence(s, bipartition).map_err(|e| e.at_tau(t))?;
        values.push(v);
        leakage = leakage.max(leak);
    }
    let mut trace = ConcurrenceTrace::new(taus.to_vec(), values, bipartition.name(layout), hash)?;
    trace.max_leakage = leakage;
    Ok(trace)
}

enum Evolution {
    Unitary {
        layout: SystemLayout,
        prop: Propagator,
        coeffs: Vec<Complex64>,
    },
    Lossy {
        layout: SystemLayout,
        generator: LindbladGenerator,
        rho0: crate::matrix::ComplexMatrix,
        dtau: f64,
    },
}

impl Evolution {
    fn state_at(&self, tau: f64) -> Result<QuantumState> {
        match self {
            Evolution::Unitary { layout, prop, coeffs } => {
                QuantumState::pure(layout.clone(), prop.from_eigenbasis(coeffs, tau)).map_err(|e| e.at_tau(tau))
            }
            Evolution::Lossy { .. } => Ok(self.states(&[tau])?.remove(0)),
        }
    }

    fn states(&self, taus: &[f64]) -> Result<Vec<QuantumState>> {
        if taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("tau grid must be strictly increasing".into()));
        }
        match self {
            Evolution::Unitary { .. } => taus.iter().map(|&t| self.state_at(t)).collect(),
            Evolution::Lossy {
                layout,
                generator,
                rho0,
                dtau,
            } => {
                let Some(&first) = taus.first() else {
                    return Ok(Vec::new());
                };
                if first < 0.0 {
                    return Err(Error::InvalidParameter("lossy runs start at tau = 0".into()));
                }
                let prepend = first > 0.0;
                let mut grid = Vec::with_capacity(taus.len() + 1);
                if prepend {
                    grid.push(0.0);
                }
                grid.extend_from_slice(taus);
                let samples = integrate_on_grid(generator, rho0, &grid, *dtau)?;
                Ok(samples
                    .into_iter()
                    .skip(usize::from(prepend))
                    .map(|s| QuantumState::density_unchecked(layout.clone(), s.rho))
                    .collect())
            }
        }
    }

    fn is_unitary(&self) -> bool {
        matches!(self, Evolution::Unitary { .. })
    }
}

/// A non-concurrence observable sampled on the time grid.
#[derive(Clone, Debug, Serialize)]
pub struct Series {
    pub name: String,
    pub column: String,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn write_csv<W: Write>(&self, mut out: W, hash: &str) -> std::io::Result<()> {
        writeln!(out, "# config_hash={hash} observable={}", self.name)?;
        writeln!(out, "tau,{}", self.column)?;
        for (t, v) in self.taus.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceAnalysis {
    pub bipartition: String,
    pub max_tau: f64,
    pub max_value: f64,
    pub zero_intervals: Vec<ZeroInterval>,
    /// Zero intervals after an entangled phase, wider than [`SDE_MIN_WIDTH`].
    pub sudden_death: Vec<ZeroInterval>,
    pub plateaus: Vec<Plateau>,
    pub local_maxima: Vec<(f64, f64)>,
    pub max_leakage: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    pub state: f64,
    pub hermitian: f64,
    pub concurrence_clamp: f64,
    pub zero_epsilon: f64,
    pub refine: f64,
    pub sudden_death_min_width: f64,
    pub plateau_epsilon: f64,
    pub plateau_min_width: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
    pub convergence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            state: STATE_TOL,
            hermitian: HERMITIAN_TOL,
            concurrence_clamp: CLAMP_TOL,
            zero_epsilon: ZERO_EPSILON,
            refine: REFINE_TOL,
            sudden_death_min_width: SDE_MIN_WIDTH,
            plateau_epsilon: PLATEAU_EPSILON,
            plateau_min_width: PLATEAU_MIN_WIDTH,
            trace: TRACE_TOL,
            min_eigenvalue: MIN_EIGENVALUE,
            convergence: CONVERGENCE_TOL,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub spec: ExperimentSpec,
    pub evolution: String,
    pub tolerances: Tolerances,
    pub convergence: Option<ConvergenceReport>,
    pub analyses: Vec<TraceAnalysis>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn converged(&self) -> bool {
        self.convergence.as_ref().is_none_or(|c| c.passed)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub concurrences: Vec<ConcurrenceTrace>,
    pub series: Vec<Series>,
    pub manifest: Manifest,
}

impl RunResult {
    pub fn concurrence(&self, name: &str) -> Option<&ConcurrenceTrace> {
        self.concurrences.iter().find(|t| t.bipartition == name)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Writes every CSV plus `manifest.json` into `dir` (created if missing),
    /// each file name prefixed with `prefix`.
    pub fn write_to(&self, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let hash = &self.manifest.config_hash;
        let mut written = Vec::new();
        for t in &self.concurrences {
            let p = dir.join(format!("{prefix}concurrence_{}.csv", t.bipartition));
            t.write_csv(std::io::BufWriter::new(fs::File::create(&p)?))?;
            written.push(p);
        }
        for s in &self.series {
            let p = dir.join(format!("{prefix}{}.csv", s.name));
            s.write_csv(std::io::BufWriter::new(fs::File::create(&p)?), hash)?;
            written.push(p);
        }
        let p = dir.join(format!("{prefix}manifest.json"));
        fs::write(&p, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        written.push(p);
        Ok(written)
    }
}

/// Reads either a bare [`ExperimentSpec`] or a run manifest and returns the spec.
pub fn spec_from_json(text: &str) -> Result<ExperimentSpec> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if let Some(spec) = value.get("spec").filter(|_| value.get("config_hash").is_some()) {
        return Ok(serde_json::from_value(spec.clone())?);
    }
    Ok(serde_json::from_value(value)?)
}

fn analyse(trace: &ConcurrenceTrace, refine: Option<&dyn Fn(f64) -> Result<f64>>) -> Result<TraceAnalysis> {
    let zero_intervals = match refine {
        Some(f) => detect_zero_intervals_refined(trace, ZERO_EPSILON, f)?,
        None => detect_zero_intervals(trace, ZERO_EPSILON)?,
    };
    let (max_tau, max_value) = trace.max();
    Ok(TraceAnalysis {
        bipartition: trace.bipartition.clone(),
        max_tau,
        max_value,
        sudden_death: sudden_death_intervals(&zero_intervals),
        zero_intervals,
        plateaus: detect_plateaus(trace, PLATEAU_EPSILON, PLATEAU_MIN_WIDTH)?,
        local_maxima: local_maxima(trace, ZERO_EPSILON),
        max_leakage: trace.max_leakage,
    })
}

fn observe(
    spec: &ExperimentSpec,
    layout: &SystemLayout,
    states: &[QuantumState],
    taus: &[f64],
    hash: &str,
) -> Result<(Vec<ConcurrenceTrace>, Vec<Series>)> {
    let mut traces = Vec::new();
    let mut series = Vec::new();
    for o in &spec.observables {
        match o {
            Observable::Concurrence(pair) => {
                let bp = spec.resolve_pair(layout, pair)?;
                traces.push(trace_from_states(states, taus, bp, layout, hash.to_string())?);
            }
            Observable::Fidelity(target) => {
                let t = target.state(layout, spec.initial.theta)?;
                let values = states
                    .iter()
                    .zip(taus)
                    .map(|(s, &tau)| fidelity(s, &t).map_err(|e| e.at_tau(tau)))
                    .collect::<Result<_>>()?;
                series.push(Series {
                    name: o.file_stem(),
                    column: "fidelity".into(),
                    taus: taus.to_vec(),
                    values,
                });
            }
            Observable::Population(label) => {
                let site = layout.require_site(SubsystemKind::parse(label)?)?;
                let values = states
                    .iter()
                    .zip(taus)
                    .map(|(s, &tau)| s.mean_occupation(site).map_err(|e| e.at_tau(tau)))
                    .collect::<Result<_>>()?;
                series.push(Series {
                    name: o.file_stem(),
                    column: "population".into(),
                    taus: taus.to_vec(),
                    values,
                });
            }
        }
    }
    Ok((traces, series))
}

/// Runs one experiment. Lossy runs are repeated at `dtau / 2` and the
/// difference is recorded in the manifest.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunResult> {
    let evolution = spec.evolution()?;
    let layout = spec.config.layout()?;
    let hash = spec.content_hash()?;
    let taus = spec.tau_grid.points();
    let states = evolution.states(&taus)?;
    let (concurrences, series) = observe(spec, &layout, &states, &taus, &hash)?;

    let convergence = if evolution.is_unitary() {
        None
    } else {
        let fine = spec.clone().with_dtau(spec.dtau / 2.0);
        let fine_states = fine.evolution()?.states(&taus)?;
        let (fine_traces, _) = observe(spec, &layout, &fine_states, &taus, &hash)?;
        let max_concurrence_change = concurrences
            .iter()
            .zip(&fine_traces)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        let max_element_change = states
            .iter()
            .zip(&fine_states)
            .map(|(a, b)| a.density_matrix().max_abs_diff(&b.density_matrix()))
            .fold(0.0, f64::max);
        Some(ConvergenceReport {
            dtau: spec.dtau,
            max_concurrence_change,
            max_element_change,
            passed: max_concurrence_change < CONVERGENCE_TOL,
        })
    };

    let pairs: Vec<Bipartition> = spec
        .observables
        .iter()
        .filter_map(|o| match o {
            Observable::Concurrence(p) => Some(spec.resolve_pair(&layout, p)),
            _ => None,
        })
        .collect::<Result<_>>()?;
    let analyses = concurrences
        .iter()
        .zip(&pairs)
        .map(|(t, &bp)| {
            if evolution.is_unitary() {
                let at = |tau: f64| -> Result<f64> { Ok(pair_concurrence(&evolution.state_at(tau)?, bp)?.0) };
                analyse(t, Some(&at))
            } else {
                analyse(t, None)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut outputs: Vec<String> = concurrences
        .iter()
        .map(|t| format!("concurrence_{}.csv", t.bipartition))
        .chain(series.iter().map(|s| format!("{}.csv", s.name)))
        .collect();
    outputs.push("manifest.json".into());

    Ok(RunResult {
        concurrences,
        series,
        manifest: Manifest {
            tool: "wgmsim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: hash,
            spec: spec.clone(),
            evolution: if evolution.is_unitary() { "unitary" } else { "gksl-rk4" }.into(),
            tolerances: Tolerances::default(),
            convergence,
            analyses,
            outputs,
        },
    })
}

/// Concurrence on a `J x θ` grid at fixed `τ`, row-major in `J`.
#[derive(Clone, Debug, Serialize)]
pub struct SweepSurface {
    pub bipartition: String,
    pub tau: f64,
    pub j_values: Vec<f64>,
    pub theta_values: Vec<f64>,
    pub values: Vec<f64>,
}

impl SweepSurface {
    pub fn at(&self, j_index: usize, theta_index: usize) -> f64 {
        self.values[j_index * self.theta_values.len() + theta_index]
    }

    /// `(J, θ, C)` of the largest value.
    pub fn max(&self) -> (f64, f64, f64) {
        let mut best = (f64::NAN, f64::NAN, f64::NEG_INFINITY);
        for (i, &j) in self.j_values.iter().enumerate() {
            for (k, &th) in self.theta_values.iter().enumerate() {
                let v = self.at(i, k);
                if v > best.2 {
                    best = (j, th, v);
                }
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "J,theta,concurrence")?;
        for (i, j) in self.j_values.iter().enumerate() {
            for (k, th) in self.theta_values.iter().enumerate() {
                writeln!(out, "{j},{th},{}", self.at(i, k))?;
            }
        }
        Ok(())
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * (k as f64 / (n - 1) as f64)).collect(),
    }
}

/// Concurrence surfaces over `J1 = J2 = J` and θ at `fixed_tau`, one per
/// concurrence observable of `spec`. The spec's own `J` and θ are ignored.
pub fn sweep(spec: &ExperimentSpec, j_values: &[f64], theta_values: &[f64], fixed_tau: f64) -> Result<Vec<SweepSurface>> {
    spec.validate()?;
    if j_values.is_empty() || theta_values.is_empty() {
        return Err(Error::InvalidParameter("sweep ranges must be nonempty".into()));
    }
    if let Some(&th) = theta_values.iter().find(|&&t| !(-1e-12..=FRAC_PI_2 + 1e-12).contains(&t)) {
        return Err(Error::InvalidParameter(format!("sweep theta must lie in [0, π/2], got {th}")));
    }
    if !(fixed_tau.is_finite() && fixed_tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("fixed tau must be >= 0, got {fixed_tau}")));
    }
    let layout = spec.config.layout()?;
    let pairs: Vec<Bipartition> = spec
        .observables
        .iter()
        .filter_map(|o| match o {
            Observable::Concurrence(p) => Some(spec.resolve_pair(&layout, p)),
            _ => None,
        })
        .collect::<Result<_>>()?;
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one concurrence observable".into()));
    }
    let rows: Vec<Vec<Vec<f64>>> = j_values
        .par_iter()
        .map(|&j| -> Result<Vec<Vec<f64>>> {
            let cfg = spec.config.clone().with_j(j);
            let mut row = vec![Vec::with_capacity(theta_values.len()); pairs.len()];
            match &spec.losses {
                None => {
                    let prop = Propagator::new(total_hamiltonian(&cfg, &layout)?)?;
                    for &th in theta_values {
                        let init = InitialStateSpec { theta: th, ..spec.initial };
                        let psi = prop.apply(&init.vector(&layout)?, fixed_tau)?;
                        let state = QuantumState::pure(layout.clone(), psi)?;
                        for (r, bp) in row.iter_mut().zip(&pairs) {
                            r.push(pair_concurrence(&state, *bp)?.0);
                        }
                    }
                }
                Some(_) => {
                    for &th in theta_values {
                        let point = ExperimentSpec {
                            config: cfg.clone(),
                            initial: InitialStateSpec { theta: th, ..spec.initial },
                            ..spec.clone()
                        };
                        let state = point.evolution()?.state_at(fixed_tau)?;
                        for (r, bp) in row.iter_mut().zip(&pairs) {
                            r.push(pair_concurrence(&state, *bp)?.0);
                        }
                    }
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(p, bp)| SweepSurface {
            bipartition: bp.name(&layout),
            tau: fixed_tau,
            j_values: j_values.to_vec(),
            theta_values: theta_values.to_vec(),
            values: rows.iter().flat_map(|r| r[p].iter().copied()).collect(),
        })
        .collect())
}

/// A superposition over occupations `(a1, b1, a2, b2, m)` where `m` is the
/// qubit level or the fiber photon number.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberTestState {
    pub name: String,
    pub terms: Vec<([usize; 5], Complex64)>,
}

impl FiberTestState {
    pub fn new(name: &str, terms: Vec<([usize; 5], Complex64)>) -> Self {
        Self {
            name: name.to_string(),
            terms,
        }
    }

    fn single(name: &str, site: usize) -> Self {
        let mut occ = [0; 5];
        occ[site] = 1;
        Self::new(name, vec![(occ, c(1.0))])
    }

    /// Vacuum, every single-photon basis state, the mediator excitation and a
    /// few superpositions.
    pub fn default_set() -> Vec<Self> {
        let (s, t) = (FRAC_PI_4.sin(), (PI / 3.0).sin());
        vec![
            Self::new("vacuum", vec![([0; 5], c(1.0))]),
            Self::single("a1", 0),
            Self::single("b1", 1),
            Self::single("a2", 2),
            Self::single("b2", 3),
            Self::single("mediator", 4),
            Self::new("bell_c1", vec![([1, 0, 0, 0, 0], c(s)), ([0, 1, 0, 0, 0], c(s))]),
            Self::new(
                "theta_pi3_c1",
                vec![([1, 0, 0, 0, 0], c((PI / 3.0).cos())), ([0, 1, 0, 0, 0], c(t))],
            ),
            Self::new(
                "complex_mix",
                vec![
                    ([1, 0, 0, 0, 0], Complex64::new(0.5, 0.1)),
                    ([0, 0, 1, 0, 0], Complex64::new(0.0, -0.4)),
                    ([0, 0, 0, 1, 0], c(0.3)),
                    ([0; 5], Complex64::new(0.2, 0.2)),
                ],
            ),
        ]
    }

    fn vector(&self, layout: &SystemLayout) -> Result<Vec<Complex64>> {
        if let Some((occ, _)) = self.terms.iter().find(|(o, _)| o.iter().sum::<usize>() > 1) {
            return Err(Error::InvalidState(format!(
                "{}: term {occ:?} has more than one excitation",
                self.name
            )));
        }
        let mut v = vec![ZERO; layout.total_dim()];
        for (occ, a) in &self.terms {
            v[layout.flat_index(occ)?] += a;
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FiberStateResult {
    pub name: String,
    pub max_deviation: f64,
    pub worst_bipartition: String,
    pub worst_tau: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FiberReport {
    pub nu: f64,
    pub g: f64,
    pub j: f64,
    pub tolerance: f64,
    pub max_deviation: f64,
    pub passed: bool,
    pub states: Vec<FiberStateResult>,
}

/// Compares every pairwise concurrence between the fiber model (coupling
/// `nu`) and the bridge-qubit model (coupling `g`), both with `J1 = J2 = j`.
pub fn verify_fiber_equivalence(
    nu: f64,
    g: f64,
    j: f64,
    taus: &[f64],
    states: &[FiberTestState],
) -> Result<FiberReport> {
    let fiber = SystemConfig::fiber(j).with_coupling_strength(nu);
    let qubit = SystemConfig::bridge_qubit(j).with_coupling_strength(g);
    let lf = fiber.layout()?;
    let lq = qubit.layout()?;
    let pf = Propagator::new(total_hamiltonian(&fiber, &lf)?)?;
    let pq = Propagator::new(total_hamiltonian(&qubit, &lq)?)?;
    let mut results = Vec::with_capacity(states.len());
    for st in states {
        let vf = st.vector(&lf)?;
        let vq = st.vector(&lq)?;
        if crate::matrix::norm(&vf) == 0.0 {
            return Err(Error::InvalidState(format!("{}: zero vector", st.name)));
        }
        let cf = pf.to_eigenbasis(&vf)?;
        let cq = pq.to_eigenbasis(&vq)?;
        let mut worst = FiberStateResult {
            name: st.name.clone(),
            max_deviation: 0.0,
            worst_bipartition: String::new(),
            worst_tau: f64::NAN,
        };
        for &tau in taus {
            let sf = QuantumState::normalized_pure(lf.clone(), pf.from_eigenbasis(&cf, tau))?;
            let sq = QuantumState::normalized_pure(lq.clone(), pq.from_eigenbasis(&cq, tau))?;
            for a in 0..lf.len() {
                for b in a + 1..lf.len() {
                    let bf = Bipartition::new(&lf, a, b)?;
                    let bq = Bipartition::new(&lq, a, b)?;
                    let d = (pair_concurrence(&sf, bf)?.0 - pair_concurrence(&sq, bq)?.0).abs();
                    if d > worst.max_deviation || worst.worst_bipartition.is_empty() {
                        worst.max_deviation = d.max(worst.max_deviation);
                        worst.worst_bipartition = bq.name(&lq);
                        worst.worst_tau = tau;
                    }
                }
            }
        }
        results.push(worst);
    }
    let max_deviation = results.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
    Ok(FiberReport {
        nu,
        g,
        j,
        tolerance: FIBER_TOL,
        max_deviation,
        passed: max_deviation < FIBER_TOL,
        states: results,
    })
}

/// Per-figure parameter overrides.
#[derive(Clone, Copy, Debug, Default)]
pub struct FigureOverrides {
    pub j: Option<f64>,
    pub theta: Option<f64>,
    pub steps: Option<usize>,
    pub tau_end: Option<f64>,
    pub grid: Option<(usize, usize)>,
    pub losses: Option<LossConfig>,
}

#[derive(Clone, Debug)]
pub enum FigurePlan {
    /// Time traces, one labelled run per curve family.
    Traces(Vec<(String, ExperimentSpec)>),
    Sweep {
        spec: Box<ExperimentSpec>,
        tau: f64,
        j_values: Vec<f64>,
        theta_values: Vec<f64>,
    },
}

pub const FIGURES: [&str; 16] = [
    "fig2a", "fig2b", "fig3", "fig4a", "fig4b", "fig5", "fig6a", "fig6b", "fig10a", "fig10b", "fig11a", "fig11b",
    "fig12a", "fig12b", "fig13", "fig14",
];

pub const SWEEP_J_MAX: f64 = 4.0;
pub const DEFAULT_SWEEP_POINTS: usize = 101;

/// Parameters and observables of one figure of the reference study.
pub fn figure_plan(name: &str, ov: &FigureOverrides) -> Result<FigurePlan> {
    let bell = FRAC_PI_4;
    let grid = TauGrid {
        end: ov.tau_end.unwrap_or(2.0 * PI),
        steps: ov.steps.unwrap_or(DEFAULT_STEPS),
        ..TauGrid::default()
    };
    let pair = |a: &str, b: &str| Observable::concurrence(a, b);
    let both = |j: f64, theta: f64, obs: Vec<Observable>, lossy: bool| -> Vec<(String, ExperimentSpec)> {
        [
            ("qubit", SystemConfig::bridge_qubit(ov.j.unwrap_or(j))),
            ("evanescent", SystemConfig::evanescent(ov.j.unwrap_or(j))),
        ]
        .into_iter()
        .map(|(label, cfg)| {
            let losses = lossy.then(|| ov.losses.unwrap_or_else(|| LossConfig::defaults_for(&cfg.coupling)));
            let losses = losses.map(|l| {
                if cfg.coupling.has_qubit() {
                    l
                } else {
                    LossConfig { gamma: 0.0, ..l }
                }
            });
            let spec = ExperimentSpec::new(cfg)
                .with_theta(ov.theta.unwrap_or(theta))
                .with_tau_grid(grid)
                .with_observables(obs.clone())
                .with_losses(losses);
            (label.to_string(), spec)
        })
        .collect()
    };
    let qubit_only = |theta: f64, lossy: bool| -> Vec<(String, ExperimentSpec)> {
        let cfg = SystemConfig::bridge_qubit(ov.j.unwrap_or(0.0));
        let losses = lossy.then(|| ov.losses.unwrap_or_else(|| LossConfig::defaults_for(&cfg.coupling)));
        vec![(
            "qubit".to_string(),
            ExperimentSpec::new(cfg)
                .with_theta(ov.theta.unwrap_or(theta))
                .with_tau_grid(grid)
                .with_losses(losses),
        )]
    };
    let (nj, nt) = ov.grid.unwrap_or((DEFAULT_SWEEP_POINTS, DEFAULT_SWEEP_POINTS));
    let surface = |cfg: SystemConfig, tau: f64, obs: Vec<Observable>| FigurePlan::Sweep {
        spec: Box::new(ExperimentSpec::new(cfg).with_observables(obs)),
        tau,
        j_values: linspace(0.0, SWEEP_J_MAX, nj),
        theta_values: linspace(0.0, FRAC_PI_2, nt),
    };
    let intra = vec![pair("a1", "b1"), pair("a2", "b2")];
    Ok(match name {
        "fig2a" => FigurePlan::Traces(both(0.0, bell, intra, false)),
        "fig2b" => FigurePlan::Traces(both(2.0, bell, intra, false)),
        "fig3" => FigurePlan::Traces(qubit_only(bell, false)),
        "fig4a" => surface(SystemConfig::bridge_qubit(0.0), FRAC_PI_2, intra),
        "fig4b" => surface(SystemConfig::bridge_qubit(0.0), FRAC_PI_2, vec![pair("a1", "b2"), pair("b1", "a2")]),
        "fig5" => FigurePlan::Traces(qubit_only(0.0, false)),
        "fig6a" => surface(SystemConfig::evanescent(0.0), FRAC_PI_4, vec![pair("a1", "b2")]),
        "fig6b" => surface(SystemConfig::evanescent(0.0), FRAC_PI_4, vec![pair("b1", "a2")]),
        "fig10a" => FigurePlan::Traces(both(0.0, 0.0, vec![pair("a1", "b2")], false)),
        "fig10b" => FigurePlan::Traces(both(2.0, 0.0, vec![pair("b1", "a2")], false)),
        "fig11a" => FigurePlan::Traces(both(0.0, 0.0, vec![pair("a1", "a2")], false)),
        "fig11b" => FigurePlan::Traces(both(2.0, 0.0, vec![pair("b1", "b2")], false)),
        "fig12a" => FigurePlan::Traces(both(0.0, bell, intra, true)),
        "fig12b" => FigurePlan::Traces(both(2.0, bell, intra, true)),
        "fig13" => FigurePlan::Traces(qubit_only(bell, true)),
        "fig14" => FigurePlan::Traces(qubit_only(0.0, true)),
        other => return Err(Error::UnknownName(other.to_string())),
    })
}

#[derive(Clone, Debug)]
pub enum FigureOutput {
    Traces(Vec<(String, RunResult)>),
    Sweep {
        spec: ExperimentSpec,
        surfaces: Vec<SweepSurface>,
    },
}

/// Runs a figure; trace families run concurrently.
pub fn run_figure(name: &str, ov: &FigureOverrides) -> Result<FigureOutput> {
    match figure_plan(name, ov)? {
        FigurePlan::Traces(runs) => {
            let results = runs
                .into_par_iter()
                .map(|(label, spec)| Ok((label, run_experiment(&spec)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(FigureOutput::Traces(results))
        }
        FigurePlan::Sweep {
            spec,
            tau,
            j_values,
            theta_values,
        } => {
            let surfaces = sweep(&spec, &j_values, &theta_values, tau)?;
            Ok(FigureOutput::Sweep { spec: *spec, surfaces })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entanglement::ZeroKind;

    #[test]
    fn catalog_states_are_normalized() {
        for cfg in [SystemConfig::bridge_qubit(0.0), SystemConfig::evanescent(0.0), SystemConfig::fiber(0.0)] {
            let layout = cfg.layout().unwrap();
            for t in TargetState::ALL {
                let s = t.state(&layout, 0.3).unwrap();
                assert!((crate::matrix::norm(s.amplitudes().unwrap()) - 1.0).abs() < 1e-14);
                assert_eq!(TargetState::parse(t.name()).unwrap(), t);
            }
        }
        assert!(TargetState::parse("ghz").is_err());
    }

    #[test]
    fn initial_state_layout() {
        let layout = SystemConfig::bridge_qubit(0.0).layout().unwrap();
        let v = InitialStateSpec {
            theta: FRAC_PI_4,
            excited_pair: Cavity::Two,
            qubit_state: QubitLevel::E,
        }
        .vector(&layout)
        .unwrap();
        assert!((v[layout.flat_index(&[0, 0, 1, 0, 1]).unwrap()].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((v[layout.flat_index(&[0, 0, 0, 1, 1]).unwrap()].re - FRAC_1_SQRT_2).abs() < 1e-15);
        let ev = SystemConfig::evanescent(0.0).layout().unwrap();
        let bad = InitialStateSpec {
            qubit_state: QubitLevel::E,
            ..Default::default()
        };
        assert!(bad.vector(&ev).is_err());
    }

    #[test]
    fn tau_grid_validation() {
        assert!(TauGrid::new(0.0, 1.0, 1).validate().is_err());
        assert!(TauGrid::new(1.0, 1.0, 5).validate().is_err());
        let p = TauGrid::new(0.0, 1.0, 5).points();
        assert_eq!(p, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn spec_json_defaults_and_hash() {
        let json = r#"{"config": {"coupling": {"kind": "evanescent", "lambda": 1.0}}}"#;
        let spec: ExperimentSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.tau_grid, TauGrid::default());
        assert_eq!(spec.observables.len(), 2);
        assert!(spec.losses.is_none());
        let h1 = spec.content_hash().unwrap();
        assert_eq!(h1.len(), 64);
        assert_eq!(h1, spec.clone().content_hash().unwrap());
        assert_ne!(h1, spec.with_theta(0.1).content_hash().unwrap());
    }

    #[test]
    fn unknown_labels_fail_validation() {
        let spec = ExperimentSpec::new(SystemConfig::evanescent(0.0)).with_observables(vec![Observable::concurrence("a1", "q")]);
        assert!(spec.validate().is_err());
        let spec = ExperimentSpec::new(SystemConfig::evanescent(0.0)).with_observables(vec![Observable::Population("z".into())]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn run_reports_transfer_and_manifest() {
        let spec = ExperimentSpec::new(SystemConfig::evanescent(0.0))
            .with_theta(FRAC_PI_4)
            .with_tau_grid(TauGrid::new(0.0, PI, 201))
            .with_observables(vec![
                Observable::concurrence("a2", "b2"),
                Observable::Fidelity(TargetState::TransferredBell),
                Observable::Population("a1".into()),
            ]);
        let run = run_experiment(&spec).unwrap();
        let c = run.concurrence("a2b2").unwrap();
        assert!((c.values[100] - 1.0).abs() < 1e-9);
        let f = run.series("fidelity_transferred_bell").unwrap();
        assert!((f.values[100] - 1.0).abs() < 1e-9);
        assert!((run.series("population_a1").unwrap().values[0] - 0.5).abs() < 1e-12);
        assert_eq!(run.manifest.evolution, "unitary");
        assert!(run.manifest.convergence.is_none());
        let z = &run.manifest.analyses[0].zero_intervals;
        assert_eq!(z[0].kind, ZeroKind::InitiallyZero);
    }

    #[test]
    fn manifest_round_trip() {
        let spec = ExperimentSpec::new(SystemConfig::bridge_qubit(1.0)).with_tau_grid(TauGrid::new(0.0, 1.0, 11));
        let run = run_experiment(&spec).unwrap();
        let text = serde_json::to_string(&run.manifest).unwrap();
        let back = spec_from_json(&text).unwrap();
        assert_eq!(back, spec);
        let again = run_experiment(&back).unwrap();
        assert_eq!(again.concurrences[0].values, run.concurrences[0].values);
        assert_eq!(again.manifest.config_hash, run.manifest.config_hash);
    }

    #[test]
    fn sweep_rejects_bad_ranges() {
        let spec = ExperimentSpec::new(SystemConfig::evanescent(0.0));
        assert!(sweep(&spec, &[], &[0.0], 1.0).is_err());
        assert!(sweep(&spec, &[0.0], &[2.0], 1.0).is_err());
    }

    #[test]
    fn fiber_rejects_multi_excitation() {
        let two = FiberTestState::new("two", vec![([1, 1, 0, 0, 0], c(1.0))]);
        assert!(verify_fiber_equivalence(1.0, 1.0, 0.0, &[0.0, 1.0], &[two]).is_err());
    }

    #[test]
    fn vacuum_is_trivially_equivalent() {
        let r = verify_fiber_equivalence(1.0, 1.0, 0.0, &linspace(0.0, 3.0, 7), &FiberTestState::default_set()[..1])
            .unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn every_figure_has_a_plan() {
        for f in FIGURES {
            figure_plan(f, &FigureOverrides::default()).unwrap();
        }
        assert!(figure_plan("fig7", &FigureOverrides::default()).is_err());
    }
}
