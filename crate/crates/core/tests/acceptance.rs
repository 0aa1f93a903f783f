//! Acceptance suite: one check per criterion, one PASS/FAIL line each.
//! Exits non-zero if any check fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::process::ExitCode;
use std::time::Instant;

use wgmsim::analytic::{audit, default_audit_grid};
use wgmsim::entanglement::{detect_zero_intervals_refined, sudden_death_intervals, SDE_MIN_WIDTH, ZERO_EPSILON};
use wgmsim::experiment::{
    linspace, local_phase_fidelity, run_experiment, sweep, verify_fiber_equivalence, ExperimentSpec, FiberTestState,
    Observable, TargetState, TauGrid,
};
use wgmsim::hilbert::{QuantumState, SubsystemKind};
use wgmsim::open_systems::{
    compare_couplings_lossy, integrate_on_grid, min_eigenvalue_over, unitary_deviation, LindbladGenerator, LossConfig,
};
use wgmsim::{fidelity, pair_concurrence, Bipartition, SystemConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn pair(cfg: &SystemConfig, a: &str, b: &str) -> Bipartition {
    let layout = cfg.layout().unwrap();
    Bipartition::from_kinds(
        &layout,
        SubsystemKind::parse(a).unwrap(),
        SubsystemKind::parse(b).unwrap(),
    )
    .unwrap()
}

fn state_at(spec: &ExperimentSpec, tau: f64) -> QuantumState {
    spec.states(&[tau]).unwrap().remove(0)
}

fn conc(spec: &ExperimentSpec, state: &QuantumState, a: &str, b: &str) -> f64 {
    pair_concurrence(state, pair(&spec.config, a, b)).unwrap().0
}

fn target(spec: &ExperimentSpec, t: TargetState) -> QuantumState {
    t.state(&spec.config.layout().unwrap(), spec.initial.theta).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let spec = ExperimentSpec::new(SystemConfig::evanescent(0.0)).with_theta(FRAC_PI_4);
    let s = state_at(&spec, FRAC_PI_2);
    let c1 = conc(&spec, &s, "a1", "b1");
    let c2 = conc(&spec, &s, "a2", "b2");
    let f = fidelity(&s, &target(&spec, TargetState::TransferredBell)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        c1 < 1e-8 && c2 > 1.0 - 1e-8 && f > 1.0 - 1e-9 && elapsed < 1.0,
        format!("C_a1b1={c1:.3e} C_a2b2={c2:.12} F={f:.12} t={elapsed:.3}s"),
    )
}

fn criterion_2() -> Outcome {
    let spec = ExperimentSpec::new(SystemConfig::bridge_qubit(0.0)).with_theta(FRAC_PI_4);
    let s = state_at(&spec, FRAC_PI_2);
    let c2 = conc(&spec, &s, "a2", "b2");
    let q = spec.config.layout().unwrap().require_site(SubsystemKind::Qubit).unwrap();
    let pe = s.population(q, 1).unwrap();
    outcome(c2 > 1.0 - 1e-6 && pe < 1e-8, format!("C_a2b2={c2:.12} P_e={pe:.3e}"))
}

fn criterion_3() -> Outcome {
    let ev = ExperimentSpec::new(SystemConfig::evanescent(2.0)).with_theta(FRAC_PI_4);
    let c_ev = conc(&ev, &state_at(&ev, FRAC_PI_2), "a2", "b2");
    let qb = ExperimentSpec::new(SystemConfig::bridge_qubit(2.0))
        .with_theta(FRAC_PI_4)
        .with_tau_grid(TauGrid::new(0.0, 2.0 * PI, 20001))
        .with_observables(vec![Observable::concurrence("a2", "b2")]);
    let (tau_max, c_max) = run_experiment(&qb).unwrap().concurrences[0].max();
    outcome(
        (c_ev - 1.0).abs() < 1e-6 && c_max < 0.99,
        format!("evanescent C_a2b2(π/2)={c_ev:.12}; qubit max C_a2b2={c_max:.6} at τ={tau_max:.4}"),
    )
}

fn criterion_4() -> Outcome {
    let widest = |cfg: SystemConfig| {
        let spec = ExperimentSpec::new(cfg)
            .with_theta(FRAC_PI_4)
            .with_tau_grid(TauGrid::new(0.0, PI, 501))
            .with_observables(vec![Observable::concurrence("a1", "b1")]);
        let trace = run_experiment(&spec).unwrap().concurrences.remove(0);
        let bp = pair(&spec.config, "a1", "b1");
        let all = detect_zero_intervals_refined(&trace, ZERO_EPSILON, |t| {
            Ok(pair_concurrence(&state_at(&spec, t), bp)?.0)
        })
        .unwrap();
        (sudden_death_intervals(&all), all)
    };
    let (q_sde, q_all) = widest(SystemConfig::bridge_qubit(0.0));
    let (e_sde, e_all) = widest(SystemConfig::evanescent(0.0));
    let fmt = |v: &[wgmsim::ZeroInterval]| {
        v.iter()
            .map(|z| format!("[{:.4},{:.4}]", z.tau_start, z.tau_end))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        !q_sde.is_empty() && e_sde.is_empty(),
        format!(
            "qubit zero intervals {} ({} wider than {SDE_MIN_WIDTH}); evanescent zero intervals {} ({} wider)",
            fmt(&q_all),
            q_sde.len(),
            fmt(&e_all),
            e_sde.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    let spec = ExperimentSpec::new(SystemConfig::bridge_qubit(0.0)).with_theta(0.0);
    let s = state_at(&spec, FRAC_PI_2);
    let w = target(&spec, TargetState::FourPartiteW);
    let f = fidelity(&s, &w).unwrap();
    let f_phase = local_phase_fidelity(&s, &w).unwrap();
    let modes = ["a1", "b1", "a2", "b2"];
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in i + 1..4 {
            worst = worst.max((conc(&spec, &s, modes[i], modes[j]) - 0.5).abs());
        }
    }
    outcome(
        f > 1.0 - 1e-6 && worst < 1e-6,
        format!("F(four_partite_w)={f:.6} (local-phase optimum {f_phase:.6}); max |C_pair - 0.5|={worst:.3e}"),
    )
}

fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (j, on, off, t) in [
        (0.0, ("a1", "b2"), ("b1", "a2"), TargetState::A1b2Bell),
        (4.0, ("a1", "b2"), ("b1", "a2"), TargetState::A1b2Bell),
        (2.0, ("b1", "a2"), ("a1", "b2"), TargetState::A2b1Bell),
    ] {
        let spec = ExperimentSpec::new(SystemConfig::evanescent(j)).with_theta(0.0);
        let s = state_at(&spec, FRAC_PI_4);
        let c_on = conc(&spec, &s, on.0, on.1);
        let c_off = conc(&spec, &s, off.0, off.1);
        let tgt = target(&spec, t);
        let f = fidelity(&s, &tgt).unwrap();
        let f_phase = local_phase_fidelity(&s, &tgt).unwrap();
        pass &= (c_on - 1.0).abs() < 1e-6 && c_off < 1e-6 && f > 1.0 - 1e-6;
        parts.push(format!(
            "J={j}: C_{}{}={c_on:.9} C_{}{}={c_off:.1e} F({})={f:.6} (local-phase optimum {f_phase:.9})",
            on.0,
            on.1,
            off.0,
            off.1,
            t.name()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let spec = ExperimentSpec::new(SystemConfig::bridge_qubit(0.0)).with_observables(vec![
        Observable::concurrence("a1", "b2"),
        Observable::concurrence("b1", "a2"),
    ]);
    let surfaces = sweep(&spec, &linspace(0.0, 4.0, 101), &linspace(0.0, FRAC_PI_2, 101), FRAC_PI_2).unwrap();
    let (j, th, c) = surfaces[0].max();
    let (_, _, c_other) = surfaces[1].max();
    outcome(
        (0.45..=0.55).contains(&c),
        format!("max C_a1b2={c:.6} at J={j:.2}, θ={th:.4}; max C_b1a2={c_other:.6}"),
    )
}

fn criterion_8() -> Outcome {
    let losses = LossConfig {
        kappa: 5e-2,
        gamma: 5e-3,
    };
    let taus = linspace(0.0, 2.0 * PI, 1001);
    let cmp = compare_couplings_lossy(
        &SystemConfig::bridge_qubit(0.0),
        &SystemConfig::evanescent(0.0),
        &losses,
        FRAC_PI_4,
        &taus,
    )
    .unwrap();
    let (tq, cq) = cmp.qubit_max;
    let (te, ce) = cmp.evanescent_max;
    let near = |t: f64| (t - FRAC_PI_2).abs() <= 0.3;
    outcome(
        0.0 < ce && ce < cq && cq < 1.0 && near(tq) && near(te),
        format!("qubit max {cq:.6} at τ={tq:.4}; evanescent max {ce:.6} at τ={te:.4}"),
    )
}

fn criterion_9() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let taus = linspace(0.0, 2.0 * PI, 1001);
    for cfg in [SystemConfig::bridge_qubit(0.0), SystemConfig::evanescent(0.0)] {
        let name = cfg.coupling.name();
        let losses = LossConfig::defaults_for(&cfg.coupling);
        let spec = ExperimentSpec::new(cfg.clone())
            .with_theta(FRAC_PI_4)
            .with_losses(Some(losses))
            .with_observables(vec![Observable::concurrence("a1", "b1"), Observable::concurrence("a2", "b2")]);
        let layout = cfg.layout().unwrap();
        let rho0 = spec.initial.state(&layout).unwrap().density_matrix();
        let gen = LindbladGenerator::for_config(&cfg, &losses).unwrap();
        let samples = integrate_on_grid(&gen, &rho0, &taus, spec.dtau).unwrap();
        let trace_err = samples
            .iter()
            .map(|s| (s.rho.trace().re - 1.0).abs().max(s.rho.trace().im.abs()))
            .fold(0.0, f64::max);
        let min_eig = min_eigenvalue_over(&samples).unwrap();
        let conv = run_experiment(&spec).unwrap().manifest.convergence.unwrap();

        let lossless = LindbladGenerator::for_config(&cfg, &LossConfig::lossless()).unwrap();
        let psi0 = spec.initial.state(&layout).unwrap();
        let dev = unitary_deviation(&lossless, &psi0, &taus, spec.dtau).unwrap();

        pass &= trace_err < 1e-8 && min_eig > -1e-6 && conv.max_concurrence_change < 1e-7 && dev < 1e-7;
        parts.push(format!(
            "{name}: |trρ-1|max={trace_err:.2e} λmin={min_eig:.2e} ΔC(dτ/2)={:.2e} unitary dev={dev:.2e}",
            conv.max_concurrence_change
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_10() -> Outcome {
    let taus = linspace(0.0, 2.0 * PI, 401);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for j in [0.0, 2.0] {
        let r = verify_fiber_equivalence(1.0, 1.0, j, &taus, &FiberTestState::default_set()).unwrap();
        worst = worst.max(r.max_deviation);
        parts.push(format!("J={j}: {:.2e} over {} states", r.max_deviation, r.states.len()));
    }
    outcome(worst < 1e-8, parts.join("; "))
}

/// Printed amplitudes that disagree with the propagator on the default grid.
const DOCUMENTED_DISCREPANCIES: &[&str] = &["G1", "G2", "G3", "G4", "W1", "W2", "W3", "W4"];
/// The subset that still disagrees when the grid is restricted to `J = 0`.
const DOCUMENTED_DISCREPANCIES_J0: &[&str] = &["G1", "G2", "G3", "G4", "W3", "W4"];

fn criterion_11() -> Outcome {
    let grid = default_audit_grid();
    let report = audit(&grid).unwrap();
    let j0: Vec<_> = grid.iter().copied().filter(|p| p.j == 0.0).collect();
    let report_j0 = audit(&j0).unwrap();
    let found = report.discrepant();
    let found_j0 = report_j0.discrepant();
    let detail = report
        .findings
        .iter()
        .map(|f| format!("{}={:.2e}", f.amplitude, f.max_abs_error))
        .collect::<Vec<_>>()
        .join(" ");
    outcome(
        report.points.len() == 20 && found == DOCUMENTED_DISCREPANCIES && found_j0 == DOCUMENTED_DISCREPANCIES_J0,
        format!("discrepant {found:?}, at J=0 {found_j0:?}; max errors {detail}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("evanescent transfer, J=0", criterion_1),
        ("bridge-qubit transfer, J=0", criterion_2),
        ("transfer with J=2", criterion_3),
        ("sudden death, qubit vs evanescent", criterion_4),
        ("four-partite state generation", criterion_5),
        ("J-tunable pair selection", criterion_6),
        ("inter-cavity ceiling, qubit sweep", criterion_7),
        ("lossy comparison", criterion_8),
        ("integrator quality", criterion_9),
        ("fiber-qubit equivalence", criterion_10),
        ("analytic amplitude audit", criterion_11),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag}  {name}: {}", k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
