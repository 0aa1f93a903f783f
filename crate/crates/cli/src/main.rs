//! `wgmsim`: run experiments, parameter sweeps and figure reproductions for
//! two coupled whispering-gallery-mode cavities.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical tolerance failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use wgmsim::experiment::{
    linspace, run_figure, spec_from_json, sweep, verify_fiber_equivalence, FiberTestState, FigureOutput,
    FigureOverrides, SweepSurface, FIGURES,
};
use wgmsim::open_systems::LossConfig;
use wgmsim::{run_experiment, Error, ExperimentSpec};

#[derive(Parser, Debug)]
#[command(name = "wgmsim", version, about = "Entanglement dynamics of two coupled WGM cavities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment from a JSON spec or a previous manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Switch on losses (default rates unless the spec or flags give them).
        #[arg(long)]
        losses: bool,
        #[command(flatten)]
        rates: Rates,
        #[arg(long)]
        out: PathBuf,
    },
    /// Concurrence on a J x theta grid at fixed tau.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tau: f64,
        /// Grid size as `<J points>x<theta points>`, e.g. `101x101`.
        #[arg(long, value_parser = parse_grid)]
        grid: (usize, usize),
        #[arg(long, default_value_t = 0.0)]
        j_min: f64,
        #[arg(long, default_value_t = 4.0)]
        j_max: f64,
        #[arg(long, default_value_t = 0.0)]
        theta_min: f64,
        #[arg(long, default_value_t = FRAC_PI_2)]
        theta_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reproduce one figure (or `all`) with the reference parameters.
    Figure {
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        j: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// Number of tau samples.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        tau_end: Option<f64>,
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
        #[command(flatten)]
        rates: Rates,
    },
    /// Numerical equivalence checks.
    Verify {
        #[arg(value_enum)]
        check: Check,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        #[arg(long, default_value_t = 0.0)]
        j: f64,
        #[arg(long, default_value_t = 2.0 * PI)]
        tau_end: f64,
        #[arg(long, default_value_t = 401)]
        steps: usize,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct Rates {
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Check {
    FiberEquivalence,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected <J>x<THETA>, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("J points: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("theta points: {e}"))?;
    if a == 0 || b == 0 {
        return Err("grid sizes must be positive".into());
    }
    Ok((a, b))
}

/// Raised when a run completes but a tolerance check fails.
#[derive(Debug)]
struct ToleranceFailure(String);

impl std::fmt::Display for ToleranceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ToleranceFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ToleranceFailure>().is_some() {
        return 3;
    }
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn read_spec(path: &Path) -> anyhow::Result<ExperimentSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = spec_from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    spec.validate()?;
    Ok(spec)
}

fn loss_override(rates: Rates, base: Option<LossConfig>, spec: &ExperimentSpec) -> LossConfig {
    let mut l = base.unwrap_or_else(|| LossConfig::defaults_for(&spec.config.coupling));
    if let Some(k) = rates.kappa {
        l.kappa = k;
    }
    if let Some(g) = rates.gamma {
        l.gamma = g;
    }
    l
}

fn simulate(config: &Path, losses: bool, rates: Rates, out: &Path) -> anyhow::Result<()> {
    let mut spec = read_spec(config)?;
    if losses || rates.kappa.is_some() || rates.gamma.is_some() {
        spec.losses = Some(loss_override(rates, spec.losses, &spec));
        spec.validate()?;
    }
    let run = run_experiment(&spec)?;
    for p in run.write_to(out, "")? {
        println!("{}", p.display());
    }
    if !run.manifest.converged() {
        let c = run.manifest.convergence.as_ref().map(|c| c.max_concurrence_change).unwrap_or(f64::NAN);
        return Err(ToleranceFailure(format!("halving dtau changed concurrence by {c:e}")).into());
    }
    Ok(())
}

fn write_surfaces(surfaces: &[SweepSurface], out: &Path, prefix: &str) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    for s in surfaces {
        let p = out.join(format!("{prefix}sweep_{}.csv", s.bipartition));
        s.write_csv(std::io::BufWriter::new(fs::File::create(&p)?))?;
        println!("{}", p.display());
    }
    Ok(())
}

fn sweep_manifest(spec: &ExperimentSpec, surfaces: &[SweepSurface]) -> anyhow::Result<serde_json::Value> {
    let maxima: Vec<_> = surfaces
        .iter()
        .map(|s| {
            let (j, theta, c) = s.max();
            json!({"bipartition": s.bipartition, "J": j, "theta": theta, "concurrence": c})
        })
        .collect();
    let first = surfaces.first().context("no surfaces")?;
    Ok(json!({
        "tool": "wgmsim",
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": spec.content_hash()?,
        "spec": spec,
        "tau": first.tau,
        "j_values": first.j_values,
        "theta_values": first.theta_values,
        "maxima": maxima,
        "outputs": surfaces.iter().map(|s| format!("sweep_{}.csv", s.bipartition)).collect::<Vec<_>>(),
    }))
}

fn run_sweep(
    config: &Path,
    tau: f64,
    grid: (usize, usize),
    j_range: (f64, f64),
    theta_range: (f64, f64),
    out: &Path,
) -> anyhow::Result<()> {
    let spec = read_spec(config)?;
    let j = linspace(j_range.0, j_range.1, grid.0);
    let theta = linspace(theta_range.0, theta_range.1, grid.1);
    let surfaces = sweep(&spec, &j, &theta, tau)?;
    write_surfaces(&surfaces, out, "")?;
    let p = out.join("manifest.json");
    fs::write(&p, serde_json::to_string_pretty(&sweep_manifest(&spec, &surfaces)?)? + "\n")?;
    println!("{}", p.display());
    Ok(())
}

fn figure(name: &str, out: &Path, ov: &FigureOverrides) -> anyhow::Result<()> {
    let names: Vec<&str> = if name == "all" { FIGURES.to_vec() } else { vec![name] };
    let mut unconverged = Vec::new();
    for n in names {
        let dir = out.join(n);
        match run_figure(n, ov)? {
            FigureOutput::Traces(runs) => {
                for (label, run) in &runs {
                    for p in run.write_to(&dir, &format!("{label}_"))? {
                        println!("{}", p.display());
                    }
                    if !run.manifest.converged() {
                        unconverged.push(format!("{n}/{label}"));
                    }
                }
            }
            FigureOutput::Sweep { spec, surfaces } => {
                write_surfaces(&surfaces, &dir, "")?;
                let p = dir.join("manifest.json");
                fs::write(&p, serde_json::to_string_pretty(&sweep_manifest(&spec, &surfaces)?)? + "\n")?;
                println!("{}", p.display());
            }
        }
    }
    if !unconverged.is_empty() {
        bail!(ToleranceFailure(format!("dtau convergence check failed for {}", unconverged.join(", "))));
    }
    Ok(())
}

fn verify(nu: f64, g: f64, j: f64, tau_end: f64, steps: usize, out: Option<&Path>) -> anyhow::Result<()> {
    if steps < 2 || !(tau_end > 0.0) {
        return Err(Error::InvalidParameter("need steps >= 2 and tau_end > 0".into()).into());
    }
    let taus = linspace(0.0, tau_end, steps);
    let report = verify_fiber_equivalence(nu, g, j, &taus, &FiberTestState::default_set())?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    print!("{text}");
    if let Some(p) = out {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(p, &text)?;
    }
    if !report.passed {
        bail!(ToleranceFailure(format!(
            "fiber/qubit concurrence deviation {:e} exceeds {:e}",
            report.max_deviation, report.tolerance
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            losses,
            rates,
            out,
        } => simulate(&config, losses, rates, &out),
        Command::Sweep {
            config,
            tau,
            grid,
            j_min,
            j_max,
            theta_min,
            theta_max,
            out,
        } => run_sweep(&config, tau, grid, (j_min, j_max), (theta_min, theta_max), &out),
        Command::Figure {
            name,
            out,
            j,
            theta,
            steps,
            tau_end,
            grid,
            rates,
        } => {
            let losses = (rates.kappa.is_some() || rates.gamma.is_some()).then(|| LossConfig {
                kappa: rates.kappa.unwrap_or(LossConfig::DEFAULT_KAPPA),
                gamma: rates.gamma.unwrap_or(LossConfig::DEFAULT_GAMMA),
            });
            let ov = FigureOverrides {
                j,
                theta,
                steps,
                tau_end,
                grid,
                losses,
            };
            figure(&name, &out, &ov)
        }
        Command::Verify {
            check: Check::FiberEquivalence,
            nu,
            g,
            j,
            tau_end,
            steps,
            out,
        } => verify(nu, g, j, tau_end, steps, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
