//! Command dispatch: builds the problem from a config and collects reports,
//! curves and traces into a bundle.

use dobkit_core::model::{approx_inverse_loop, inner_loop, outer_loop, DobFilter, LoopSet};
use dobkit_core::sim::{
    nyquist_curve, rms_from, simulate_closed_loop, step_metrics, SimInputs, SimSettings, SimTrace, Signal,
    StepMetrics, Structure,
};
use dobkit_core::solver::{
    check, refined_delay_bound, select_theorem, sweep_admissible_bandwidth, Backend, ConstraintReport, Problem,
    Theorem,
};
use dobkit_core::tf::{freq_response, log_grid, ComplexResponse};
use dobkit_core::LogConvention;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::CaseConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Constraints,
    Sweep,
    Simulate,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Constraints => "constraints",
            Command::Sweep => "sweep",
            Command::Simulate => "simulate",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Backend whose sweep interval is reported as the admissible interval.
    pub backend: Backend,
    pub conv: LogConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub metrics: Option<StepMetrics>,
    /// RMS of `y - r` over the final 20% of the horizon.
    pub rms_error_tail: f64,
    pub diverged_at: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
}

#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub name: String,
    pub command: Option<Command>,
    pub theorem: Option<Theorem>,
    /// Single-bandwidth report (`analyze`).
    pub constraint: Option<ConstraintReport>,
    /// One report per listed bandwidth (`constraints`).
    pub points: Vec<ConstraintReport>,
    /// Sweep reports keyed by backend.
    pub sweeps: BTreeMap<String, ConstraintReport>,
    pub admissible_interval: Option<[f64; 2]>,
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub curves: BTreeMap<String, ComplexResponse>,
    pub traces: BTreeMap<String, SimTrace>,
    pub config: Option<CaseConfig>,
}

impl ReportBundle {
    pub fn is_empty(&self) -> bool {
        self.constraint.is_none()
            && self.points.is_empty()
            && self.sweeps.is_empty()
            && self.values.is_empty()
            && self.curves.is_empty()
            && self.traces.is_empty()
    }

    pub fn trace_summaries(&self) -> BTreeMap<String, TraceSummary> {
        self.traces
            .iter()
            .map(|(k, t)| (k.clone(), summarize(t)))
            .collect()
    }
}

fn summarize(t: &SimTrace) -> TraceSummary {
    let r = &t.channels["r"];
    let err: Vec<f64> = t.y.iter().zip(r).map(|(y, r)| y - r).collect();
    let t_end = t.t.last().copied().unwrap_or(0.0);
    TraceSummary {
        metrics: step_metrics(t).ok(),
        rms_error_tail: rms_from(&t.t, &err, 0.8 * t_end),
        diverged_at: t.diverged_at,
        samples: t.len(),
    }
}

fn numerical(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Numerical {
        context: context.to_string(),
        message: e.to_string(),
    }
}

/// Frequency grid for emitted curves.
pub fn curve_grid() -> Vec<f64> {
    log_grid(1e-2, 1e4, 601)
}

pub fn run_case(name: &str, cfg: &CaseConfig, command: Command, opts: &RunOptions) -> Result<ReportBundle, CliError> {
    let mut b = ReportBundle {
        name: name.to_string(),
        command: Some(command),
        config: Some(cfg.clone()),
        ..Default::default()
    };
    let plant = cfg.plant_model()?;
    let theorem = select_theorem(&plant).map_err(|e| numerical("theorem selection", e))?;
    b.theorem = Some(theorem);

    let analysis = matches!(command, Command::Analyze | Command::Constraints | Command::Sweep | Command::All);
    if analysis && !(command == Command::All && cfg.spec.is_none()) {
        let problem = cfg.problem(opts.conv)?;
        if matches!(command, Command::Analyze | Command::All) {
            analyze(&problem, theorem, cfg.point_g()?, &mut b)?;
        }
        if matches!(command, Command::Constraints | Command::All) {
            for g in cfg.g_points() {
                b.points.push(check(&problem, theorem, g).map_err(|e| numerical(&format!("check at g = {g}"), e))?);
            }
        }
        if matches!(command, Command::Sweep | Command::All) {
            sweep(cfg, &problem, theorem, opts, &mut b)?;
        }
    }
    if matches!(command, Command::Simulate | Command::All) && cfg.sim.is_some() {
        simulate(cfg, &mut b)?;
    } else if command == Command::Simulate {
        return Err(CliError::Validation("a sim section is required for simulate".into()));
    }
    Ok(b)
}

fn nominal_loop(problem: &Problem, theorem: Theorem, g: f64) -> Result<LoopSet, CliError> {
    let p = &problem.plant;
    let q = DobFilter::make_lpf(problem.order, g).map_err(|e| numerical("DOB filter", e))?;
    let d = p.delta.nominal_sample();
    let l = match theorem {
        Theorem::MinimumPhase | Theorem::TimeDelay => inner_loop(p, &q, d),
        Theorem::RhpZero => approx_inverse_loop(p, &q, d),
        Theorem::RhpPole => {
            let c = problem
                .controllers
                .as_ref()
                .ok_or_else(|| CliError::Validation("an unstable plant needs controllers.outer_num/outer_den".into()))?;
            outer_loop(p, &q, c, d)
        }
    };
    l.map_err(|e| numerical("loop construction", e))
}

fn analyze(problem: &Problem, theorem: Theorem, g: f64, b: &mut ReportBundle) -> Result<(), CliError> {
    let rep = check(problem, theorem, g).map_err(|e| numerical(&format!("check at g = {g}"), e))?;
    b.constraint = Some(rep);
    let ls = nominal_loop(problem, theorem, g)?;
    let grid = curve_grid();
    for (name, tf) in [("L", &ls.l), ("S", &ls.s), ("T", &ls.t)] {
        let c = freq_response(tf, &grid).map_err(|e| numerical("frequency response", e))?;
        b.curves.insert(format!("{name}_g{g}"), c);
    }
    let ny = nyquist_curve(&ls.l, grid[0], grid[grid.len() - 1], 200).map_err(|e| numerical("Nyquist curve", e))?;
    b.curves.insert(format!("nyquist_g{g}"), ny);
    Ok(())
}

fn sweep(
    cfg: &CaseConfig,
    problem: &Problem,
    theorem: Theorem,
    opts: &RunOptions,
    b: &mut ReportBundle,
) -> Result<(), CliError> {
    let (lo, hi, n) = cfg.sweep_grid_params();
    let grid = log_grid(lo, hi, n);
    for backend in [Backend::Exact, Backend::Literal] {
        let rep = sweep_admissible_bandwidth(problem, backend, &grid)
            .map_err(|e| numerical(&format!("{backend:?} sweep"), e))?;
        if backend == opts.backend {
            b.admissible_interval = rep.sweep_bandwidth_interval;
        }
        let key = match backend {
            Backend::Exact => "exact",
            Backend::Literal => "literal",
        };
        b.sweeps.insert(key.into(), rep);
    }
    let curve_g: Vec<f64> = match (cfg.g_points(), b.sweeps["exact"].sweep_bandwidth_interval) {
        (pts, _) if !pts.is_empty() => pts,
        (_, Some([a, z])) => vec![a, z],
        _ => Vec::new(),
    };
    let fgrid = curve_grid();
    for g in curve_g {
        let ls = nominal_loop(problem, theorem, g)?;
        let c = freq_response(&ls.s, &fgrid).map_err(|e| numerical("frequency response", e))?;
        b.curves.insert(format!("S_sweep_g{g}"), c);
    }
    if theorem == Theorem::TimeDelay {
        let tau = problem.plant.tau;
        let cap = b.sweeps["exact"].bandwidth.unwrap_or(1.0 / tau);
        let budget = problem.spec.sup_log(LogConvention::Nat);
        match refined_delay_bound(cap.min(3.0 / tau), tau, budget) {
            Ok(r) => {
                b.values.insert("refined_cap".into(), r.refined_cap);
                b.values.insert("refined_w1".into(), r.w1);
                b.values.insert("refined_w2".into(), r.w2);
                b.values.insert("refined_level".into(), r.level);
                b.values.insert("refined_closed_form_max_error".into(), r.closed_form_max_error);
            }
            Err(e) => b.notes.push(format!("refined delay bound unavailable: {e}")),
        }
    }
    Ok(())
}

fn simulate(cfg: &CaseConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let sim = cfg.sim.as_ref().expect("checked by caller");
    let plant = cfg.plant_model()?;
    let controllers = cfg
        .controllers()?
        .ok_or_else(|| CliError::Validation("simulation needs a controllers section".into()))?;
    let g = cfg.point_g()?;
    let q = DobFilter::make_lpf(cfg.order()?, g).map_err(|e| numerical("DOB filter", e))?;
    let settings = SimSettings {
        dt: sim.dt,
        horizon: sim.horizon,
        derivative_filter_tau: sim.derivative_filter_tau.unwrap_or(SimSettings::default().derivative_filter_tau),
    };
    let base = SimInputs {
        reference: Signal::Step {
            amplitude: 1.0,
            start: 0.0,
        },
        disturbance: Signal::Zero,
        noise_amplitude: sim.noise_amplitude.unwrap_or(0.0),
        seed: sim.seed.unwrap_or(0),
    };
    let start = 0.5 * sim.horizon;
    let profiles: Vec<(&str, Signal)> = match sim.disturbance_signal(g) {
        Some(s) => vec![("response", s)],
        None => vec![
            ("step_disturbance", Signal::Step { amplitude: 1.0, start }),
            (
                "sine_disturbance",
                Signal::Sine {
                    amplitude: 1.0,
                    frequency: 5.0 * g,
                    start,
                },
            ),
        ],
    };
    let delta = plant.delta.nominal_sample();
    let structure = sim.structure();
    let run = |structure: Structure, dob: Option<&DobFilter>, dis: Signal| {
        let inputs = SimInputs { disturbance: dis, ..base };
        simulate_closed_loop(structure, &plant, delta, dob, &controllers, &inputs, &settings)
            .map_err(|e| numerical("simulation", e))
    };
    for (name, dis) in &profiles {
        b.traces.insert(name.to_string(), run(structure, Some(&q), *dis)?);
        b.traces.insert(format!("{name}_no_dob"), run(structure, None, *dis)?);
    }
    if structure == Structure::TwoDof && controllers.prefilter.is_some() {
        b.traces
            .insert("reference_no_prefilter".into(), run(Structure::OneDof, Some(&q), Signal::Zero)?);
        b.traces.insert("reference".into(), run(structure, Some(&q), Signal::Zero)?);
    }
    for (k, t) in &b.traces {
        if let Some(at) = t.diverged_at {
            b.notes.push(format!("trace {k} diverged at t = {at}"));
        }
    }
    Ok(())
}
