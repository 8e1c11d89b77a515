mod common;

use dobkit_core::model::{inner_loop, outer_loop, ControllerSet, DobFilter};
use dobkit_core::sim::{
    nyquist_curve, proper_controller, simulate_closed_loop, sinusoid_amplitude, step_metrics, SimInputs,
    SimSettings, SimTrace, Signal, Structure,
};
use dobkit_core::solver::{perf_limits, PerformanceSpec, Problem};
use dobkit_core::tf::{log_grid, QuasiRational};
use dobkit_core::LogConvention;
use num_complex::Complex64;

use common::{case1, case2, case3, case4};

const TAU_F: f64 = 1e-3;

struct SimCase {
    name: &'static str,
    problem: Problem,
    g: f64,
    dt: f64,
    horizon: f64,
    structure: Structure,
}

fn cases() -> Vec<SimCase> {
    vec![
        SimCase { name: "min-phase", problem: case1(2), g: 65.0, dt: 1e-4, horizon: 4.0, structure: Structure::OneDof },
        SimCase { name: "delay", problem: case2(1, false), g: 70.0, dt: 1e-4, horizon: 5.0, structure: Structure::OneDof },
        SimCase { name: "rhp-zero", problem: case3(), g: 15.0, dt: 2e-5, horizon: 10.0, structure: Structure::OneDof },
        SimCase { name: "rhp-pole", problem: case4(), g: 50.0, dt: 2e-5, horizon: 10.0, structure: Structure::TwoDof },
    ]
}

fn step() -> SimInputs {
    SimInputs {
        reference: Signal::Step { amplitude: 1.0, start: 0.0 },
        ..Default::default()
    }
}

fn run(c: &SimCase, structure: Structure, inputs: &SimInputs, dt: f64, horizon: f64) -> SimTrace {
    let p = &c.problem;
    let q = DobFilter::make_lpf(p.order, c.g).unwrap();
    let settings = SimSettings { dt, horizon, derivative_filter_tau: TAU_F };
    let ctl = p.controllers.as_ref().unwrap();
    simulate_closed_loop(structure, &p.plant, p.plant.delta.nominal_sample(), Some(&q), ctl, inputs, &settings).unwrap()
}

/// Outer loop with the controller filtered exactly as the simulator does it.
fn filtered_outer(c: &SimCase) -> QuasiRational {
    let p = &c.problem;
    let q = DobFilter::make_lpf(p.order, c.g).unwrap();
    let ctl = p.controllers.as_ref().unwrap();
    let filtered = ControllerSet::new(proper_controller(&ctl.outer, TAU_F).unwrap(), None).unwrap();
    outer_loop(&p.plant, &q, &filtered, p.plant.delta.nominal_sample()).unwrap().l
}

#[test]
fn sinusoid_gain_matches_complementary_sensitivity() {
    for c in cases() {
        let t_loop = filtered_outer(&c).cosensitivity();
        let horizon = 12.0;
        for w0 in [0.5, 3.0, 12.0] {
            let inputs = SimInputs {
                reference: Signal::Sine { amplitude: 1.0, frequency: w0, start: 0.0 },
                ..Default::default()
            };
            let tr = run(&c, Structure::OneDof, &inputs, c.dt, horizon);
            assert!(tr.diverged_at.is_none());
            let sim = sinusoid_amplitude(&tr.t, &tr.y, w0, horizon / 2.0);
            let want = t_loop.eval(Complex64::new(0.0, w0)).unwrap().norm();
            println!("{} w0 = {w0}: simulated {sim}, |T| {want}", c.name);
            assert!((sim - want).abs() <= 0.01 * want, "{} at {w0}: {sim} vs {want}", c.name);
        }
    }
}

#[test]
fn halving_the_step_barely_moves_metrics() {
    for c in cases() {
        let a = step_metrics(&run(&c, c.structure, &step(), c.dt, c.horizon)).unwrap();
        let b = step_metrics(&run(&c, c.structure, &step(), c.dt / 2.0, c.horizon)).unwrap();
        println!("{}: {a:?} / {b:?}", c.name);
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1e-12);
        assert!(rel(a.overshoot, b.overshoot) < 5e-3, "{}", c.name);
        assert!((a.undershoot - b.undershoot).abs() < 5e-3 * a.overshoot, "{}", c.name);
        assert!((a.steady_state_error - b.steady_state_error).abs() < 5e-3, "{}", c.name);
        if let (Some(x), Some(y)) = (a.settling_time_2pct, b.settling_time_2pct) {
            assert!(rel(x, y) < 5e-3, "{}: {x} vs {y}", c.name);
        } else {
            assert_eq!(a.settled, b.settled, "{}", c.name);
        }
    }
}

#[test]
fn disturbance_estimate_converges_within_five_time_constants() {
    let c = &cases()[0];
    let t0 = 1.0;
    let inputs = SimInputs {
        disturbance: Signal::Step { amplitude: 1.0, start: t0 },
        ..Default::default()
    };
    let tr = run(c, Structure::OneDof, &inputs, c.dt, 2.0);
    let i = tr.t.iter().position(|t| *t >= t0 + 5.0 / c.g).unwrap();
    // A second-order binomial filter leaves (1 + 5) e^{-5} ≈ 4% after 5/g.
    assert!((tr.d_hat[i] - 1.0).abs() < 0.05, "{}", tr.d_hat[i]);
    assert!((tr.d_hat[tr.len() - 1] - 1.0).abs() < 1e-3);
}

#[test]
fn rhp_zero_plant_undershoots() {
    let c = &cases()[2];
    let m = step_metrics(&run(c, Structure::OneDof, &step(), c.dt, c.horizon)).unwrap();
    assert!(m.undershoot < 0.0, "{m:?}");
    assert!(m.settled, "{m:?}");
}

#[test]
fn overshoot_agrees_with_unstable_pole_bandwidth_limit() {
    let c = &cases()[3];
    let m = step_metrics(&run(c, Structure::OneDof, &step(), c.dt, c.horizon)).unwrap();
    let spec = PerformanceSpec { y_undershoot: -1.0, y_overshoot: m.overshoot, w_b: 0.0 };
    let lower = perf_limits(&spec, None, Some(5.0), LogConvention::Nat).unwrap().w_b_lower.unwrap();
    let t_loop = filtered_outer(c).cosensitivity();
    let grid = log_grid(1e-2, 1e4, 4001);
    let mag = |w: f64| t_loop.eval(Complex64::new(0.0, w)).unwrap().norm();
    let w3db = grid.iter().copied().rev().find(|w| mag(*w) >= std::f64::consts::FRAC_1_SQRT_2).unwrap();
    println!("overshoot {}, bound {lower}, -3 dB bandwidth {w3db}", m.overshoot);
    assert!(lower <= w3db);
}

#[test]
fn prefiltered_step_response_is_bounded_and_settles_to_one() {
    let c = &cases()[3];
    let tr = run(c, Structure::TwoDof, &step(), c.dt, c.horizon);
    assert!(tr.diverged_at.is_none());
    assert!(tr.y.iter().all(|y| y.abs() < 10.0));
    assert!((tr.y[tr.len() - 1] - 1.0).abs() < 0.02);
}

#[test]
fn positive_uncertainty_keeps_nyquist_outside_unit_circle() {
    let p = case1(1).plant;
    let q = DobFilter::make_lpf(1, 65.0).unwrap();
    for delta in [0.25, 0.5, 1.0] {
        let l = inner_loop(&p, &q, delta).unwrap().l;
        let ny = nyquist_curve(&l, 1e-2, 1e5, 400).unwrap();
        let min = ny.values.iter().map(|v| (v + 1.0).norm()).fold(f64::INFINITY, f64::min);
        assert!(min >= 1.0 - 1e-6, "delta = {delta}: {min}");
    }
}

#[test]
fn delayed_loop_enters_unit_circle() {
    let p = case2(1, false).plant;
    let q = DobFilter::make_lpf(1, 200.0).unwrap();
    let l = inner_loop(&p, &q, 0.0).unwrap().l;
    let ny = nyquist_curve(&l, 1e-2, 1e5, 400).unwrap();
    let min = ny.values.iter().map(|v| (v + 1.0).norm()).fold(f64::INFINITY, f64::min);
    assert!(min < 1.0);
}
