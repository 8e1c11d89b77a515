//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! numbers underneath. Exits non-zero when any criterion fails.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use dobkit::{bundled_case, emit, emit::digests, run_case, Command, Format, RunOptions};
use dobkit_core::integral::{bode_integral, poisson_cosensitivity, poisson_sensitivity};
use dobkit_core::model::{
    approx_inverse_loop, inner_loop, outer_loop, DeltaInterval, DobFilter, PlantModel, UncertaintyWeight,
};
use dobkit_core::sim::{rms_from, simulate_closed_loop, step_metrics, SimInputs, SimSettings, Signal, Structure};
use dobkit_core::solver::{
    crossing_frequencies, delayed_sensitivity_sq, exact_metrics, psi_minimum_phase, refined_delay_bound,
    sweep_admissible_bandwidth, Backend, DesignSpec, Problem, SupKind, Theorem,
};
use dobkit_core::stability::closed_loop_stability;
use dobkit_core::tf::{blaschke, log_grid, Polynomial, QuasiRational, RationalTF};
use dobkit_core::LogConvention;

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            pass: true,
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, msg: String) {
        self.pass &= ok;
        self.details.push(format!("{} {msg}", if ok { "ok  " } else { "FAIL" }));
    }

    fn info(&mut self, msg: String) {
        self.details.push(format!("info {msg}"));
    }
}

fn problem(case: usize) -> Problem {
    let (_, cfg) = bundled_case(case).unwrap();
    cfg.problem(LogConvention::Nat).unwrap()
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target
}

fn sweep_grid() -> Vec<f64> {
    log_grid(1.0, 1000.0, 60)
}

fn random_stable_poly(rng: &mut ChaCha8Rng, degree: usize) -> Polynomial {
    let roots: Vec<Complex64> = (0..degree)
        .map(|_| Complex64::new(-10f64.powf(rng.random_range(-0.5..1.5)), 0.0))
        .collect();
    Polynomial::from_roots(&roots)
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t0 = Instant::now();
    let (mut worst_sum, mut worst_cf) = (0.0f64, 0.0f64);
    let mut first_order_samples = 0;
    for _ in 0..1000 {
        let nd = rng.random_range(1..=3usize);
        let nn = rng.random_range(0..nd);
        let plant = RationalTF::new(
            random_stable_poly(&mut rng, nn).scale(rng.random_range(0.5..20.0)),
            random_stable_poly(&mut rng, nd),
        )
        .unwrap();
        let (w_t, e_min, e_max) = (
            10f64.powf(rng.random_range(0.0..2.7)),
            rng.random_range(0.05..0.9),
            rng.random_range(1.1..6.0),
        );
        let w = UncertaintyWeight::new(w_t, e_min, e_max).unwrap();
        let delta_iv = DeltaInterval::new(-1.0 / e_max + 1e-6, 1.0, &w).unwrap();
        let delta = rng.random_range(delta_iv.lo..=delta_iv.hi);
        let p = PlantModel::new(plant, w, delta_iv, 0.0, None).unwrap();
        let order = rng.random_range(1..=3u32);
        let g = 10f64.powf(rng.random_range(0.0..2.7));
        let q = DobFilter::make_lpf(order, g).unwrap();
        let s = Complex64::new(0.0, 10f64.powf(rng.random_range(-2.0..4.0)));
        let ls = inner_loop(&p, &q, delta).unwrap();
        let (sv, tv) = (ls.s.eval(s).unwrap(), ls.t.eval(s).unwrap());
        worst_sum = worst_sum.max((sv + tv - 1.0).norm());
        if order == 1 {
            // L = (g/s)(1 + ΔW) with W = (s/w_T + e_min)/(s/(w_T e_max) + 1).
            first_order_samples += 1;
            let wv = (s / w_t + e_min) / (s / (w_t * e_max) + 1.0);
            let cf = g / s * (1.0 + delta * wv);
            let l = ls.l.eval(s).unwrap();
            worst_cf = worst_cf.max((l - cf).norm() / cf.norm());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    o.check(worst_sum <= 1e-9, format!("max |S+T-1| = {worst_sum:.3e} over 1000 samples (≤ 1e-9)"));
    o.check(
        worst_cf <= 1e-10,
        format!("first-order closed form vs inner loop: max rel err {worst_cf:.3e} over {first_order_samples} samples (≤ 1e-10)"),
    );
    o.check(secs < 5.0, format!("runtime {secs:.3} s (< 5 s)"));
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_margin = f64::INFINITY;
    let mut n = 0;
    while n < 20 {
        let nd = rng.random_range(2..=4usize);
        let nn = rng.random_range(0..=nd - 2);
        let l = RationalTF::new(
            random_stable_poly(&mut rng, nn).scale(10f64.powf(rng.random_range(-0.5..2.0))),
            random_stable_poly(&mut rng, nd),
        )
        .unwrap();
        let q = QuasiRational::from_rational(&l);
        if !closed_loop_stability(&q).unwrap().is_stable() {
            continue;
        }
        n += 1;
        let b = bode_integral(&q, 1e5, None).unwrap();
        let slack = b.result.truncation_bound + 10.0 * b.result.abs_error_estimate;
        worst_margin = worst_margin.min(slack - b.result.value.abs());
        if b.result.value.abs() > slack {
            o.check(false, format!("loop {l:?}: |∫ln|S|| = {:.3e} > {slack:.3e}", b.result.value.abs()));
        }
    }
    o.check(worst_margin >= 0.0, format!("20 stable relative-degree ≥ 2 loops: min slack margin {worst_margin:.3e}"));

    let b = bode_integral(&QuasiRational::from_rational(&RationalTF::integrator(10.0)), 1e6, None).unwrap();
    o.check(
        (b.result.value + 15.708).abs() <= 0.02,
        format!("L = 10/s: ∫ln|S| dw = {:.5} (−15.708 ± 0.02)", b.result.value),
    );

    // Non-minimum-phase case: zero of the approximate-inverse loop at s = 50.
    let p3 = problem(3);
    let q = DobFilter::make_lpf(p3.order, 15.0).unwrap();
    let l3 = approx_inverse_loop(&p3.plant, &q, 0.0).unwrap().l;
    let ps = poisson_sensitivity(&l3, Complex64::new(50.0, 0.0), &RationalTF::one()).unwrap();
    let e3 = (ps.result.value - ps.rhs).abs();
    o.check(e3 <= 1e-3, format!("S Poisson at z = 50: lhs {:.6} rhs {:.6} |Δ| {e3:.2e} (≤ 1e-3)", ps.result.value, ps.rhs));

    // Unstable case: outer loop pole at s = 5.
    let p4 = problem(4);
    let q = DobFilter::make_lpf(p4.order, 50.0).unwrap();
    let l4 = outer_loop(&p4.plant, &q, p4.controllers.as_ref().unwrap(), 0.0).unwrap().l;
    let pt = poisson_cosensitivity(&l4, Complex64::new(5.0, 0.0), &RationalTF::one()).unwrap();
    let e4 = (pt.result.value - pt.rhs).abs();
    o.check(e4 <= 1e-3, format!("T Poisson at p = 5: lhs {:.6} rhs {:.6} |Δ| {e4:.2e} (≤ 1e-3)", pt.result.value, pt.rhs));
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = log_grid(1e-3, 1e4, 1000);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut pts = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let re = 10f64.powf(rng.random_range(-2.0..2.0));
            if rng.random_bool(0.5) {
                pts.push(Complex64::new(re, 0.0));
            } else {
                let im = 10f64.powf(rng.random_range(-2.0..2.0));
                pts.push(Complex64::new(re, im));
                pts.push(Complex64::new(re, -im));
            }
        }
        let b = blaschke(&pts).unwrap();
        for &w in &grid {
            worst = worst.max((b.eval(Complex64::new(0.0, w)).unwrap().norm() - 1.0).abs());
        }
    }
    o.check(worst <= 1e-12, format!("max ||B(jw)| − 1| = {worst:.3e} over 20 sets × 1000 frequencies (≤ 1e-12)"));
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let tau = 10f64.powf(rng.random_range(-3.0..-0.5));
        let g = rng.random_range(0.05..2.99) / tau;
        for w in log_grid(0.01 / tau, 100.0 / tau, 500) {
            let s = Complex64::new(0.0, w);
            let l = g * (-s * tau).exp() / s;
            let numeric = (1.0 / (1.0 + l)).norm_sqr();
            let cf = delayed_sensitivity_sq(g, tau, w);
            worst = worst.max((cf - numeric).abs() / numeric.max(1.0));
        }
    }
    o.check(worst <= 1e-10, format!("closed-form |S|² vs numeric: max err {worst:.3e} on 20 × 500 points (≤ 1e-10)"));
    let tau = 0.01;
    let (w1, w2) = crossing_frequencies(3.0 / tau, tau).unwrap();
    let target = 3f64.sqrt() / tau;
    let e = (w1 - target).abs().max((w2 - target).abs()) / target;
    o.check(e <= 1e-9, format!("gτ = 3: w1 = {w1:.9}, w2 = {w2:.9}, √3/τ = {target:.9} (rel err {e:.1e})"));
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let p = problem(1);
    let r = sweep_admissible_bandwidth(&p, Backend::Exact, &sweep_grid()).unwrap();
    match r.sweep_bandwidth_interval {
        Some([lo, hi]) => {
            o.check(within(hi, 65.0, 0.2), format!("exact upper edge {hi:.2} rad/s (65 ± 20%); interval [{lo:.2}, {hi:.2}]"));
            o.check(
                within(r.achieved_w_beta, 15.0, 0.2),
                format!("achieved w_β at the edge {:.2} rad/s (15 ± 20%)", r.achieved_w_beta),
            );
        }
        None => o.check(false, "exact sweep found no admissible bandwidth".into()),
    }
    for conv in [LogConvention::Nat, LogConvention::Log10] {
        let mut pc = p.clone();
        pc.conv = conv;
        let lit = sweep_admissible_bandwidth(&pc, Backend::Literal, &sweep_grid()).unwrap();
        let wb = lit.values["w_beta_bound_at_w_gamma"];
        let cap = lit.values["bandwidth_cap"];
        let psi = lit.psi_values["psi"];
        if conv == LogConvention::Nat {
            o.check(
                wb.is_finite() && cap.is_finite() && (0.5..=2.0).contains(&(wb / 46.0)) && (0.5..=2.0).contains(&(cap / 100.0)),
                format!("literal bounds w_β ≤ {wb:.2} (vs 46), bandwidth cap {cap:.2} (vs 100), within a factor 2"),
            );
        }
        o.info(format!("regression [{conv:?}]: ψ = {psi:.6}, w_β bound = {wb:.4}, bandwidth cap = {cap:.4}"));
    }
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let p = problem(2);
    let r = sweep_admissible_bandwidth(&p, Backend::Exact, &sweep_grid()).unwrap();
    let Some([_, hi]) = r.sweep_bandwidth_interval else {
        o.check(false, "exact sweep found no admissible bandwidth".into());
        return o;
    };
    o.check(within(hi, 70.0, 0.2), format!("exact cap {hi:.2} rad/s (70 ± 20%)"));
    let tau = p.plant.tau;
    let rb = refined_delay_bound(hi.min(3.0 / tau), tau, p.spec.sup_log(LogConvention::Nat)).unwrap();
    o.check(
        within(rb.refined_cap, 95.0, 0.1) && rb.refined_cap > hi,
        format!("refined cap {:.2} rad/s (95 ± 10%, > {hi:.2})", rb.refined_cap),
    );
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let p = problem(3);
    let r = sweep_admissible_bandwidth(&p, Backend::Exact, &sweep_grid()).unwrap();
    let Some([lo, hi]) = r.sweep_bandwidth_interval else {
        o.check(false, "exact sweep found no admissible bandwidth".into());
        return o;
    };
    o.check(lo < 24.0 && hi > 12.0, format!("exact interval [{lo:.2}, {hi:.2}] overlaps [12, 24]"));
    let (elo, ehi) = ((lo - 12.0).abs() / 12.0, (hi - 24.0).abs() / 24.0);
    o.check(elo <= 0.25 && ehi <= 0.25, format!("endpoint errors {:.1}% and {:.1}% (≤ 25%)", 100.0 * elo, 100.0 * ehi));
    o.check(6.0 <= lo && hi <= 55.0, "[6, 55] brackets the exact interval".to_string());
    let lit = sweep_admissible_bandwidth(&p, Backend::Literal, &sweep_grid()).unwrap();
    o.info(format!("literal interval (all four inequalities): {:?}", lit.sweep_bandwidth_interval));
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let p = problem(4);
    let c = p.controllers.clone().unwrap();
    let l = QuasiRational::from_rational(&c.outer.mul(&p.plant.nominal));
    let st = closed_loop_stability(&l).unwrap();
    o.check(st.is_stable(), format!("nominal loop with C_s = 20 + 12s: {st:?}"));

    let peaks: Vec<f64> = [20.0, 50.0, 100.0, 200.0]
        .iter()
        .map(|&g| exact_metrics(&p, Theorem::RhpPole, g).unwrap().peak_s)
        .collect();
    let mono = peaks.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    o.check(mono, format!("peak |S_o| at g = 20/50/100/200: {peaks:.4?} (non-increasing)"));

    let q = DobFilter::make_lpf(p.order, 50.0).unwrap();
    let s = SimSettings {
        dt: 2e-5,
        horizon: 10.0,
        derivative_filter_tau: 1e-3,
    };
    let step = SimInputs {
        reference: Signal::Step { amplitude: 1.0, start: 0.0 },
        ..Default::default()
    };
    let with = step_metrics(&simulate_closed_loop(Structure::TwoDof, &p.plant, 0.0, Some(&q), &c, &step, &s).unwrap()).unwrap();
    let without = step_metrics(&simulate_closed_loop(Structure::OneDof, &p.plant, 0.0, Some(&q), &c, &step, &s).unwrap()).unwrap();
    o.check(
        with.settled && with.overshoot < without.overshoot,
        format!(
            "step with C_p: settled {} (t_s = {:?} s), overshoot {:.4} vs {:.4} without C_p",
            with.settled, with.settling_time_2pct, with.overshoot, without.overshoot
        ),
    );

    let ratio = |wd: f64| {
        let inp = SimInputs {
            disturbance: Signal::Sine { amplitude: 1.0, frequency: wd, start: 0.0 },
            ..Default::default()
        };
        let a = simulate_closed_loop(Structure::TwoDof, &p.plant, 0.0, Some(&q), &c, &inp, &s).unwrap();
        let b = simulate_closed_loop(Structure::TwoDof, &p.plant, 0.0, None, &c, &inp, &s).unwrap();
        rms_from(&a.t, &a.y, 0.8 * s.horizon) / rms_from(&b.t, &b.y, 0.8 * s.horizon)
    };
    let (lo, hi) = (ratio(1.0), ratio(250.0));
    o.check(
        lo < hi,
        format!("output RMS with DOB / without: {lo:.4} at 1 rad/s vs {hi:.4} at 250 rad/s"),
    );
    o
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let base = problem(1);
    let peaks: Vec<f64> = (1..=3)
        .map(|n| {
            let mut p = base.clone();
            p.order = n;
            exact_metrics(&p, Theorem::MinimumPhase, 100.0).unwrap().peak_s
        })
        .collect();
    o.check(
        peaks.windows(2).all(|w| w[1] >= w[0] - 1e-9),
        format!("peak |S_i| at g = 100 for orders 1/2/3: {peaks:.4?} (non-decreasing)"),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    for _ in 0..100 {
        let spec = DesignSpec {
            alpha: rng.random_range(0.01..0.9),
            alpha_beta: 0.5,
            alpha_gamma: 0.2,
            w_beta: 1.0,
            w_gamma: 10.0,
            w_gamma_per_g: None,
            sup_log_s: rng.random_range(0.1..3.0),
            sup_kind: SupKind::Log,
            delta: rng.random_range(0.01..0.45),
            k: rng.random_range(1..5),
            m: 1.0,
            r: None,
        };
        let psi = |s: &DesignSpec| psi_minimum_phase(s, LogConvention::Nat);
        let base_psi = psi(&spec);
        let up_alpha = DesignSpec { alpha: spec.alpha + 0.5 * (1.0 - spec.alpha), ..spec.clone() };
        let up_delta = DesignSpec { delta: spec.delta + 0.04, ..spec.clone() };
        let up_k = DesignSpec { k: spec.k + 1, ..spec.clone() };
        if !(psi(&up_alpha) > base_psi && psi(&up_delta) > base_psi && psi(&up_k) < base_psi) {
            violations += 1;
        }
    }
    o.check(
        violations == 0,
        format!("ψ increases with α and δ and decreases with k on 100 random specs ({violations} violations)"),
    );
    o
}

fn criterion_10() -> Outcome {
    let mut o = Outcome::new();
    let root = tempfile::tempdir().unwrap();
    for n in 1..=5 {
        let (name, cfg) = bundled_case(n).unwrap();
        let mut runs = Vec::new();
        for rep in 0..2 {
            let b = run_case(name, &cfg, Command::All, &RunOptions::default()).unwrap();
            let dir = root.path().join(format!("{name}_{rep}"));
            runs.push(digests(&emit(&b, &dir, &[Format::Csv, Format::Json]).unwrap()));
        }
        o.check(
            runs[0] == runs[1] && !runs[0].is_empty(),
            format!("{name}: {} artifacts, digests identical across two runs", runs[0].len()),
        );
    }
    o
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("algebraic identities", criterion_1),
        ("integral identities", criterion_2),
        ("Blaschke all-pass", criterion_3),
        ("delayed |S|² closed form", criterion_4),
        ("minimum-phase case", criterion_5),
        ("time-delay case", criterion_6),
        ("non-minimum-phase case", criterion_7),
        ("unstable-plant case", criterion_8),
        ("monotonicity", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        println!(
            "criterion {:>2} [{}] {name} ({:.2} s)",
            i + 1,
            if out.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        for d in &out.details {
            println!("    {d}");
        }
        failed += usize::from(!out.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
