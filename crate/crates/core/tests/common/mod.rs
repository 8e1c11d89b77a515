//! Plants, weights and specs of the four worked cases.
#![allow(dead_code)]

use dobkit_core::model::{ControllerSet, DeltaInterval, PlantModel, UncertaintyWeight};
use dobkit_core::solver::{DesignSpec, Problem, SupKind};
use dobkit_core::tf::{log_grid, RationalTF};

pub fn tf(num: &[f64], den: &[f64]) -> RationalTF {
    RationalTF::from_descending(num, den).unwrap()
}

pub fn sweep_grid() -> Vec<f64> {
    log_grid(1.0, 1000.0, 60)
}

fn spec(alpha: f64, alpha_beta: f64, w_beta: f64, w_gamma: f64, sup: f64, kind: SupKind, delta: f64) -> DesignSpec {
    DesignSpec {
        alpha,
        alpha_beta,
        alpha_gamma: 0.2,
        w_beta,
        w_gamma,
        w_gamma_per_g: None,
        sup_log_s: sup,
        sup_kind: kind,
        delta,
        k: 1,
        m: 1.0,
        r: None,
    }
}

/// Minimum-phase `(s+5)/(s²+5s+6)`, weight `(5s+100)/(s+500)`.
pub fn case1(order: u32) -> Problem {
    let w = UncertaintyWeight::new(100.0, 0.2, 5.0).unwrap();
    let plant = PlantModel::new(
        tf(&[1.0, 5.0], &[1.0, 5.0, 6.0]),
        w,
        DeltaInterval::new(-0.199, 1.0, &w).unwrap(),
        0.0,
        None,
    )
    .unwrap();
    Problem::new(plant, order, spec(0.1, 0.5, 5.0, 100.0, 2f64.sqrt(), SupKind::Log, 0.4))
        .with_controllers(ControllerSet::new(tf(&[10.0, 50.0], &[1.0, 0.0]), None).unwrap())
}

/// `(s+10)/(s²+5s+10)·e^{-0.01s}`, nominal Δ unless `robust`.
pub fn case2(order: u32, robust: bool) -> Problem {
    let w = UncertaintyWeight::from_tf(&tf(&[3.0, 240.0], &[1.0, 600.0])).unwrap();
    let delta = if robust {
        DeltaInterval::new(-1.0 / 3.0 + 1e-6, 1.0, &w).unwrap()
    } else {
        DeltaInterval::nominal()
    };
    let plant = PlantModel::new(tf(&[1.0, 10.0], &[1.0, 5.0, 10.0]), w, delta, 0.01, None).unwrap();
    Problem::new(plant, order, spec(0.1, 0.1, 1.0, 1000.0, 2.0, SupKind::Magnitude, 0.1))
        .with_controllers(ControllerSet::new(tf(&[2.0, 10.0], &[1.0, 0.0]), None).unwrap())
}

/// `(-s+z)/(s²+25s+40)` with the minimum-phase approximation scaled to keep
/// the DC mismatch at one. `z = 50` is the worked case.
pub fn case3_with(z: f64, alpha_beta: f64, alpha_gamma: f64) -> Problem {
    let w = UncertaintyWeight::from_tf(&tf(&[3.75, 450.0], &[1.0, 1500.0])).unwrap();
    let plant = PlantModel::new(
        tf(&[-1.0, z], &[1.0, 25.0, 40.0]),
        w,
        DeltaInterval::new(-1.0 / 3.75 + 1e-6, 1.0, &w).unwrap(),
        0.0,
        Some(tf(&[1.0, 200.0, 20.0], &[4.0, 100.4, 170.0, 16.0]).scale(z / 50.0)),
    )
    .unwrap();
    let mut s = spec(alpha_beta, alpha_beta, 6.0, 1000.0, 2.0, SupKind::Magnitude, 0.4);
    s.alpha_gamma = alpha_gamma;
    s.w_gamma_per_g = Some(2.0);
    Problem::new(plant, 1, s).with_controllers(ControllerSet::new(tf(&[0.1, 1.0, 4.0], &[1.0, 0.0]), None).unwrap())
}

pub fn case3() -> Problem {
    case3_with(50.0, 0.5, 0.2)
}

/// Unstable `1/(s(s-5))` with `C_s = 12s+20` and `C_p = (s+10)/(4s+10)`.
pub fn case4() -> Problem {
    let w = UncertaintyWeight::from_tf(&tf(&[7.5, 600.0], &[1.0, 1500.0])).unwrap();
    let plant = PlantModel::new(
        tf(&[1.0], &[1.0, -5.0, 0.0]),
        w,
        DeltaInterval::new(-1.0 / 7.5 + 1e-3, 1.0, &w).unwrap(),
        0.0,
        None,
    )
    .unwrap();
    let c = ControllerSet::new(tf(&[12.0, 20.0], &[1.0]), Some(tf(&[1.0, 10.0], &[4.0, 10.0]))).unwrap();
    Problem::new(plant, 2, spec(0.3, 0.3, 1.0, 50.0, 2.0, SupKind::Magnitude, 0.4)).with_controllers(c)
}
