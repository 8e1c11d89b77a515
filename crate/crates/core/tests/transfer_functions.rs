use dobkit_core::model::DobFilter;
use dobkit_core::sim::realize;
use dobkit_core::tf::{blaschke, freq_response, log_grid, roots, DelayedTF, Polynomial, RationalTF};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn j(w: f64) -> Complex64 {
    Complex64::new(0.0, w)
}

fn sorted(mut r: Vec<Complex64>) -> Vec<Complex64> {
    r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    r
}

#[test]
fn first_order_filter_at_its_bandwidth() {
    let q = DobFilter::make_lpf(1, 100.0).unwrap().tf();
    let v = q.eval(j(100.0)).unwrap();
    assert!((v - Complex64::new(0.5, -0.5)).norm() < 1e-12, "{v}");
}

#[test]
fn dc_gain_of_nominal_plant() {
    let g = RationalTF::from_descending(&[1.0, 5.0], &[1.0, 5.0, 6.0]).unwrap();
    assert!((g.dc_gain().unwrap() - 5.0 / 6.0).abs() < 1e-15);
}

#[test]
fn pure_delay_phase() {
    let d = DelayedTF::new(RationalTF::one(), 0.01).unwrap();
    let v = d.eval(j(100.0 * PI)).unwrap();
    assert!((v - Complex64::new(-1.0, 0.0)).norm() < 1e-12, "{v}");
}

#[test]
fn polynomial_roots() {
    let r = sorted(roots(&Polynomial::from_descending(&[1.0, 5.0, 6.0])).unwrap());
    assert!((r[0] - Complex64::new(-3.0, 0.0)).norm() < 1e-12);
    assert!((r[1] - Complex64::new(-2.0, 0.0)).norm() < 1e-12);

    let r = sorted(roots(&Polynomial::from_descending(&[1.0, -5.0, 0.0])).unwrap());
    assert!(r[0].norm() < 1e-12);
    assert!((r[1] - Complex64::new(5.0, 0.0)).norm() < 1e-12);

    let r = sorted(roots(&Polynomial::from_descending(&[1.0, 0.0, 1.0])).unwrap());
    assert!((r[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
    assert!((r[1] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
}

#[test]
fn loop_of_first_order_filter_is_integrator() {
    let q = DobFilter::make_lpf(1, 40.0).unwrap().tf();
    let l = q.div(&RationalTF::one().sub(&q)).unwrap();
    for w in [0.1, 3.0, 40.0, 900.0] {
        let v = l.eval(j(w)).unwrap();
        let want = Complex64::new(40.0, 0.0) / j(w);
        assert!((v - want).norm() < 1e-10 * want.norm());
    }
}

#[test]
fn blaschke_products() {
    let b = blaschke(&[Complex64::new(5.0, 0.0)]).unwrap();
    // (5-s)/(5+s)
    assert!((b.eval(Complex64::new(0.0, 0.0)).unwrap() - 1.0).norm() < 1e-15);
    assert!(b.eval(Complex64::new(5.0, 0.0)).unwrap().norm() < 1e-15);

    let pair = [Complex64::new(1.0, 2.0), Complex64::new(1.0, -2.0)];
    let b = blaschke(&pair).unwrap();
    for w in log_grid(1e-3, 1e3, 61) {
        assert!((b.eval(j(w)).unwrap().norm() - 1.0).abs() < 1e-12);
    }
    assert!(b.num().coeffs().iter().all(|c| c.is_finite()));
    assert!(blaschke(&[Complex64::new(-1.0, 0.0)]).is_err());
}

#[test]
fn realization_matches_frequency_response() {
    let cases = [
        RationalTF::from_descending(&[1.0, 5.0], &[1.0, 5.0, 6.0]).unwrap(),
        RationalTF::from_descending(&[-1.0, 50.0], &[1.0, 25.0, 40.0]).unwrap(),
        RationalTF::from_descending(&[1.0, 10.0], &[4.0, 10.0]).unwrap(),
        DobFilter::make_lpf(3, 80.0).unwrap().tf(),
    ];
    for g in &cases {
        let ss = realize(g).unwrap();
        let fr = freq_response(g, &log_grid(1e-2, 1e4, 101)).unwrap();
        for (w, v) in fr.grid.iter().zip(&fr.values) {
            let e = ss.eval(j(*w)).unwrap();
            assert!((e - v).norm() <= 1e-9 * v.norm().max(1.0), "w = {w}: {e} vs {v}");
        }
    }
}

fn coeff() -> impl Strategy<Value = f64> {
    prop_oneof![-10.0..-0.1f64, 0.1..10.0f64]
}

proptest! {
    #[test]
    fn product_evaluates_pointwise(a in coeff(), b in coeff(), c in coeff(), d in coeff(), w in 0.01..100.0f64) {
        let x = RationalTF::from_descending(&[a, 1.0], &[1.0, c.abs()]).unwrap();
        let y = RationalTF::from_descending(&[b], &[1.0, d, 2.0]).unwrap();
        let s = j(w);
        let want = x.eval(s).unwrap() * y.eval(s).unwrap();
        let got = x.mul(&y).eval(s).unwrap();
        prop_assert!((got - want).norm() <= 1e-10 * want.norm().max(1e-12));
        let want = x.eval(s).unwrap() + y.eval(s).unwrap();
        let got = x.add(&y).eval(s).unwrap();
        prop_assert!((got - want).norm() <= 1e-10 * want.norm().max(1.0));
    }

    #[test]
    fn roots_reconstruct_polynomial(r in proptest::collection::vec(-20.0..20.0f64, 1..6)) {
        let p = Polynomial::from_roots(&r.iter().map(|x| Complex64::new(*x, 0.0)).collect::<Vec<_>>());
        let got = roots(&p).unwrap();
        prop_assert_eq!(got.len(), r.len());
        for z in &got {
            prop_assert!(p.eval(*z).norm() <= 1e-6 * p.abs_scale(z.norm().max(1.0)));
        }
    }

    #[test]
    fn feedback_is_sensitivity_complement(k in 0.1..50.0f64, p in 0.1..20.0f64, w in 0.01..1e3f64) {
        let l = RationalTF::from_descending(&[k], &[1.0, p, 0.0]).unwrap();
        let t = l.feedback().unwrap();
        let s = RationalTF::one().sub(&t);
        let v = s.eval(j(w)).unwrap() * (Complex64::new(1.0, 0.0) + l.eval(j(w)).unwrap());
        prop_assert!((v - 1.0).norm() < 1e-9);
    }
}
