//! Bode and Poisson sensitivity integrals, their tail bounds, and the peak
//! bounds that follow from them. Natural logarithms throughout.

mod quad;

pub use quad::{integrate, QuadResult};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

use crate::model::{DobFilter, UncertaintyWeight};
use crate::stability::{closed_loop_stability, Stability, StabilityError};
use crate::tf::{log_grid, roots, FrequencyResponse, QuasiRational, RationalTF, TfError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("closed loop is unstable; the integral identities do not apply")]
    UnstableLoop,
    #[error("closed loop has a pole on the imaginary axis")]
    DivergentNearZero,
    #[error("delta = {0} exceeds 1/2")]
    DeltaTooLarge(f64),
    #[error("delay must be positive")]
    ZeroDelay,
    #[error("need 0 < w_beta < w_gamma")]
    BadOrdering,
    #[error("order {0} is not covered by the peak condition")]
    UnsupportedOrder(u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Tf(#[from] TfError),
}

/// A bound on `|∫_{w0}^∞ ln|S(jw)| dw|` beyond some frequency `w0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub value: f64,
    pub kind: TailKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailKind {
    /// `|L| ≤ M/w^{k+1} = δ` for `w ≥ w_γ`.
    Decay { m: f64, k: u32, w_gamma: f64, delta: f64 },
    /// `|L| ≤ δ (R/|s|)^k` on the right-half-plane region outside radius `R`, with delay `τ`.
    Delay { delta: f64, tau: f64 },
}

/// `3 δ w_γ / (2k)`.
pub fn decay_tail(m: f64, k: u32, w_gamma: f64, delta: f64) -> Result<TailBound, AnalysisError> {
    if delta > 0.5 {
        return Err(AnalysisError::DeltaTooLarge(delta));
    }
    if k < 1 {
        return Err(AnalysisError::InvalidArgument("k must be at least 1"));
    }
    if !(delta >= 0.0) || !(w_gamma > 0.0) {
        return Err(AnalysisError::InvalidArgument("need delta >= 0 and w_gamma > 0"));
    }
    Ok(TailBound {
        value: 3.0 * delta * w_gamma / (2.0 * k as f64),
        kind: TailKind::Decay { m, k, w_gamma, delta },
    })
}

/// `3π δ / (4τ)`.
pub fn delay_tail(delta: f64, tau: f64) -> Result<TailBound, AnalysisError> {
    if !(tau > 0.0) {
        return Err(AnalysisError::ZeroDelay);
    }
    if delta > 0.5 {
        return Err(AnalysisError::DeltaTooLarge(delta));
    }
    if !(delta >= 0.0) {
        return Err(AnalysisError::InvalidArgument("delta must be non-negative"));
    }
    Ok(TailBound {
        value: 3.0 * PI * delta / (4.0 * tau),
        kind: TailKind::Delay { delta, tau },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    /// Bound on the part of the integral not covered by the quadrature
    /// (infinite when no bound could be established).
    pub truncation_bound: f64,
    pub grid_points_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodeIntegral {
    pub result: IntegralResult,
    /// `(π/2)·lim s L(s)` for relative-degree-1 delay-free loops, else 0.
    /// The identity reads `value + residue_term ≈ 0`.
    pub residue_term: f64,
    pub relative_degree: i64,
}

impl BodeIntegral {
    /// `|value + residue|` against the combined error budget.
    pub fn identity_holds(&self, slack: f64) -> bool {
        (self.result.value + self.residue_term).abs()
            <= self.result.truncation_bound + slack * self.result.abs_error_estimate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonIntegral {
    pub result: IntegralResult,
    /// `π ln|B^{-1}(z)|`
    pub rhs: f64,
}

fn require_stable(l: &QuasiRational) -> Result<(), AnalysisError> {
    match closed_loop_stability(l)? {
        Stability::Stable => Ok(()),
        Stability::Marginal => Err(AnalysisError::DivergentNearZero),
        Stability::Unstable { .. } => Err(AnalysisError::UnstableLoop),
    }
}

/// Magnitudes of all finite nonzero roots of the polynomials in `l` (and of the
/// characteristic polynomial when delay-free): natural breakpoints for quadrature.
fn characteristic_frequencies(l: &QuasiRational) -> Vec<f64> {
    let mut out = Vec::new();
    let mut polys: Vec<_> = l
        .num_terms()
        .iter()
        .chain(l.den_terms())
        .map(|t| t.poly.clone())
        .collect();
    if !l.has_delay() {
        polys.push(l.num_poly_sum().add(&l.den_poly_sum()));
    }
    for p in polys {
        if p.is_zero() || p.degree() == 0 {
            continue;
        }
        if let Ok(rs) = roots(&p) {
            out.extend(rs.iter().map(|r| r.norm()).filter(|m| *m > 0.0 && m.is_finite()));
        }
    }
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    out
}

fn ln_abs_s(l: &QuasiRational, w: f64) -> f64 {
    // ln|S| = ln|den| - ln|den + num|, without forming S.
    let (n, d) = l.eval_parts(Complex64::new(0.0, w));
    d.norm().ln() - (d + n).norm().ln()
}

/// `∫_0^{w_max} ln|S(jw)| dw` for `S = 1/(1+L)`.
///
/// The integral is taken over `u = ln w` between characteristic frequencies;
/// the piece below the smallest of them uses the local power law of `S`. When
/// `tail` is `None` a truncation bound for `[w_max, ∞)` is derived from the
/// decay of `|L|` where possible.
pub fn bode_integral(
    l: &QuasiRational,
    w_max: f64,
    tail: Option<&TailBound>,
) -> Result<BodeIntegral, AnalysisError> {
    if !(w_max > 0.0) {
        return Err(AnalysisError::InvalidArgument("w_max must be positive"));
    }
    let r = l.relative_degree();
    if l.is_zero() {
        return Ok(BodeIntegral {
            result: IntegralResult {
                value: 0.0,
                abs_error_estimate: 0.0,
                truncation_bound: 0.0,
                grid_points_used: 0,
            },
            residue_term: 0.0,
            relative_degree: r,
        });
    }
    if r < 1 {
        return Err(AnalysisError::InvalidArgument("open loop must be strictly proper"));
    }
    require_stable(l)?;

    let freqs = characteristic_frequencies(l);
    let w_lo = freqs.first().copied().unwrap_or(w_max).min(w_max) * 1e-8;
    let mut bps: Vec<f64> = vec![w_lo.ln()];
    bps.extend(freqs.iter().filter(|f| **f > w_lo && **f < w_max).map(|f| f.ln()));
    bps.push(w_max.ln());

    let mut value = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    for win in bps.windows(2) {
        let q = integrate(
            |u: f64| {
                let w = u.exp();
                ln_abs_s(l, w) * w
            },
            win[0],
            win[1],
            1e-10,
            1e-12,
            4000,
        );
        value += q.value;
        err += q.error;
        evals += q.evaluations;
    }

    // [0, w_lo]: ln|S| ≈ c + m ln w, with m the number of integrators in L.
    let m = l.den_poly_sum().zero_root_multiplicity() as f64;
    let f_lo = ln_abs_s(l, w_lo);
    let low = w_lo * (f_lo - m);
    value += low;
    err += 1e-3 * low.abs() + 1e-12;

    let residue_term = if r == 1 && !l.has_delay() {
        let num = l.num_poly_sum();
        let den = l.den_poly_sum();
        FRAC_PI_2 * num.leading() / den.leading()
    } else {
        0.0
    };
    let truncation_bound = match tail {
        Some(t) => t.value,
        None => auto_tail(l, w_max, r),
    };
    Ok(BodeIntegral {
        result: IntegralResult {
            value,
            abs_error_estimate: err,
            truncation_bound,
            grid_points_used: evals,
        },
        residue_term,
        relative_degree: r,
    })
}

/// Bound on `|∫_{w_max}^∞ (ln|S| + residue part) dw|` from sampled decay of `L`.
fn auto_tail(l: &QuasiRational, w_max: f64, r: i64) -> f64 {
    let grid = log_grid(w_max, w_max * 1e6, 600);
    let mut sup_l = 0.0f64;
    let mut m_r = 0.0f64;
    let mut m_re = 0.0f64;
    for &w in &grid {
        let v = match l.eval(Complex64::new(0.0, w)) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        sup_l = sup_l.max(v.norm());
        m_r = m_r.max(v.norm() * w.powi(r as i32));
        m_re = m_re.max(v.re.abs() * w * w);
    }
    if sup_l > 0.5 {
        return f64::INFINITY;
    }
    // |ln|1+L|| ≤ 1.5|L| and |ln|1+L| - Re L| ≤ |L|^2 for |L| ≤ 1/2.
    if r >= 2 {
        1.5 * m_r * w_max.powi(1 - r as i32) / (r - 1) as f64
    } else if !l.has_delay() {
        (m_re + m_r * m_r) / w_max
    } else {
        f64::INFINITY
    }
}

/// `∫_{-∞}^{∞} ln|H(jw)| · x/(x² + (y-w)²) dw` for `z = x + jy`, via
/// `w = y + x tan θ` which turns the kernel into `dθ` on `(-π/2, π/2)`.
pub fn poisson_integral<H: FrequencyResponse + ?Sized>(
    h: &H,
    z: Complex64,
    breakpoints: &[f64],
) -> Result<IntegralResult, AnalysisError> {
    if !(z.re > 0.0) {
        return Err(AnalysisError::InvalidArgument("z must lie in the open right half-plane"));
    }
    let (x, y) = (z.re, z.im);
    let mut thetas: Vec<f64> = vec![-FRAC_PI_2, FRAC_PI_2, (-y / x).atan()];
    for &b in breakpoints {
        thetas.push(((b - y) / x).atan());
        thetas.push(((-b - y) / x).atan());
    }
    thetas.sort_by(|a, b| a.total_cmp(b));
    thetas.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let mut value = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    let mut failure = None;
    for win in thetas.windows(2) {
        let q = integrate(
            |t: f64| {
                let w = y + x * t.tan();
                match h.response_at(Complex64::new(0.0, w)) {
                    Ok(v) => {
                        let lv = v.norm().ln();
                        if lv.is_finite() {
                            lv
                        } else {
                            0.0
                        }
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            win[0],
            win[1],
            1e-11,
            1e-12,
            4000,
        );
        value += q.value;
        err += q.error;
        evals += q.evaluations;
    }
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(IntegralResult {
        value,
        abs_error_estimate: err,
        truncation_bound: 0.0,
        grid_points_used: evals,
    })
}

fn blaschke_rhs(b: &RationalTF, z: Complex64) -> Result<f64, AnalysisError> {
    let v = b.eval(z)?.norm();
    if v == 0.0 {
        return Err(AnalysisError::InvalidArgument("Blaschke product vanishes at the evaluation point"));
    }
    Ok(-PI * v.ln())
}

/// Poisson integral of `ln|S|` at a right-half-plane zero `z` of the loop, with
/// `b_s` the Blaschke product of the loop's right-half-plane poles.
pub fn poisson_sensitivity(
    l: &QuasiRational,
    z: Complex64,
    b_s: &RationalTF,
) -> Result<PoissonIntegral, AnalysisError> {
    let rhs = blaschke_rhs(b_s, z)?;
    if l.is_zero() {
        return Ok(PoissonIntegral {
            result: IntegralResult {
                value: 0.0,
                abs_error_estimate: 0.0,
                truncation_bound: 0.0,
                grid_points_used: 0,
            },
            rhs,
        });
    }
    require_stable(l)?;
    let result = poisson_integral(&l.sensitivity(), z, &characteristic_frequencies(l))?;
    Ok(PoissonIntegral { result, rhs })
}

/// Poisson integral of `ln|T|` at a right-half-plane pole `p` of the loop, with
/// `b_t` the Blaschke product of the loop's right-half-plane zeros.
pub fn poisson_cosensitivity(
    l: &QuasiRational,
    p: Complex64,
    b_t: &RationalTF,
) -> Result<PoissonIntegral, AnalysisError> {
    let rhs = blaschke_rhs(b_t, p)?;
    require_stable(l)?;
    let result = poisson_integral(&l.cosensitivity(), p, &characteristic_frequencies(l))?;
    Ok(PoissonIntegral { result, rhs })
}

/// `max |L|` over `{jw : w ≥ R}` and the quarter circle `R e^{jθ}`, `θ ∈ [0, π/2]`.
pub fn semicircle_sup(l: &QuasiRational, r: f64) -> Result<f64, AnalysisError> {
    if !(r > 0.0) {
        return Err(AnalysisError::InvalidArgument("R must be positive"));
    }
    if l.is_zero() {
        return Ok(0.0);
    }
    let mag = |s: Complex64| l.eval(s).map(|v| v.norm()).unwrap_or(0.0);

    let axis = log_grid(r, r * 1e4, 401);
    let (i_ax, best_axis) = argmax(axis.iter().map(|w| mag(Complex64::new(0.0, *w))));
    let refine_axis = {
        let lo = axis[i_ax.saturating_sub(1)];
        let hi = axis[(i_ax + 1).min(axis.len() - 1)];
        refine(|w| mag(Complex64::new(0.0, w)), lo, hi)
    };

    let arc: Vec<f64> = (0..181).map(|k| FRAC_PI_2 * k as f64 / 180.0).collect();
    let (i_arc, best_arc) = argmax(arc.iter().map(|t| mag(Complex64::from_polar(r, *t))));
    let refine_arc = {
        let lo = arc[i_arc.saturating_sub(1)];
        let hi = arc[(i_arc + 1).min(arc.len() - 1)];
        refine(|t| mag(Complex64::from_polar(r, t)), lo, hi)
    };
    Ok(best_axis.max(refine_axis).max(best_arc).max(refine_arc))
}

fn argmax<I: Iterator<Item = f64>>(it: I) -> (usize, f64) {
    it.enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
}

fn refine<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    (0..=40)
        .map(|k| f(lo + (hi - lo) * k as f64 / 40.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `arctan(w/x)`: the Poisson-kernel mass on `[0, w]` for a real zero `x`.
pub fn theta(w: f64, x: f64) -> f64 {
    (w / x).atan()
}

/// Lower bound on `sup ln|S|` over `[w_β, w_γ]` forced by the waterbed effect.
pub fn waterbed_peak_lower_bound(
    alpha: f64,
    w_beta: f64,
    w_gamma: f64,
    tail: &TailBound,
) -> Result<f64, AnalysisError> {
    if !(w_beta > 0.0) || !(w_gamma > w_beta) {
        return Err(AnalysisError::BadOrdering);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AnalysisError::InvalidArgument("alpha must be in (0, 1]"));
    }
    let span = w_gamma - w_beta;
    Ok((1.0 / alpha).ln() * w_beta / span - tail.value / span)
}

/// Both sides of the sensitivity-peak reduction condition at frequency `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCondition {
    pub left: f64,
    pub right: f64,
    pub holds: bool,
}

/// The weight-difference term against the order-dependent right side, evaluated
/// at the real frequency `w` (the printed `s` in the second-order case is read
/// as `w`). Orders above 3 are not defined.
pub fn sensitivity_peak_condition(
    weight: &UncertaintyWeight,
    tau: f64,
    dob: &DobFilter,
    w: f64,
) -> Result<PeakCondition, AnalysisError> {
    let wt = weight.w_t;
    let a = wt * weight.e_min;
    let b = wt * weight.e_max;
    let left = a / (w * w + a * a) - b / (w * w + b * b);
    let g = &dob.den_coeffs;
    let right = match dob.order {
        1 => tau,
        2 => tau + g[1] / (w + g[1]),
        3 => {
            let (g1, g2) = (g[1], g[2]);
            tau + (g1 * g2 + g2 * w * w) / (g2 * g2 * w * w + (g1 - w * w).powi(2))
        }
        n => return Err(AnalysisError::UnsupportedOrder(n)),
    };
    Ok(PeakCondition {
        left,
        right,
        holds: left > right,
    })
}

/// Boolean form of [`sensitivity_peak_condition`].
pub fn sensitivity_peak_condition_holds(
    weight: &UncertaintyWeight,
    tau: f64,
    dob: &DobFilter,
    w: f64,
) -> Result<bool, AnalysisError> {
    Ok(sensitivity_peak_condition(weight, tau, dob, w)?.holds)
}
