//! Closed-loop stability of `1 + L = 0`.
//!
//! Delay-free loops are decided from the roots of the characteristic
//! polynomial. Loops with dead time lead to a quasi-polynomial
//! `f(s) = Σ p_i(s) e^{-a_i s}`; its right-half-plane zeros are counted with the
//! argument principle along the imaginary axis (equivalently, encirclements of
//! `-1` by the Nyquist curve of `L`), sampling densely enough that consecutive
//! phase steps stay below 10°.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::tf::{roots, DelayTerm, QuasiRational, TfError};

/// Closed-loop poles with `|Re| ≤ MARGIN_TOL·max(1,|p|)` are reported as marginal.
pub const MARGIN_TOL: f64 = 1e-9;

const MAX_PHASE_STEP: f64 = 10.0 * PI / 180.0;
const MAX_BISECT_DEPTH: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("phase sampling did not resolve below 10° steps")]
    GridTooCoarse,
    #[error("neutral-type characteristic equation (delayed term of full degree)")]
    NeutralType,
    #[error("winding count {0} is not close to an integer")]
    InconsistentWinding(f64),
    #[error(transparent)]
    Tf(#[from] TfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    /// A closed-loop pole within tolerance of the imaginary axis.
    Marginal,
    Unstable { rhp_poles: usize },
}

impl Stability {
    pub fn is_stable(self) -> bool {
        matches!(self, Stability::Stable)
    }
}

/// Stability of the unity-feedback loop around the open loop `l`.
pub fn closed_loop_stability(l: &QuasiRational) -> Result<Stability, StabilityError> {
    let mut terms: Vec<DelayTerm> = l.den_terms().to_vec();
    terms.extend(l.num_terms().iter().cloned());
    let terms = merge(terms);
    if terms.iter().all(|t| t.delay == 0.0) {
        let p = terms[0].poly.clone();
        if let Ok(rs) = roots(&p) {
            return Ok(verdict_from_roots(&rs));
        }
    }
    quasi_rhp_zeros(&terms)
}

/// Verdict from an explicit list of closed-loop poles.
pub fn verdict_from_roots(rs: &[Complex64]) -> Stability {
    let mut rhp = 0;
    let mut marginal = false;
    for r in rs {
        if r.re.abs() <= MARGIN_TOL * r.norm().max(1.0) {
            marginal = true;
        } else if r.re > 0.0 {
            rhp += 1;
        }
    }
    if rhp > 0 {
        Stability::Unstable { rhp_poles: rhp }
    } else if marginal {
        Stability::Marginal
    } else {
        Stability::Stable
    }
}

fn merge(terms: Vec<DelayTerm>) -> Vec<DelayTerm> {
    let mut out: Vec<DelayTerm> = Vec::new();
    for t in terms {
        if let Some(e) = out.iter_mut().find(|e| e.delay == t.delay) {
            e.poly = e.poly.add(&t.poly);
        } else {
            out.push(t);
        }
    }
    out.retain(|t| !t.poly.is_zero());
    out
}

fn eval_terms(terms: &[DelayTerm], w: f64) -> Complex64 {
    let s = Complex64::new(0.0, w);
    terms
        .iter()
        .map(|t| {
            let v = t.poly.eval(s);
            if t.delay == 0.0 {
                v
            } else {
                v * Complex64::from_polar(1.0, -t.delay * w)
            }
        })
        .sum()
}

fn wrap(a: f64) -> f64 {
    let mut x = (a + PI) % (2.0 * PI);
    if x < 0.0 {
        x += 2.0 * PI;
    }
    x - PI
}

/// Number of right-half-plane zeros of a retarded quasi-polynomial.
///
/// With `n` the degree of the delay-free leading term, the phase of `f(jw)`
/// advances by `(n - 2N)·π/2` as `w` runs from 0 to ∞.
fn quasi_rhp_zeros(terms: &[DelayTerm]) -> Result<Stability, StabilityError> {
    let lead = terms
        .iter()
        .filter(|t| t.delay == 0.0)
        .max_by_key(|t| t.poly.degree())
        .ok_or(StabilityError::NeutralType)?;
    let n = lead.poly.degree();
    if terms.iter().any(|t| t.delay > 0.0 && t.poly.degree() >= n) {
        return Err(StabilityError::NeutralType);
    }
    let an = lead.poly.leading();

    // Past w_max the leading monomial dominates everything else by 2:1, so the
    // phase of f stays within 30° of the (constant) phase of a_n (jw)^n.
    let rest = |w: f64| -> f64 {
        let mut acc = 0.0;
        for t in terms {
            for (k, c) in t.poly.coeffs().iter().enumerate() {
                if !(t.delay == 0.0 && k == n && std::ptr::eq(t, lead)) {
                    acc += c.abs() * w.powi(k as i32);
                }
            }
        }
        acc
    };
    let mut w_max = 1.0;
    while rest(w_max) > 0.5 * an.abs() * w_max.powi(n as i32) {
        w_max *= 2.0;
        if w_max > 1e15 {
            return Err(StabilityError::GridTooCoarse);
        }
    }

    let f0 = eval_terms(terms, 0.0);
    let scale0: f64 = terms.iter().map(|t| t.poly.coeff(0).abs()).sum();
    if f0.norm() <= MARGIN_TOL * scale0.max(f64::MIN_POSITIVE) || f0.norm() == 0.0 {
        return Ok(Stability::Marginal);
    }

    // Coarse log grid, refined by bisection wherever the phase jumps more than 10°.
    let w_lo = w_max * 1e-9;
    let coarse = 4000usize;
    let mut ws = vec![0.0];
    ws.extend((0..coarse).map(|k| w_lo * (w_max / w_lo).powf(k as f64 / (coarse - 1) as f64)));
    let mut total = 0.0;
    let mut min_ratio = f64::INFINITY;
    let mut prev_w = ws[0];
    let mut prev_f = f0;
    for &w in &ws[1..] {
        let f = eval_terms(terms, w);
        total += phase_advance(terms, prev_w, prev_f, w, f, 0, &mut min_ratio)?;
        prev_w = w;
        prev_f = f;
    }
    if min_ratio <= MARGIN_TOL {
        return Ok(Stability::Marginal);
    }
    let lead_phase = if an < 0.0 { PI } else { 0.0 } + n as f64 * PI / 2.0;
    total += wrap(lead_phase - prev_f.arg());
    let count = (n as f64 - 2.0 * total / PI) / 2.0;
    let rounded = count.round();
    if (count - rounded).abs() > 0.25 || rounded < 0.0 {
        return Err(StabilityError::InconsistentWinding(count));
    }
    let rhp = rounded as usize;
    Ok(if rhp == 0 {
        Stability::Stable
    } else {
        Stability::Unstable { rhp_poles: rhp }
    })
}

fn phase_advance(
    terms: &[DelayTerm],
    w0: f64,
    f0: Complex64,
    w1: f64,
    f1: Complex64,
    depth: u32,
    min_ratio: &mut f64,
) -> Result<f64, StabilityError> {
    let scale: f64 = terms.iter().map(|t| t.poly.abs_scale(w1)).sum();
    *min_ratio = min_ratio.min(f1.norm() / scale);
    let step = wrap(f1.arg() - f0.arg());
    if step.abs() <= MAX_PHASE_STEP {
        return Ok(step);
    }
    if depth >= MAX_BISECT_DEPTH {
        return Err(StabilityError::GridTooCoarse);
    }
    let wm = 0.5 * (w0 + w1);
    let fm = eval_terms(terms, wm);
    Ok(phase_advance(terms, w0, f0, wm, fm, depth + 1, min_ratio)?
        + phase_advance(terms, wm, fm, w1, f1, depth + 1, min_ratio)?)
}
