//! Plant family, uncertainty weight, DOB low-pass filter and loop assembly.
//!
//! Loops are built from the reduced expressions in which the nominal plant has
//! been cancelled analytically (e.g. `L_i = Q/(1-Q)·(1+ΔW)·e^{-τs}`). The
//! `*_verbatim_at` functions evaluate the unreduced block-diagram formulas and
//! exist as a cross-check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tf::{
    classify, DelayTerm, DelayedTF, Polynomial, QuasiRational, RationalTF, TfError, AXIS_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid uncertainty weight: {0}")]
    InvalidWeight(&'static str),
    #[error("invalid uncertainty interval [{lo}, {hi}]: {reason}")]
    InvalidDelta {
        lo: f64,
        hi: f64,
        reason: &'static str,
    },
    #[error("delta {delta} outside [{lo}, {hi}]")]
    DeltaOutOfRange { delta: f64, lo: f64, hi: f64 },
    #[error("invalid DOB filter: {0}")]
    InvalidFilter(&'static str),
    #[error("nominal plant is improper")]
    ImproperPlant,
    #[error("invalid approximate nominal model: {0}")]
    InvalidApproxNominal(&'static str),
    #[error("approximate nominal model required but not set")]
    MissingApproxNominal,
    #[error("approximate nominal model has right-half-plane zeros; its inverse is unstable")]
    UnstableInverse,
    #[error("loop is improper or degenerate: {0}")]
    ImproperLoop(&'static str),
    #[error("plant has no right-half-plane zero")]
    NoRhpZero,
    #[error("invalid controller: {0}")]
    InvalidController(&'static str),
    #[error(transparent)]
    Tf(#[from] TfError),
}

/// First-order multiplicative-uncertainty weight
/// `W(s) = (s/w_T + e_min) / (s/(w_T e_max) + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyWeight {
    pub w_t: f64,
    pub e_min: f64,
    pub e_max: f64,
}

impl UncertaintyWeight {
    pub fn new(w_t: f64, e_min: f64, e_max: f64) -> Result<Self, ModelError> {
        if !(w_t > 0.0) || !w_t.is_finite() {
            return Err(ModelError::InvalidWeight("w_T must be positive"));
        }
        if !(e_min >= 0.0) || !(e_max > 0.0) || !e_max.is_finite() {
            return Err(ModelError::InvalidWeight("need e_min >= 0 and e_max > 0"));
        }
        // Equality is allowed: it degenerates to a constant weight.
        if e_min > e_max {
            return Err(ModelError::InvalidWeight("e_min must not exceed e_max"));
        }
        Ok(Self { w_t, e_min, e_max })
    }

    /// Recovers the parameters from `(a1 s + a0)/(s + b0)`.
    pub fn from_tf(w: &RationalTF) -> Result<Self, ModelError> {
        if w.den().degree() != 1 || w.num().degree() > 1 {
            return Err(ModelError::InvalidWeight("weight must be first order"));
        }
        let b0 = w.den().coeff(0);
        let a0 = w.num().coeff(0);
        let a1 = w.num().coeff(1);
        if !(b0 > 0.0) || !(a1 > 0.0) {
            return Err(ModelError::InvalidWeight("weight must be stable with positive gain"));
        }
        Self::new(b0 / a1, a0 / b0, a1)
    }

    pub fn realize(&self) -> RationalTF {
        realize_weight(self)
    }
}

/// `W(s)` with a monic denominator: `(e_max s + w_T e_min e_max)/(s + w_T e_max)`.
pub fn realize_weight(w: &UncertaintyWeight) -> RationalTF {
    if w.e_min == w.e_max {
        return RationalTF::constant(w.e_max);
    }
    let p = w.w_t * w.e_max;
    RationalTF::new(
        Polynomial::linear(p * w.e_min, w.e_max),
        Polynomial::linear(p, 1.0),
    )
    .expect("monic denominator")
}

/// Interval of the scalar uncertainty `Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaInterval {
    pub lo: f64,
    pub hi: f64,
}

/// Default number of Δ samples: both endpoints plus 11 interior points.
pub const DEFAULT_DELTA_SAMPLES: usize = 13;

impl DeltaInterval {
    pub fn new(lo: f64, hi: f64, weight: &UncertaintyWeight) -> Result<Self, ModelError> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(ModelError::InvalidDelta {
                lo,
                hi,
                reason: "need finite lo <= hi",
            });
        }
        // Below -1/e_max the factor 1+ΔW acquires a right-half-plane zero.
        if lo < -1.0 / weight.e_max + 1e-9 {
            return Err(ModelError::InvalidDelta {
                lo,
                hi,
                reason: "lo must exceed -1/e_max",
            });
        }
        if hi > 1.0 {
            return Err(ModelError::InvalidDelta {
                lo,
                hi,
                reason: "hi must not exceed 1",
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn nominal() -> Self {
        Self { lo: 0.0, hi: 0.0 }
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.lo && d <= self.hi
    }

    /// `n` evenly spaced samples including both endpoints (one sample for a point interval).
    pub fn samples(&self, n: usize) -> Vec<f64> {
        if self.lo == self.hi || n < 2 {
            return vec![self.lo];
        }
        (0..n)
            .map(|k| {
                if k == n - 1 {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    /// The sample closest to the nominal plant.
    pub fn nominal_sample(&self) -> f64 {
        0.0f64.clamp(self.lo, self.hi)
    }
}

/// `G = G_n (1 + ΔW) e^{-τs}` with an optional minimum-phase stand-in `Ĝ_n` for
/// plants whose nominal model cannot be inverted.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub nominal: RationalTF,
    pub weight: UncertaintyWeight,
    pub delta: DeltaInterval,
    pub tau: f64,
    pub approx_nominal: Option<RationalTF>,
}

impl PlantModel {
    pub fn new(
        nominal: RationalTF,
        weight: UncertaintyWeight,
        delta: DeltaInterval,
        tau: f64,
        approx_nominal: Option<RationalTF>,
    ) -> Result<Self, ModelError> {
        if !nominal.is_proper() {
            return Err(ModelError::ImproperPlant);
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(TfError::NegativeDelay(tau).into());
        }
        if let Some(a) = &approx_nominal {
            let c = classify(&DelayedTF::undelayed(a.clone()))?;
            if c.has_rhp_pole() || !c.imag_axis_poles.is_empty() {
                return Err(ModelError::InvalidApproxNominal("must be stable"));
            }
            if c.has_rhp_zero() {
                return Err(ModelError::UnstableInverse);
            }
            if !a.is_proper() {
                return Err(ModelError::InvalidApproxNominal("must be proper"));
            }
        }
        Ok(Self {
            nominal,
            weight,
            delta,
            tau,
            approx_nominal,
        })
    }

    /// Nominal plant with delay, as classified for theorem dispatch.
    pub fn nominal_delayed(&self) -> DelayedTF {
        DelayedTF {
            rational: self.nominal.clone(),
            tau: self.tau,
        }
    }

    fn check_delta(&self, delta: f64) -> Result<(), ModelError> {
        if self.delta.contains(delta) {
            Ok(())
        } else {
            Err(ModelError::DeltaOutOfRange {
                delta,
                lo: self.delta.lo,
                hi: self.delta.hi,
            })
        }
    }

    /// `1 + ΔW` as a rational function (exactly `1` at Δ = 0).
    pub fn uncertainty_factor(&self, delta: f64) -> RationalTF {
        if delta == 0.0 {
            return RationalTF::one();
        }
        let w = self.weight.realize();
        RationalTF::new(w.den().add(&w.num().scale(delta)), w.den().clone())
            .expect("weight denominator is nonzero")
    }

    /// `r_err = G_n / Ĝ_n`, kept unreduced so the right-half-plane zero survives.
    pub fn model_mismatch(&self) -> Result<RationalTF, ModelError> {
        let a = self
            .approx_nominal
            .as_ref()
            .ok_or(ModelError::MissingApproxNominal)?;
        Ok(self.nominal.div(a)?)
    }
}

/// Binomial-pattern low-pass filter `Q = g0/(s^n + … + g0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DobFilter {
    pub order: u32,
    /// `g_0 … g_{n-1}` (ascending; the leading `1` is implied).
    pub den_coeffs: Vec<f64>,
    /// The design parameter `g` used to generate the coefficients.
    pub nominal_bandwidth: f64,
}

impl DobFilter {
    /// `Q = g^n/(s+g)^n`.
    pub fn make_lpf(order: u32, g: f64) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::InvalidFilter("order must be at least 1"));
        }
        if !(g > 0.0) || !g.is_finite() {
            return Err(ModelError::InvalidFilter("bandwidth must be positive"));
        }
        let den = Polynomial::linear(g, 1.0).pow(order);
        Ok(Self {
            order,
            den_coeffs: den.coeffs()[..order as usize].to_vec(),
            nominal_bandwidth: g,
        })
    }

    /// Arbitrary coefficients; the filter must be stable.
    pub fn from_coefficients(den_coeffs: Vec<f64>, nominal_bandwidth: f64) -> Result<Self, ModelError> {
        if den_coeffs.is_empty() || !(den_coeffs[0] > 0.0) {
            return Err(ModelError::InvalidFilter("need g0 > 0"));
        }
        let f = Self {
            order: den_coeffs.len() as u32,
            den_coeffs,
            nominal_bandwidth,
        };
        let poles = f.tf().poles()?;
        if poles.iter().any(|p| p.re >= -AXIS_TOL) {
            return Err(ModelError::InvalidFilter("filter poles must be in the open left half-plane"));
        }
        Ok(f)
    }

    pub fn den_poly(&self) -> Polynomial {
        let mut c = self.den_coeffs.clone();
        c.push(1.0);
        Polynomial::from_raw(c)
    }

    pub fn num_poly(&self) -> Polynomial {
        Polynomial::constant(self.den_coeffs[0])
    }

    pub fn tf(&self) -> RationalTF {
        RationalTF::new(self.num_poly(), self.den_poly()).expect("monic")
    }

    /// Pole location `g` of the binomial pattern.
    pub fn pole_parameter(&self) -> f64 {
        self.nominal_bandwidth
    }

    /// `g·sqrt(2^{1/n} - 1)` for the binomial pattern.
    pub fn binomial_cutoff_3db(&self) -> f64 {
        self.nominal_bandwidth * (2f64.powf(1.0 / self.order as f64) - 1.0).sqrt()
    }

    /// Frequency where `|Q| = 1/√2`, by bisection (works for any coefficients).
    pub fn cutoff_3db(&self) -> f64 {
        let q = self.tf();
        let target = std::f64::consts::FRAC_1_SQRT_2;
        let mag = |w: f64| q.eval(Complex64::new(0.0, w)).map(|v| v.norm()).unwrap_or(0.0);
        let mut hi = self.den_coeffs[0].powf(1.0 / self.order as f64).max(1e-12);
        while mag(hi) > target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mag(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Numerator of `1 - Q`, i.e. `den - g0`.
    fn one_minus_num(&self) -> Polynomial {
        self.den_poly().sub(&self.num_poly())
    }
}

/// Outer controller `C` (or the stabilizer `C_s`) and optional prefilter `C_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSet {
    pub outer: RationalTF,
    pub prefilter: Option<RationalTF>,
}

impl ControllerSet {
    /// The outer controller may be improper (PD/PID forms are common); only
    /// `C·G_n` has to be proper, which is checked when the loop is built.
    pub fn new(outer: RationalTF, prefilter: Option<RationalTF>) -> Result<Self, ModelError> {
        if let Some(p) = &prefilter {
            if !p.is_proper() {
                return Err(ModelError::InvalidController("prefilter must be proper"));
            }
            if p.poles()?.iter().any(|z| z.re >= -AXIS_TOL) {
                return Err(ModelError::InvalidController("prefilter must be stable"));
            }
        }
        Ok(Self { outer, prefilter })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    Inner,
    Outer,
}

/// Open loop `L` with its sensitivity `S = 1/(1+L)` and co-sensitivity `T = L/(1+L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSet {
    pub l: QuasiRational,
    pub s: QuasiRational,
    pub t: QuasiRational,
    pub which: LoopKind,
}

impl LoopSet {
    fn from_open_loop(l: QuasiRational, which: LoopKind) -> Self {
        Self {
            s: l.sensitivity(),
            t: l.cosensitivity(),
            l,
            which,
        }
    }
}

/// `G_n (1 + ΔW) e^{-τs}`
pub fn perturbed_plant(p: &PlantModel, delta: f64) -> Result<DelayedTF, ModelError> {
    p.check_delta(delta)?;
    let g = p.nominal.mul(&p.uncertainty_factor(delta));
    Ok(DelayedTF::new(g, p.tau)?)
}

fn term(poly: Polynomial, delay: f64) -> DelayTerm {
    DelayTerm { poly, delay }
}

/// `L_i = Q/(1-Q)·(1+ΔW)·e^{-τs}`, independent of the nominal model.
pub fn inner_loop(p: &PlantModel, q: &DobFilter, delta: f64) -> Result<LoopSet, ModelError> {
    p.check_delta(delta)?;
    let one_minus = q.one_minus_num();
    if one_minus.is_zero() {
        return Err(ModelError::ImproperLoop("1 - Q vanishes identically"));
    }
    let u = p.uncertainty_factor(delta);
    let num = q.num_poly().mul(u.num());
    let den = one_minus.mul(u.den());
    let l = QuasiRational::new(vec![term(num, p.tau)], vec![term(den, 0.0)])?;
    Ok(LoopSet::from_open_loop(l, LoopKind::Inner))
}

/// `L_i = r_err (1+ΔW) Q/(1-Q)` with `r_err = G_n/Ĝ_n` left unreduced.
pub fn approx_inverse_loop(p: &PlantModel, q: &DobFilter, delta: f64) -> Result<LoopSet, ModelError> {
    p.check_delta(delta)?;
    let r = p.model_mismatch()?;
    let one_minus = q.one_minus_num();
    if one_minus.is_zero() {
        return Err(ModelError::ImproperLoop("1 - Q vanishes identically"));
    }
    let u = p.uncertainty_factor(delta);
    let num = r.num().mul(u.num()).mul(&q.num_poly());
    let den = r.den().mul(u.den()).mul(&one_minus);
    let l = QuasiRational::new(vec![term(num, p.tau)], vec![term(den, 0.0)])?;
    Ok(LoopSet::from_open_loop(l, LoopKind::Inner))
}

/// Outer loop seen by `C`. With an approximate nominal model set, the DOB uses
/// `Ĝ_n` and the mismatch `r_err` enters the denominator instead of `e^{-τs}`.
pub fn outer_loop(
    p: &PlantModel,
    q: &DobFilter,
    c: &ControllerSet,
    delta: f64,
) -> Result<LoopSet, ModelError> {
    p.check_delta(delta)?;
    let cg = c.outer.mul(&p.nominal);
    if !c.outer.is_zero() && !cg.is_proper() {
        return Err(ModelError::ImproperLoop("C·G_n is improper"));
    }
    let u = p.uncertainty_factor(delta);
    let (cn, cd) = (c.outer.num(), c.outer.den());
    let (n, d) = (p.nominal.num(), p.nominal.den());
    let (qn, qd) = (q.num_poly(), q.den_poly());
    let one_minus = q.one_minus_num();
    let (un, ud) = (u.num(), u.den());

    let l = match &p.approx_nominal {
        None => {
            // C G_n (1+ΔW) e Q_d / (C_d d [(Q_d - Q_n) U_d + Q_n U_n e])
            let num = cn.mul(n).mul(un).mul(&qd);
            let base = cd.mul(d);
            QuasiRational::new(
                vec![term(num, p.tau)],
                vec![
                    term(base.mul(&one_minus).mul(ud), 0.0),
                    term(base.mul(&qn).mul(un), p.tau),
                ],
            )?
        }
        Some(_) => {
            let r = p.model_mismatch()?;
            let (rn, rd) = (r.num(), r.den());
            // C G / (1 - Q + r (1+ΔW) Q) with every factor over a common denominator.
            let num = cn.mul(n).mul(un).mul(&qd).mul(rd);
            let base = cd.mul(d);
            QuasiRational::new(
                vec![term(num, p.tau)],
                vec![
                    term(base.mul(&one_minus).mul(rd).mul(ud), 0.0),
                    term(base.mul(&qn).mul(rn).mul(un), 0.0),
                ],
            )?
        }
    };
    Ok(LoopSet::from_open_loop(l, LoopKind::Outer))
}

/// Replaces every right-half-plane zero `z` by `-conj(z)`; the magnitude
/// response is unchanged and the DC gain is preserved.
pub fn mirror_approx_nominal(g_n: &RationalTF) -> Result<RationalTF, ModelError> {
    let zeros = g_n.zeros()?;
    if !zeros.iter().any(|z| z.re > AXIS_TOL * z.norm().max(1.0)) {
        return Err(ModelError::NoRhpZero);
    }
    let mut gain = g_n.num().leading();
    let mirrored: Vec<Complex64> = zeros
        .iter()
        .map(|z| {
            if z.re > AXIS_TOL * z.norm().max(1.0) {
                if z.im == 0.0 {
                    gain = -gain;
                }
                -z.conj()
            } else {
                *z
            }
        })
        .collect();
    Ok(RationalTF::new(
        Polynomial::from_roots(&mirrored).scale(gain),
        g_n.den().clone(),
    )?)
}

/// `(L_i, S_i, T_i)` from the unreduced inner-loop formulas:
/// `L_i = Q G/(G_n(1-Q))` (or with `Ĝ_n` when set).
pub fn inner_loop_verbatim_at(
    p: &PlantModel,
    q: &DobFilter,
    delta: f64,
    s: Complex64,
) -> Result<[Complex64; 3], ModelError> {
    let g = perturbed_plant(p, delta)?.eval(s)?;
    let model = p.approx_nominal.as_ref().unwrap_or(&p.nominal).eval(s)?;
    let qv = q.tf().eval(s)?;
    let l = qv * g / (model * (1.0 - qv));
    let one = Complex64::new(1.0, 0.0);
    Ok([l, one / (one + l), l / (one + l)])
}

/// `(L_o, S_o, T_o)` from `L_o = C G / (1 - Q + Q G/G_n)` (or `Ĝ_n`).
pub fn outer_loop_verbatim_at(
    p: &PlantModel,
    q: &DobFilter,
    c: &ControllerSet,
    delta: f64,
    s: Complex64,
) -> Result<[Complex64; 3], ModelError> {
    let g = perturbed_plant(p, delta)?;
    let qv = q.tf().eval(s)?;
    let cv = c.outer.eval(s)?;
    let gv = g.eval(s)?;
    let l = match &p.approx_nominal {
        None => cv * gv / (1.0 - qv + qv * gv / p.nominal.eval(s)?),
        Some(a) => {
            let r = p.nominal.eval(s)? / a.eval(s)?;
            let undelayed = g.rational.eval(s)? / p.nominal.eval(s)?;
            cv * gv / (1.0 - qv + r * undelayed * qv)
        }
    };
    let one = Complex64::new(1.0, 0.0);
    Ok([l, one / (one + l), l / (one + l)])
}
