use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{roots, Polynomial, TfError};

/// `|den(s)|` at or below this fraction of `Σ|d_k||s|^k` counts as a pole hit.
pub const POLE_HIT_REL_TOL: f64 = 1e-14;

/// Anything that can be evaluated at a point of the complex plane.
pub trait FrequencyResponse {
    fn response_at(&self, s: Complex64) -> Result<Complex64, TfError>;
}

/// Ratio of real polynomials with a monic denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTF {
    num: Polynomial,
    den: Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComposeOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Result of [`RationalTF::cancel`]: the reduced system plus every removed pair.
#[derive(Debug, Clone)]
pub struct Cancellation {
    pub tf: RationalTF,
    /// `(zero, pole)` pairs that were cancelled.
    pub removed: Vec<(Complex64, Complex64)>,
}

impl RationalTF {
    /// Normalizes the denominator to be monic. Fails on a zero denominator.
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, TfError> {
        if den.is_zero() {
            return Err(TfError::ZeroDenominator);
        }
        let lead = den.leading();
        Ok(Self {
            num: num.scale(1.0 / lead),
            den: den.scale(1.0 / lead),
        })
    }

    /// From descending coefficient lists, the way transfer functions are usually written.
    pub fn from_descending(num: &[f64], den: &[f64]) -> Result<Self, TfError> {
        Self::new(Polynomial::from_descending(num), Polynomial::from_descending(den))
    }

    pub fn constant(k: f64) -> Self {
        Self {
            num: Polynomial::constant(k),
            den: Polynomial::one(),
        }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Pure integrator `k/s`.
    pub fn integrator(k: f64) -> Self {
        Self {
            num: Polynomial::constant(k),
            den: Polynomial::monomial(1),
        }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// `deg(den) - deg(num)`; the zero function counts as infinitely proper.
    pub fn relative_degree(&self) -> i64 {
        if self.num.is_zero() {
            return i64::MAX;
        }
        self.den.degree() as i64 - self.num.degree() as i64
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree() >= 0
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.relative_degree() >= 1
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64, TfError> {
        let d = self.den.eval(s);
        if d.norm() <= POLE_HIT_REL_TOL * self.den.abs_scale(s.norm()) {
            return Err(TfError::PoleHit { re: s.re, im: s.im });
        }
        Ok(self.num.eval(s) / d)
    }

    /// `lim_{s→∞} s^r G(s)` with `r` the relative degree.
    pub fn high_frequency_gain(&self) -> f64 {
        if self.num.is_zero() {
            0.0
        } else {
            self.num.leading() / self.den.leading()
        }
    }

    pub fn dc_gain(&self) -> Result<f64, TfError> {
        Ok(self.eval(Complex64::new(0.0, 0.0))?.re)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>, TfError> {
        roots(&self.den)
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>, TfError> {
        if self.num.is_zero() {
            return Ok(Vec::new());
        }
        roots(&self.num)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            num: self.num.scale(k),
            den: self.den.clone(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        compose(self, o, ComposeOp::Add).expect("sum of valid systems")
    }

    pub fn sub(&self, o: &Self) -> Self {
        compose(self, o, ComposeOp::Sub).expect("difference of valid systems")
    }

    pub fn mul(&self, o: &Self) -> Self {
        compose(self, o, ComposeOp::Mul).expect("product of valid systems")
    }

    pub fn div(&self, o: &Self) -> Result<Self, TfError> {
        compose(self, o, ComposeOp::Div)
    }

    pub fn inverse(&self) -> Result<Self, TfError> {
        Self::new(self.den.clone(), self.num.clone())
    }

    /// Unity negative feedback `G/(1+G)`.
    pub fn feedback(&self) -> Result<Self, TfError> {
        Self::new(self.num.clone(), self.den.add(&self.num))
    }

    /// Removes zero/pole pairs closer than `tol` (relative to `max(1, |pole|)`).
    /// Never called implicitly by arithmetic.
    pub fn cancel(&self, tol: f64) -> Result<Cancellation, TfError> {
        let mut zeros = self.zeros()?;
        let mut poles = self.poles()?;
        let mut removed = Vec::new();
        let mut i = 0;
        while i < poles.len() {
            let p = poles[i];
            let best = zeros
                .iter()
                .enumerate()
                .map(|(k, z)| (k, (z - p).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((k, d)) if d <= tol * p.norm().max(1.0) => {
                    removed.push((zeros.remove(k), poles.remove(i)));
                }
                _ => i += 1,
            }
        }
        if removed.is_empty() {
            return Ok(Cancellation {
                tf: self.clone(),
                removed,
            });
        }
        let gain = self.high_frequency_gain();
        let num = if self.num.is_zero() {
            Polynomial::zero()
        } else {
            Polynomial::from_roots(&zeros).scale(gain)
        };
        let tf = Self::new(num, Polynomial::from_roots(&poles))?;
        Ok(Cancellation { tf, removed })
    }
}

impl FrequencyResponse for RationalTF {
    fn response_at(&self, s: Complex64) -> Result<Complex64, TfError> {
        self.eval(s)
    }
}

/// Series/parallel composition without cancellation.
pub fn compose(a: &RationalTF, b: &RationalTF, op: ComposeOp) -> Result<RationalTF, TfError> {
    match op {
        ComposeOp::Add | ComposeOp::Sub => {
            let combine = |x: &Polynomial, y: &Polynomial| {
                if op == ComposeOp::Add {
                    x.add(y)
                } else {
                    x.sub(y)
                }
            };
            // Shared denominators are common (same filter on both sides); avoid squaring them.
            if a.den == b.den {
                return RationalTF::new(combine(&a.num, &b.num), a.den.clone());
            }
            let num = combine(&a.num.mul(&b.den), &b.num.mul(&a.den));
            RationalTF::new(num, a.den.mul(&b.den))
        }
        ComposeOp::Mul => RationalTF::new(a.num.mul(&b.num), a.den.mul(&b.den)),
        ComposeOp::Div => {
            if b.num.is_zero() {
                return Err(TfError::ZeroDenominator);
            }
            RationalTF::new(a.num.mul(&b.den), a.den.mul(&b.num))
        }
    }
}

/// `G(s) e^{-τ s}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedTF {
    pub rational: RationalTF,
    pub tau: f64,
}

impl DelayedTF {
    pub fn new(rational: RationalTF, tau: f64) -> Result<Self, TfError> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(TfError::NegativeDelay(tau));
        }
        Ok(Self { rational, tau })
    }

    pub fn undelayed(rational: RationalTF) -> Self {
        Self { rational, tau: 0.0 }
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64, TfError> {
        let g = self.rational.eval(s)?;
        if self.tau == 0.0 {
            Ok(g)
        } else {
            Ok(g * (-self.tau * s).exp())
        }
    }
}

impl FrequencyResponse for DelayedTF {
    fn response_at(&self, s: Complex64) -> Result<Complex64, TfError> {
        self.eval(s)
    }
}

/// Polynomial multiplied by a pure delay, one summand of a [`QuasiRational`].
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTerm {
    pub poly: Polynomial,
    pub delay: f64,
}

impl DelayTerm {
    fn eval(&self, s: Complex64) -> Complex64 {
        let v = self.poly.eval(s);
        if self.delay == 0.0 {
            v
        } else {
            v * (-self.delay * s).exp()
        }
    }

    fn scale_at(&self, s: Complex64) -> f64 {
        let mag = if self.delay == 0.0 {
            1.0
        } else {
            (-self.delay * s.re).exp()
        };
        self.poly.abs_scale(s.norm()) * mag
    }
}

/// `Σ n_i(s) e^{-a_i s} / Σ d_j(s) e^{-b_j s}`.
///
/// Closing a loop around a delayed plant gives sensitivities of this shape; they are
/// not rational and not a single delayed rational either.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiRational {
    num: Vec<DelayTerm>,
    den: Vec<DelayTerm>,
}

impl QuasiRational {
    pub fn new(num: Vec<DelayTerm>, den: Vec<DelayTerm>) -> Result<Self, TfError> {
        if den.iter().all(|t| t.poly.is_zero()) {
            return Err(TfError::ZeroDenominator);
        }
        if num.iter().chain(den.iter()).any(|t| !(t.delay >= 0.0)) {
            return Err(TfError::NegativeDelay(f64::NAN));
        }
        Ok(Self {
            num: collect_terms(num),
            den: collect_terms(den),
        })
    }

    pub fn from_rational(g: &RationalTF) -> Self {
        Self {
            num: vec![DelayTerm {
                poly: g.num().clone(),
                delay: 0.0,
            }],
            den: vec![DelayTerm {
                poly: g.den().clone(),
                delay: 0.0,
            }],
        }
    }

    pub fn from_delayed(g: &DelayedTF) -> Self {
        Self {
            num: vec![DelayTerm {
                poly: g.rational.num().clone(),
                delay: g.tau,
            }],
            den: vec![DelayTerm {
                poly: g.rational.den().clone(),
                delay: 0.0,
            }],
        }
    }

    pub fn num_terms(&self) -> &[DelayTerm] {
        &self.num
    }

    pub fn den_terms(&self) -> &[DelayTerm] {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|t| t.poly.is_zero())
    }

    pub fn max_delay(&self) -> f64 {
        self.num
            .iter()
            .chain(self.den.iter())
            .fold(0.0, |m, t| m.max(t.delay))
    }

    pub fn has_delay(&self) -> bool {
        self.max_delay() > 0.0
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64, TfError> {
        let d: Complex64 = self.den.iter().map(|t| t.eval(s)).sum();
        let scale: f64 = self.den.iter().map(|t| t.scale_at(s)).sum();
        if d.norm() <= POLE_HIT_REL_TOL * scale {
            return Err(TfError::PoleHit { re: s.re, im: s.im });
        }
        let n: Complex64 = self.num.iter().map(|t| t.eval(s)).sum();
        Ok(n / d)
    }

    /// Numerator and denominator separately (no division), for log-magnitude work.
    pub fn eval_parts(&self, s: Complex64) -> (Complex64, Complex64) {
        (
            self.num.iter().map(|t| t.eval(s)).sum(),
            self.den.iter().map(|t| t.eval(s)).sum(),
        )
    }

    /// `1/(1+L)` viewing `self` as the open loop `L`.
    pub fn sensitivity(&self) -> Self {
        let mut den = self.den.clone();
        den.extend(self.num.iter().cloned());
        Self {
            num: self.den.clone(),
            den: collect_terms(den),
        }
    }

    /// `L/(1+L)`
    pub fn cosensitivity(&self) -> Self {
        let mut den = self.den.clone();
        den.extend(self.num.iter().cloned());
        Self {
            num: self.num.clone(),
            den: collect_terms(den),
        }
    }

    /// Sum of all numerator polynomials; for delay-free systems this is the numerator.
    pub fn num_poly_sum(&self) -> Polynomial {
        self.num
            .iter()
            .fold(Polynomial::zero(), |acc, t| acc.add(&t.poly))
    }

    pub fn den_poly_sum(&self) -> Polynomial {
        self.den
            .iter()
            .fold(Polynomial::zero(), |acc, t| acc.add(&t.poly))
    }

    /// Exact conversion when every term is delay-free.
    pub fn to_rational(&self) -> Option<RationalTF> {
        if self.has_delay() {
            return None;
        }
        RationalTF::new(self.num_poly_sum(), self.den_poly_sum()).ok()
    }

    /// Degree of the highest numerator/denominator terms; relative degree of the
    /// rational envelope.
    pub fn relative_degree(&self) -> i64 {
        let dn = self
            .num
            .iter()
            .filter(|t| !t.poly.is_zero())
            .map(|t| t.poly.degree() as i64)
            .max();
        let dd = self.den.iter().map(|t| t.poly.degree() as i64).max().unwrap_or(0);
        match dn {
            Some(dn) => dd - dn,
            None => i64::MAX,
        }
    }
}

impl FrequencyResponse for QuasiRational {
    fn response_at(&self, s: Complex64) -> Result<Complex64, TfError> {
        self.eval(s)
    }
}

/// Merges terms sharing a delay, in first-appearance order.
fn collect_terms(terms: Vec<DelayTerm>) -> Vec<DelayTerm> {
    let mut out: Vec<DelayTerm> = Vec::new();
    for t in terms {
        if let Some(e) = out.iter_mut().find(|e| e.delay == t.delay) {
            e.poly = e.poly.add(&t.poly);
        } else {
            out.push(t);
        }
    }
    if out.len() > 1 {
        out.retain(|t| !t.poly.is_zero());
        if out.is_empty() {
            out.push(DelayTerm {
                poly: Polynomial::zero(),
                delay: 0.0,
            });
        }
    }
    out
}
