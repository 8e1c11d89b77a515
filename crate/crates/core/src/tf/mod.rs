//! Transfer-function primitives: polynomials, rational and delayed systems,
//! frequency responses, classification and Blaschke products.

mod polynomial;
mod rational;
mod roots;

pub use polynomial::{Polynomial, TRIM_REL_TOL};
pub use rational::{
    compose, Cancellation, ComposeOp, DelayTerm, DelayedTF, FrequencyResponse, QuasiRational,
    RationalTF, POLE_HIT_REL_TOL,
};
pub use roots::roots;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TfError {
    #[error("denominator is the zero polynomial")]
    ZeroDenominator,
    #[error("root finding on the zero polynomial")]
    ZeroPolynomial,
    #[error("evaluation at a pole: s = {re} + {im}j")]
    PoleHit { re: f64, im: f64 },
    #[error("root finder did not converge: {0}")]
    NoConvergence(&'static str),
    #[error("negative or non-finite delay {0}")]
    NegativeDelay(f64),
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(&'static str),
    #[error("Blaschke point {re} + {im}j is not in the open right half-plane")]
    NotRightHalfPlane { re: f64, im: f64 },
}

/// Tolerance for deciding that a pole or zero sits on the imaginary axis.
pub const AXIS_TOL: f64 = 1e-9;

/// Samples of `G(jw)` on a frequency grid. Points that landed on a pole are
/// flagged and carry `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexResponse {
    pub grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub pole_hits: Vec<bool>,
}

impl ComplexResponse {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Largest finite magnitude and where it occurs.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.grid
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(w, v)| (*w, v.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Evaluates `g` at `jw` for every grid point. The grid must be finite,
/// non-negative and strictly increasing.
pub fn freq_response<G: FrequencyResponse + ?Sized>(
    g: &G,
    grid: &[f64],
) -> Result<ComplexResponse, TfError> {
    validate_grid(grid)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut pole_hits = Vec::with_capacity(grid.len());
    for &w in grid {
        match g.response_at(Complex64::new(0.0, w)) {
            Ok(v) => {
                values.push(v);
                pole_hits.push(false);
            }
            Err(TfError::PoleHit { .. }) => {
                values.push(Complex64::new(f64::NAN, f64::NAN));
                pole_hits.push(true);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ComplexResponse {
        grid: grid.to_vec(),
        values,
        pole_hits,
    })
}

pub fn validate_grid(grid: &[f64]) -> Result<(), TfError> {
    if grid.iter().any(|w| !w.is_finite()) {
        return Err(TfError::InvalidGrid("non-finite frequency"));
    }
    if grid.iter().any(|w| *w < 0.0) {
        return Err(TfError::InvalidGrid("negative frequency"));
    }
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(TfError::InvalidGrid("grid not strictly increasing"));
    }
    Ok(())
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Pole/zero bookkeeping that decides which bandwidth result applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub rhp_zeros: Vec<[f64; 2]>,
    pub rhp_poles: Vec<[f64; 2]>,
    pub imag_axis_zeros: Vec<[f64; 2]>,
    pub imag_axis_poles: Vec<[f64; 2]>,
    pub delay: f64,
    pub relative_degree: i64,
}

impl Classification {
    pub fn is_minimum_phase(&self) -> bool {
        self.rhp_zeros.is_empty() && self.delay == 0.0
    }

    pub fn has_rhp_pole(&self) -> bool {
        !self.rhp_poles.is_empty()
    }

    pub fn has_rhp_zero(&self) -> bool {
        !self.rhp_zeros.is_empty()
    }

    pub fn has_delay(&self) -> bool {
        self.delay > 0.0
    }
}

fn split(points: &[Complex64]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let mut rhp = Vec::new();
    let mut axis = Vec::new();
    for z in points {
        if z.re.abs() <= AXIS_TOL * z.norm().max(1.0) {
            axis.push([z.re, z.im]);
        } else if z.re > 0.0 {
            rhp.push([z.re, z.im]);
        }
    }
    (rhp, axis)
}

pub fn classify(g: &DelayedTF) -> Result<Classification, TfError> {
    let (rhp_zeros, imag_axis_zeros) = split(&g.rational.zeros()?);
    let (rhp_poles, imag_axis_poles) = split(&g.rational.poles()?);
    Ok(Classification {
        rhp_zeros,
        rhp_poles,
        imag_axis_zeros,
        imag_axis_poles,
        delay: g.tau,
        relative_degree: g.rational.relative_degree(),
    })
}

/// `Π (p_i - s)/(p̄_i + s)` over open right-half-plane points. Complex points
/// must be supplied together with their conjugates; the empty product is `1`.
pub fn blaschke(points: &[Complex64]) -> Result<RationalTF, TfError> {
    for p in points {
        if !(p.re > 0.0) {
            return Err(TfError::NotRightHalfPlane { re: p.re, im: p.im });
        }
    }
    let mut used = vec![false; points.len()];
    let mut num = Polynomial::one();
    let mut den = Polynomial::one();
    for i in 0..points.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let p = points[i];
        if p.im == 0.0 {
            num = num.mul(&Polynomial::linear(p.re, -1.0));
            den = den.mul(&Polynomial::linear(p.re, 1.0));
            continue;
        }
        let partner = (0..points.len())
            .find(|&k| !used[k] && (points[k] - p.conj()).norm() <= 1e-12 * p.norm())
            .ok_or(TfError::NotRightHalfPlane { re: p.re, im: p.im })?;
        used[partner] = true;
        let m2 = p.norm_sqr();
        num = num.mul(&Polynomial::from_raw(vec![m2, -2.0 * p.re, 1.0]));
        den = den.mul(&Polynomial::from_raw(vec![m2, 2.0 * p.re, 1.0]));
    }
    RationalTF::new(num, den)
}
