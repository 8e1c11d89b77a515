use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Relative tolerance used when trimming externally supplied coefficient lists.
pub const TRIM_REL_TOL: f64 = 1e-12;

/// Real polynomial, coefficients stored in ascending powers (`coeffs[k]` multiplies `s^k`).
///
/// The zero polynomial is stored as `[0.0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial from ascending coefficients, dropping trailing
    /// coefficients below `1e-12` relative to the largest one.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut coeffs = coeffs;
        while coeffs.len() > 1 {
            let last = *coeffs.last().unwrap();
            if last.abs() <= TRIM_REL_TOL * max {
                coeffs.pop();
            } else {
                break;
            }
        }
        Self::from_raw(coeffs)
    }

    /// Builds from descending coefficients (`[1, 5, 6]` is `s^2 + 5s + 6`).
    pub fn from_descending(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().rev().copied().collect())
    }

    /// Only exact trailing zeros are removed. Arithmetic results go through here:
    /// products of high-bandwidth binomials legitimately span more than 12 decades.
    pub(crate) fn from_raw(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// `a0 + a1 s`
    pub fn linear(a0: f64, a1: f64) -> Self {
        Self::from_raw(vec![a0, a1])
    }

    /// `s^n`
    pub fn monomial(n: usize) -> Self {
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        Self { coeffs: c }
    }

    /// Monic polynomial with the given roots. Complex roots must come in conjugate
    /// pairs; imaginary residue of the product is discarded.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
            for (k, a) in acc.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= a * r;
            }
            acc = next;
        }
        Self::from_raw(acc.into_iter().map(|c| c.re).collect())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficients in descending powers.
    pub fn descending(&self) -> Vec<f64> {
        self.coeffs.iter().rev().copied().collect()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    /// Coefficient of `s^k` (zero past the degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Horner evaluation.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * s + c;
        }
        acc
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `Σ |c_k| |s|^k`, the natural scale for judging `|p(s)|` against rounding.
    pub fn abs_scale(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.abs())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_raw(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::from_raw((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::from_raw((0..n).map(|k| self.coeff(k) - other.coeff(k)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::from_raw(out)
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::one(), |acc, _| acc.mul(self))
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::zero();
        }
        Self::from_raw(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    /// `p(-s)`
    pub fn mirror(&self) -> Self {
        Self::from_raw(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| if k % 2 == 1 { -c } else { *c })
                .collect(),
        )
    }

    /// Polynomial long division. Panics on a zero divisor.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        let dd = divisor.degree();
        if self.degree() < dd {
            return (Self::zero(), self.clone());
        }
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; self.degree() - dd + 1];
        for k in (0..quot.len()).rev() {
            let q = rem[k + dd] / lead;
            quot[k] = q;
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= q * d;
            }
            rem[k + dd] = 0.0;
        }
        rem.truncate(dd.max(1));
        (Self::from_raw(quot), Self::from_raw(rem))
    }

    /// Number of roots at exactly `s = 0`.
    pub fn zero_root_multiplicity(&self) -> usize {
        if self.is_zero() {
            return 0;
        }
        self.coeffs.iter().take_while(|c| **c == 0.0).count()
    }
}
