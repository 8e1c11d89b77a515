//! Polynomial root finding via balanced companion-matrix eigenvalues.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use super::{Polynomial, TfError};

const RESIDUAL_TOL: f64 = 1e-8;

/// All roots of `p`, conjugate pairs exact, sorted by (re, im).
///
/// Roots at the origin are peeled off exactly before the eigen solve.
pub fn roots(p: &Polynomial) -> Result<Vec<Complex64>, TfError> {
    if p.is_zero() {
        return Err(TfError::ZeroPolynomial);
    }
    let zeros_at_origin = p.zero_root_multiplicity();
    let reduced: Vec<f64> = p.coeffs()[zeros_at_origin..].to_vec();
    let n = reduced.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); zeros_at_origin];
    if n == 0 {
        return Ok(out);
    }
    let lead = reduced[n];
    let monic: Vec<f64> = reduced.iter().map(|c| c / lead).collect();
    let reduced_poly = Polynomial::from_raw(reduced);

    let raw = if n == 1 {
        vec![Complex64::new(-monic[0], 0.0)]
    } else {
        companion_eigenvalues(&monic)?
    };

    // Keep one member of each conjugate pair, polish, then mirror.
    let deriv = reduced_poly.derivative();
    for z in raw {
        if z.im < 0.0 {
            continue;
        }
        let polished = polish(&reduced_poly, &deriv, z);
        if polished.im == 0.0 || z.im == 0.0 {
            out.push(Complex64::new(polished.re, 0.0));
        } else {
            out.push(polished);
            out.push(polished.conj());
        }
    }
    if out.len() != p.degree() {
        return Err(TfError::NoConvergence("eigenvalues not in conjugate pairs"));
    }
    for z in &out {
        let scale = p.max_abs_coeff() * z.norm().max(1.0).powi(p.degree() as i32);
        if p.eval(*z).norm() > RESIDUAL_TOL * scale {
            return Err(TfError::NoConvergence("root residual above tolerance"));
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

fn companion_eigenvalues(monic: &[f64]) -> Result<Vec<Complex64>, TfError> {
    let n = monic.len() - 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -monic[i];
    }
    balance(&mut m);
    let schur = Schur::try_new(m, f64::EPSILON, 10_000)
        .ok_or(TfError::NoConvergence("Schur iteration did not converge"))?;
    let ev = schur.complex_eigenvalues();
    Ok(ev.iter().copied().collect())
}

/// Parlett–Reinsch balancing with power-of-two scalings.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let mut g = r / radix;
            while cc < g {
                f *= radix;
                cc *= radix * radix;
            }
            g = r * radix;
            while cc > g {
                f /= radix;
                cc /= radix * radix;
            }
            if (cc + r / f) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// One guarded Newton step; kept only if it reduces the residual.
fn polish(p: &Polynomial, dp: &Polynomial, z: Complex64) -> Complex64 {
    let fz = p.eval(z);
    let dz = dp.eval(z);
    if dz.norm() == 0.0 || !dz.is_finite() {
        return z;
    }
    let mut cand = z - fz / dz;
    if z.im == 0.0 {
        cand.im = 0.0;
    }
    if cand.is_finite() && p.eval(cand).norm() < fz.norm() {
        cand
    } else {
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_roots() {
        let r = roots(&Polynomial::from_descending(&[1.0, 5.0, 6.0])).unwrap();
        assert!((r[0] - c(-3.0, 0.0)).norm() < 1e-12);
        assert!((r[1] - c(-2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn complex_pair_is_exact_conjugate() {
        // s^2 + 7 s + 20
        let r = roots(&Polynomial::from_descending(&[1.0, 7.0, 20.0])).unwrap();
        assert_eq!(r[0], r[1].conj());
        assert!((r[1] - c(-3.5, (20.0f64 - 12.25).sqrt())).norm() < 1e-12);
    }

    #[test]
    fn origin_roots_are_exact() {
        let p = Polynomial::from_descending(&[1.0, -5.0, 0.0]);
        let r = roots(&p).unwrap();
        assert!(r.contains(&c(0.0, 0.0)));
        assert!(r.iter().any(|z| (z - c(5.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn wide_range_binomial() {
        let p = Polynomial::linear(1500.0, 1.0).mul(&Polynomial::linear(100.0, 1.0).pow(2));
        let r = roots(&p).unwrap();
        assert_eq!(r.len(), 3);
        assert!((r[0].re + 1500.0).abs() < 1e-6);
        assert!((r[1].re + 100.0).abs() < 1e-4 && (r[2].re + 100.0).abs() < 1e-4);
    }

    #[test]
    fn zero_polynomial_errors() {
        assert!(matches!(roots(&Polynomial::zero()), Err(TfError::ZeroPolynomial)));
    }
}
