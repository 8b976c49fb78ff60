//! Polynomials with exact rational coefficients, and Chebyshev series on
//! `[0, K²]` that convert to them without rounding.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::ring::{int, Rational};

/// `Σ c_i μ^i`, coefficients ascending, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Polynomial {
    coeffs: Vec<Rational>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn constant(c: Rational) -> Self {
        Self::new(vec![c])
    }

    /// `μ^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![Rational::zero(); k + 1];
        c[k] = int(1);
        Self { coeffs: c }
    }

    pub fn from_ints(c: &[i64]) -> Self {
        Self::new(c.iter().map(|&x| int(x)).collect())
    }

    pub fn coefficients(&self) -> &[Rational] {
        &self.coeffs
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval_exact(&self, x: &Rational) -> Rational {
        self.coeffs.iter().rev().fold(Rational::zero(), |acc, c| acc * x + c)
    }

    /// Horner in `f64`; fine for low degree, use [`ChebyshevSeries`] otherwise.
    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64().unwrap_or(f64::NAN))
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![Rational::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        Self::new(out)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Self::default();
        }
        let mut out = vec![Rational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn scale(&self, s: &Rational) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }
}

/// Number of fractional bits kept in Chebyshev coefficients.
pub const COEFFICIENT_BITS: i32 = 40;

/// `Σ c_m T_m(2μ/K² − 1)` on `μ ∈ [0, K²]`. The coefficients are dyadic
/// rationals, so the `f64` values and the exact polynomial agree.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevSeries {
    coeffs: Vec<f64>,
    k_squared: Rational,
    k_squared_f64: f64,
}

impl ChebyshevSeries {
    /// Interpolates `f` at the `degree + 1` Chebyshev–Gauss nodes of `[0, K²]`.
    pub fn interpolate(f: impl Fn(f64) -> f64, degree: usize, k_squared: &Rational) -> Self {
        let ks = k_squared.to_f64().unwrap();
        let n = degree + 1;
        let nodes: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                let x = theta.cos();
                (theta, f((x + 1.0) * ks / 2.0))
            })
            .collect();
        let scale = (2f64).powi(COEFFICIENT_BITS);
        let coeffs = (0..n)
            .map(|m| {
                let s: f64 = nodes.iter().map(|(t, y)| y * (m as f64 * t).cos()).sum();
                let c = if m == 0 { s / n as f64 } else { 2.0 * s / n as f64 };
                (c * scale).round() / scale
            })
            .collect();
        Self { coeffs, k_squared: k_squared.clone(), k_squared_f64: ks }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, mu: f64) -> f64 {
        let x = 2.0 * mu / self.k_squared_f64 - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs.first().copied().unwrap_or(0.0) + x * b1 - b2
    }

    /// The same polynomial in the monomial basis, exactly.
    pub fn to_polynomial(&self) -> Polynomial {
        let denom = BigInt::from(1u64) << COEFFICIENT_BITS as usize;
        let x = Polynomial::new(vec![int(-1), int(2) / &self.k_squared]);
        let mut prev = Polynomial::constant(int(1));
        let mut cur = x.clone();
        let mut acc = Polynomial::default();
        let two_x = x.scale(&int(2));
        for (m, &c) in self.coeffs.iter().enumerate() {
            let basis = match m {
                0 => prev.clone(),
                1 => cur.clone(),
                _ => {
                    let next = two_x.mul(&cur).add(&prev.scale(&int(-1)));
                    prev = std::mem::replace(&mut cur, next);
                    cur.clone()
                }
            };
            if c != 0.0 {
                let num = BigInt::from((c * (2f64).powi(COEFFICIENT_BITS)) as i64);
                acc = acc.add(&basis.scale(&BigRational::new(num, denom.clone())));
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_float_evaluation_agree() {
        let p = Polynomial::from_ints(&[1, -2, 3]);
        assert_eq!(p.eval_exact(&int(2)), int(9));
        assert_eq!(p.eval_f64(2.0), 9.0);
        assert_eq!(Polynomial::from_ints(&[0, 0]).degree(), None);
    }

    #[test]
    fn chebyshev_interpolates_polynomials_exactly() {
        // μ² on [0, 16] is reproduced by a degree-2 interpolant
        let ks = int(16);
        let s = ChebyshevSeries::interpolate(|m| m * m, 4, &ks);
        for mu in [0.0, 1.5, 7.0, 16.0] {
            assert!((s.eval(mu) - mu * mu).abs() < 1e-9);
        }
        let p = s.to_polynomial();
        for mu in [0.0, 3.0, 10.0] {
            assert!((p.eval_f64(mu) - s.eval(mu)).abs() < 1e-8);
        }
    }

    #[test]
    fn monomial_conversion_is_exact() {
        let ks = int(16);
        let s = ChebyshevSeries::interpolate(|m| (m / 3.0).sin(), 25, &ks);
        let p = s.to_polynomial();
        for mu in [0.25, 2.0, 9.5, 15.0] {
            let exact = p.eval_exact(&BigRational::from_float(mu).unwrap()).to_f64().unwrap();
            assert!((exact - s.eval(mu)).abs() < 1e-10, "{mu}: {exact} vs {}", s.eval(mu));
        }
    }
}
