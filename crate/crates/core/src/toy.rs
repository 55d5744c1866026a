//! The zero-dimensional model `Z(lambda) = int exp(-x^2 - lambda x^4) dx` and
//! its divergent Gaussian-moment series
//! `sum_n (-lambda)^n / n! (4n - 1)!! sqrt(pi) / 2^{2n}`.

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

pub const MAX_TERMS: usize = 200;
/// Relative accuracy demanded of the quadrature.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ToyError {
    #[error("lambda must be non-negative and finite (got {0})")]
    Lambda(f64),
    #[error("at most {MAX_TERMS} series terms are supported (asked for {0})")]
    TooManyTerms(usize),
    #[error("quadrature error estimate {estimate:e} exceeds the tolerance")]
    Quadrature { estimate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTerm {
    pub n: usize,
    pub value: f64,
    pub log_magnitude: f64,
    pub partial_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyReport {
    pub lambda: f64,
    pub z: f64,
    pub z_error: f64,
    pub terms: Vec<ToyTerm>,
    /// First `n` with `|term_{n+1}| > |term_n|`.
    pub crossover: Option<usize>,
}

/// Natural log of a big integer, exact to double precision.
pub fn big_ln(b: &BigUint) -> f64 {
    let bits = b.bits();
    if bits <= 64 {
        let v: u64 = b.iter_u64_digits().next().unwrap_or(0);
        return (v as f64).ln();
    }
    let shift = bits - 64;
    let top: u64 = (b >> shift).iter_u64_digits().next().unwrap_or(0);
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

/// `(2m - 1)!!` with `(-1)!! = 1`.
pub fn odd_double_factorial(m: usize) -> BigUint {
    (1..m).fold(BigUint::one(), |acc, i| acc * BigUint::from(2 * i + 1))
}

fn factorial(n: usize) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// `Z(lambda)` by double-exponential quadrature on `[0, 7]`, doubled.
pub fn partition_function(lambda: f64) -> Result<(f64, f64), ToyError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ToyError::Lambda(lambda));
    }
    let out = quadrature::double_exponential::integrate(
        |x: f64| {
            let x2 = x * x;
            (-x2 - lambda * x2 * x2).exp()
        },
        0.0,
        7.0,
        1e-14,
    );
    let z = 2.0 * out.integral;
    let err = 2.0 * out.error_estimate;
    if !(err <= QUAD_TOL * z) {
        return Err(ToyError::Quadrature { estimate: err });
    }
    Ok((z, err))
}

/// Terms `n = 0 .. n_terms` of the Gaussian-moment series.
pub fn series_terms(lambda: f64, n_terms: usize) -> Result<Vec<ToyTerm>, ToyError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ToyError::Lambda(lambda));
    }
    if n_terms > MAX_TERMS {
        return Err(ToyError::TooManyTerms(n_terms));
    }
    let half_ln_pi = 0.5 * std::f64::consts::PI.ln();
    let mut partial = 0.0;
    let mut out = Vec::with_capacity(n_terms);
    for n in 0..n_terms {
        let log_mag = if n == 0 {
            half_ln_pi
        } else if lambda == 0.0 {
            f64::NEG_INFINITY
        } else {
            n as f64 * lambda.ln() - big_ln(&factorial(n)) + big_ln(&odd_double_factorial(2 * n))
                + half_ln_pi
                - 2.0 * n as f64 * std::f64::consts::LN_2
        };
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let value = sign * log_mag.exp();
        partial += value;
        out.push(ToyTerm {
            n,
            value,
            log_magnitude: log_mag,
            partial_sum: partial,
        });
    }
    Ok(out)
}

pub fn run_toy(lambda: f64, n_terms: usize) -> Result<ToyReport, ToyError> {
    let (z, z_error) = partition_function(lambda)?;
    let terms = series_terms(lambda, n_terms)?;
    let crossover = terms
        .windows(2)
        .find(|w| w[1].log_magnitude > w[0].log_magnitude)
        .map(|w| w[0].n);
    Ok(ToyReport {
        lambda,
        z,
        z_error,
        terms,
        crossover,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn double_factorials() {
        assert_eq!(odd_double_factorial(0), BigUint::one());
        assert_eq!(odd_double_factorial(2), BigUint::from(3u32));
        assert_eq!(odd_double_factorial(4), BigUint::from(105u32));
        let big = odd_double_factorial(400);
        // ln((2m-1)!!) = ln((2m)!) - m ln 2 - ln(m!)
        let want = big_ln(&factorial(800)) - 400.0 * std::f64::consts::LN_2 - big_ln(&factorial(400));
        assert_relative_eq!(big_ln(&big), want, max_relative = 1e-14);
        assert_relative_eq!(big_ln(&BigUint::from(1000u32)), 1000f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn gaussian_limit() {
        let (z, _) = partition_function(0.0).unwrap();
        assert_relative_eq!(z, std::f64::consts::PI.sqrt(), max_relative = 1e-12);
        let t = series_terms(0.0, 3).unwrap();
        assert_eq!(t[1].value, 0.0);
        assert_relative_eq!(t[2].partial_sum, std::f64::consts::PI.sqrt());
    }

    #[test]
    fn first_terms_are_gaussian_moments() {
        // term 1 = -lambda E[x^4] sqrt(pi) with E[x^4] = 3/4 under exp(-x^2)
        let t = series_terms(0.01, 3).unwrap();
        let sp = std::f64::consts::PI.sqrt();
        assert_relative_eq!(t[1].value, -0.01 * 0.75 * sp, max_relative = 1e-14);
        // term 2 = lambda^2/2 * 7!!/16 sqrt(pi)
        assert_relative_eq!(t[2].value, 1e-4 / 2.0 * 105.0 / 16.0 * sp, max_relative = 1e-14);
    }

    #[test]
    fn series_is_asymptotic_then_diverges() {
        let r = run_toy(0.01, 120).unwrap();
        let c = r.crossover.unwrap();
        assert!((20..=30).contains(&c), "{c}");
        let best = r.terms[c].partial_sum;
        assert!((best - r.z).abs() < 1e-8);
        assert!(r.terms[119].value.abs() > 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(run_toy(-0.1, 5).unwrap_err(), ToyError::Lambda(-0.1));
        assert_eq!(run_toy(0.1, 201).unwrap_err(), ToyError::TooManyTerms(201));
    }

    #[test]
    fn quadrature_matches_series_for_tiny_lambda() {
        let lambda = 1e-4;
        let r = run_toy(lambda, 8).unwrap();
        assert_relative_eq!(r.z, r.terms[7].partial_sum, max_relative = 1e-12);
    }
}
