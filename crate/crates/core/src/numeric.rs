//! Small numeric helpers: base-2 log-sum-exp, slope fitting, exact rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// log2(sum of 2^x for x in terms), stable for widely spread magnitudes.
/// Returns -inf for an empty list.
pub fn log2_sum_exp2(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms.iter().map(|&x| (x - m).exp2()).sum();
    m + s.log2()
}

/// Accumulator variant of [`log2_sum_exp2`] for long streams.
#[derive(Debug, Default, Clone)]
pub struct Log2Sum {
    terms: Vec<f64>,
}

impl Log2Sum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, log2_term: f64) {
        self.terms.push(log2_term);
    }

    pub fn value(&self) -> f64 {
        log2_sum_exp2(&self.terms)
    }
}

/// Least-squares line fit through (x_i, y_i); returns (slope, intercept,
/// max absolute residual).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 points, got {}",
            xs.len()
        )));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::DegenerateFit(
            "non-finite values in fit data (empty sums?)".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).abs())
        .fold(0.0f64, f64::max);
    Ok((slope, intercept, resid))
}

/// Fit over the deepest half of the depth range (shallow scales carry the
/// transient); depths must be increasing.
pub fn fit_deepest_half(depths: &[usize], ys: &[f64]) -> Result<(f64, f64)> {
    let n = depths.len();
    if n < 4 {
        return Err(Error::DegenerateFit(format!("need >= 4 depths, got {n}")));
    }
    let start = n / 2;
    let xs: Vec<f64> = depths[start..].iter().map(|&d| d as f64).collect();
    let (slope, _, resid) = fit_line(&xs, &ys[start..])?;
    Ok((slope, resid))
}

/// Parse a decimal or fraction literal ("0.3", "3/10", "1") into an exact
/// rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = |m: &str| Error::InvalidConfig(format!("cannot parse rational {s:?}: {m}"));
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad("bad numerator"))?;
        let d: BigInt = den.trim().parse().map_err(|_| bad("bad denominator"))?;
        if d.is_zero() {
            return Err(bad("zero denominator"));
        }
        return Ok(BigRational::new(n, d));
    }
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    let neg = int_part.starts_with('-');
    let digits: String = int_part
        .trim_start_matches(['-', '+'])
        .chars()
        .chain(frac_part.chars())
        .collect();
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad("not a decimal literal"));
    }
    let mut n: BigInt = digits.parse().map_err(|_| bad("bad digits"))?;
    if neg {
        n = -n;
    }
    let d = BigInt::from(10u32).pow(frac_part.len() as u32);
    Ok(BigRational::new(n, d))
}

/// log2 of a positive rational, computed via f64 conversion of both parts.
/// Exact to f64 rounding for the magnitudes this crate produces (denominators
/// bounded by 10^64 * 2^64 at the depth cap).
pub fn log2_rational(r: &BigRational) -> f64 {
    assert!(r.is_positive(), "log2 of non-positive rational");
    let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
    let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
    if n.is_finite() && d.is_finite() {
        n.log2() - d.log2()
    } else {
        // Fall back to bit-length headroom for very large parts.
        let nb = r.numer().bits() as f64;
        let db = r.denom().bits() as f64;
        nb - db
    }
}

/// Render a rational as a short decimal (for reports when exact output is off).
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn rational_one() -> BigRational {
    BigRational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log2_sum_matches_direct() {
        let terms = [0.0, 1.0, 2.0]; // 1 + 2 + 4 = 7
        assert!((log2_sum_exp2(&terms) - 7f64.log2()).abs() < 1e-12);
        assert_eq!(log2_sum_exp2(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn log2_sum_wide_spread() {
        let terms = [-1000.0, 0.0];
        assert!((log2_sum_exp2(&terms) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn fit_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (s, b, r) = fit_line(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-12);
        assert!(r < 1e-12);
    }

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("0.3").unwrap(), parse_rational("3/10").unwrap());
        assert_eq!(parse_rational("1").unwrap(), rational_one());
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1/0").is_err());
        let half = parse_rational("0.5").unwrap();
        assert!((rational_to_f64(&half) - 0.5).abs() == 0.0);
    }

    #[test]
    fn log2_rational_small() {
        let r = parse_rational("0.25").unwrap();
        assert!((log2_rational(&r) + 2.0).abs() < 1e-12);
    }
}
