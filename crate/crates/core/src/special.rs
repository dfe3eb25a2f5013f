//! Standard normal distribution function and quantile.
//!
//! `Φ(x) = erfc(−x/√2)/2`, with `erfc` from `libm`. The quantile starts from
//! Acklam's rational approximation (relative error about 1.2e-9) and is
//! polished by two Halley steps against `Φ`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

use crate::error::{Error, Result};

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `Φ(x)`; accurate in both tails because it never forms `1 − small`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `Φ⁻¹(u)` for `u ∈ (0, 1)`.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::DomainError(u));
    }
    Ok(normal_quantile_unchecked(u))
}

/// `Φ⁻¹(u)` without the domain check; callers guarantee `0 < u < 1`.
pub(crate) fn normal_quantile_unchecked(u: f64) -> f64 {
    if u > 0.5 {
        // 1 − u is exact for u in [0.5, 1]
        -lower_quantile(1.0 - u)
    } else {
        lower_quantile(u)
    }
}

const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

fn acklam_lower(u: f64) -> f64 {
    if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

fn lower_quantile(u: f64) -> f64 {
    let mut x = acklam_lower(u);
    for _ in 0..2 {
        let e = normal_cdf(x) - u;
        let t = e / normal_pdf(x);
        x -= t / (1.0 + 0.5 * x * t);
    }
    x
}
