//! Standard normal density, distribution function and quantile.

use crate::error::{invalid, Result};
use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LOW_TAIL: f64 = 0.02425;

// Rational approximation of the normal quantile, relative error below 1.2e-9
// before polishing.
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

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Φ(z), accurate in relative terms deep into the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Φ⁻¹(p) for p ∈ (0, 1).
pub fn inv_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("normal quantile needs p in (0,1), got {p}"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // 1 - p is exact for p > 1/2, so the upper half reuses the lower tail.
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 0.5);
    let x = if p < LOW_TAIL {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // One Halley step; the residual is scaled by φ(x) directly so no factor
    // exp(x²/2) can overflow in the far tail.
    let u = (normal_cdf(x) - p) / normal_pdf(x);
    x - u / (1.0 + 0.5 * x * u)
}

/// (φ∘Φ⁻¹)(p), the isoperimetric profile of the standard Gaussian.
pub fn gaussian_profile(p: f64) -> Result<f64> {
    let q = if p > 0.5 { 1.0 - p } else { p };
    let z = inv_normal_cdf(q)?;
    Ok(normal_pdf(z))
}

/// Log-density of the chi distribution with `d` degrees of freedom.
pub fn chi_log_density(r: f64, d: usize) -> f64 {
    if r < 0.0 {
        return f64::NEG_INFINITY;
    }
    let k = d as f64;
    let log_r_term = if d == 1 { 0.0 } else { (k - 1.0) * r.ln() };
    log_r_term - 0.5 * r * r - (0.5 * k - 1.0) * std::f64::consts::LN_2
        - libm::lgamma(0.5 * k)
}
