//! Standard normal cdf, log-cdf, pdf and quantile.

use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// ln Φ(x), accurate far into the lower tail where Φ itself underflows.
pub fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return cdf(x).ln();
    }
    // Mills-ratio series; at |x| >= 30 the truncation error is below 1e-16.
    let x2 = x * x;
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) / x2;
        series += term;
    }
    -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + series.ln()
}

pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // one Halley step on top of the erfc_inv estimate brings it to full precision
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let u = (cdf(x) - p) * (0.5 * x * x + LN_SQRT_2PI).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Bivariate standard normal orthant probability P(Z₁ ≤ 0, Z₂ ≤ 0) with correlation ρ.
pub fn bivariate_orthant(rho: f64) -> f64 {
    0.25 + rho.asin() / (2.0 * PI)
}
