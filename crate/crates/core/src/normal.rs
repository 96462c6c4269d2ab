//! Standard normal helpers shared by every module.

use statrs::function::erf::erfc_inv;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Standard normal quantile. `p` must lie in (0, 1).
pub fn quantile(p: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // one Newton step against the accurate CDF, on the smaller tail
    let d = pdf(x);
    if d <= 0.0 {
        return x;
    }
    if p < 0.5 {
        x - (cdf(x) - p) / d
    } else {
        x + (sf(x) - (1.0 - p)) / d
    }
}

/// Normal density with mean `mean` and standard deviation `sd`.
#[inline]
pub fn pdf_scaled(x: f64, mean: f64, sd: f64) -> f64 {
    pdf((x - mean) / sd) / sd
}
