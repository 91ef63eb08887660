use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

/// Standard normal CDF, `0.5 * erfc(-x / sqrt 2)`.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `ln(1 - Φ(x))`, accurate far into the upper tail.
pub fn log_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        return normal_sf(x).ln();
    }
    let z2 = 1.0 / (x * x);
    let series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2;
    -0.5 * x * x - (x * (2.0 * PI).sqrt()).ln() + series.ln()
}
