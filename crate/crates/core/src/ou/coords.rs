//! Change of units to the unit OU process, and the scale/speed pair.

use crate::error::Result;
use crate::numerics::{integrate, integrate_adaptive};
use crate::processes::OUParams;

/// Affine map from `(kappa, mu, sigma)` units to `dY = -Y dt + dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedOUCoords {
    pub kappa: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl NormalizedOUCoords {
    pub fn new(p: &OUParams) -> Self {
        Self {
            kappa: p.kappa,
            mu: p.mu,
            sigma: p.sigma,
        }
    }

    /// Factor turning unit-level densities into original-level densities.
    pub fn level_scale(&self) -> f64 {
        self.kappa.sqrt() / self.sigma
    }

    pub fn level(&self, x: f64) -> f64 {
        self.level_scale() * (x - self.mu)
    }

    pub fn level_inv(&self, y: f64) -> f64 {
        self.mu + y / self.level_scale()
    }

    pub fn time(&self, t: f64) -> f64 {
        self.kappa * t
    }

    pub fn time_inv(&self, s: f64) -> f64 {
        s / self.kappa
    }
}

const TABLE_NODES: usize = 2048;

/// Scale function `S` (based at 0) and speed density `m` of an OU process.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDiffusionSpec {
    pub params: OUParams,
    lo: f64,
    step: f64,
    cumulative: Vec<f64>,
}

/// Tabulates `S` on a window of six stationary deviations beyond the mean
/// and 0 on each side; outside the window it falls back to adaptive quadrature.
pub fn scale_and_speed(p: OUParams) -> LinearDiffusionSpec {
    let spread = 6.0 * p.sigma / p.kappa.sqrt();
    let span = p.mu.abs() + 2.0 * spread;
    let step = span / TABLE_NODES as f64;
    // Node `origin` sits exactly at 0 so the table accumulates away from S(0) = 0.
    let origin = ((spread - p.mu.min(0.0)) / step).round() as usize;
    let lo = -(origin as f64) * step;
    let mut spec = LinearDiffusionSpec {
        params: p,
        lo,
        step,
        cumulative: vec![0.0; TABLE_NODES + 1],
    };
    let node = |i: usize| lo + i as f64 * step;
    for i in origin + 1..=TABLE_NODES {
        spec.cumulative[i] = spec.cumulative[i - 1] + integrate(|y| spec.scale_density(y), node(i - 1), node(i), 8);
    }
    for i in (0..origin).rev() {
        spec.cumulative[i] = spec.cumulative[i + 1] - integrate(|y| spec.scale_density(y), node(i), node(i + 1), 8);
    }
    spec
}

impl LinearDiffusionSpec {
    /// `S'(x) = exp((kappa/sigma^2)(x^2 - 2 mu x))`.
    pub fn scale_density(&self, x: f64) -> f64 {
        let p = &self.params;
        (p.kappa / (p.sigma * p.sigma) * (x * x - 2.0 * p.mu * x)).exp()
    }

    /// `m(x) = (2/sigma^2) exp((2 kappa/sigma^2)(mu x - x^2/2))`.
    pub fn speed(&self, x: f64) -> f64 {
        let p = &self.params;
        let s2 = p.sigma * p.sigma;
        2.0 / s2 * (2.0 * p.kappa / s2 * (p.mu * x - 0.5 * x * x)).exp()
    }

    fn scale_from_table(&self, x: f64) -> f64 {
        let i = (((x - self.lo) / self.step).floor() as usize).min(TABLE_NODES - 1);
        let a = self.lo + i as f64 * self.step;
        if x == a {
            return self.cumulative[i];
        }
        self.cumulative[i] + integrate(|y| self.scale_density(y), a, x, 8)
    }

    pub fn scale(&self, x: f64) -> Result<f64> {
        let hi = self.lo + TABLE_NODES as f64 * self.step;
        if x >= self.lo && x <= hi {
            return Ok(self.scale_from_table(x));
        }
        Ok(integrate_adaptive(|y| self.scale_density(y), 0.0, x, 1e-300, 1e-12)?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let c = NormalizedOUCoords::new(&OUParams::new(2.5, -0.3, 0.7).unwrap());
        for &x in &[-3.0, 0.0, 0.25, 7.5] {
            assert!((c.level_inv(c.level(x)) - x).abs() < 1e-12);
            assert!((c.time_inv(c.time(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_is_based_at_zero_and_increasing() {
        let s = scale_and_speed(OUParams::new(1.0, 0.5, 1.0).unwrap());
        assert!(s.scale(0.0).unwrap().abs() < 1e-14);
        let mut prev = s.scale(-4.0).unwrap();
        for i in 1..=1000 {
            let x = -4.0 + 8.0 * i as f64 / 1000.0;
            let cur = s.scale(x).unwrap();
            assert!(cur > prev, "{x}");
            prev = cur;
        }
    }

    #[test]
    fn scale_matches_quadrature_inside_and_outside_the_table() {
        let s = scale_and_speed(OUParams::new(1.0, 0.5, 1.0).unwrap());
        for &x in &[-2.0, 1.3, 6.5, 10.0] {
            let want = integrate_adaptive(|y| s.scale_density(y), 0.0, x, 1e-300, 1e-13).unwrap().value;
            assert!((s.scale(x).unwrap() / want - 1.0).abs() < 1e-10, "{x}");
        }
    }

    #[test]
    fn small_reversion_degenerates_to_brownian() {
        let kappa = 1e-6;
        let s = scale_and_speed(OUParams::new(kappa, 0.3, 1.5).unwrap());
        for &x in &[-2.0, -0.5, 1.0, 3.0] {
            assert!((s.scale(x).unwrap() - x).abs() < 10.0 * kappa * (1.0 + x.abs().powi(3)));
            assert!((s.speed(x) - 2.0 / 2.25).abs() < 10.0 * kappa * (1.0 + x * x));
        }
    }
}
