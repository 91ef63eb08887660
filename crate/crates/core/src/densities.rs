//! Closed-form laws of the Brownian bridge extremum and of drifted Brownian
//! motion. Level arguments are divided by `sigma` and densities in a level
//! variable pick up the Jacobian `1/sigma`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_normal_sf, normal_cdf, normal_pdf};

/// Two pinned values of a Brownian bridge and its volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeEndpoints {
    pub t1: f64,
    pub t2: f64,
    pub x1: f64,
    pub x2: f64,
    pub sigma: f64,
}

impl BridgeEndpoints {
    pub fn new(t1: f64, t2: f64, x1: f64, x2: f64, sigma: f64) -> Result<Self> {
        if !(t1.is_finite() && t2.is_finite()) || t2 <= t1 {
            return Err(Error::param("T", format!("need t2 > t1, got [{t1}, {t2}]")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        if !(x1.is_finite() && x2.is_finite()) {
            return Err(Error::param("a", "endpoint values must be finite"));
        }
        Ok(Self { t1, t2, x1, x2, sigma })
    }

    pub fn duration(&self) -> f64 {
        self.t2 - self.t1
    }

    fn check_max(&self, m: f64) -> Result<()> {
        if m > self.x1 && m > self.x2 {
            Ok(())
        } else {
            Err(Error::InvalidExtremum {
                m,
                x1: self.x1,
                x2: self.x2,
            })
        }
    }
}

/// Drift per unit time and volatility of `dX = c dt + sigma dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub c: f64,
    pub sigma: f64,
}

impl DriftParams {
    pub fn new(c: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        if !c.is_finite() {
            return Err(Error::param("c", "drift must be finite"));
        }
        Ok(Self { c, sigma })
    }

    /// Drift of the unit-volatility rescaled process.
    pub fn ratio(&self) -> f64 {
        self.c / self.sigma
    }
}

fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * PI * var).sqrt()
}

/// Density of the increment `dX` over `[t, t+dt]` of the bridge currently at `x`.
pub fn bb_increment_density(dx: f64, t: f64, dt: f64, x: f64, ep: &BridgeEndpoints) -> Result<f64> {
    let remaining = ep.t2 - t;
    if remaining <= dt * (1.0 + 1e-12) {
        return Err(Error::DegenerateInterval { remaining, dt });
    }
    let mean = (ep.x2 - x) / remaining * dt;
    Ok(gaussian(dx, mean, ep.sigma * ep.sigma * dt))
}

/// Density of the bridge maximum at level `m`.
pub fn bb_max_density(m: f64, ep: &BridgeEndpoints) -> f64 {
    if m < ep.x1 || m < ep.x2 {
        return 0.0;
    }
    let s2t = ep.sigma * ep.sigma * ep.duration();
    let expo = -2.0 * (m - ep.x1) * (m - ep.x2) / s2t;
    2.0 / s2t * (2.0 * m - ep.x1 - ep.x2) * expo.exp()
}

/// `P(max <= m)` for the bridge.
pub fn bb_max_bound_prob(m: f64, ep: &BridgeEndpoints) -> f64 {
    if m < ep.x1 || m < ep.x2 {
        return 0.0;
    }
    let s2t = ep.sigma * ep.sigma * ep.duration();
    -(-2.0 * (m - ep.x1) * (m - ep.x2) / s2t).exp_m1()
}

/// Density of the bridge minimum at level `m`.
pub fn bb_min_density(m: f64, ep: &BridgeEndpoints) -> f64 {
    bb_max_density(-m, &negate(ep))
}

fn negate(ep: &BridgeEndpoints) -> BridgeEndpoints {
    BridgeEndpoints {
        x1: -ep.x1,
        x2: -ep.x2,
        ..*ep
    }
}

/// Density of the location `theta` of the maximum given that the maximum is `m`.
pub fn bb_argmax_density_given_max(theta: f64, m: f64, ep: &BridgeEndpoints) -> Result<f64> {
    ep.check_max(m)?;
    if theta <= ep.t1 || theta >= ep.t2 {
        return Ok(0.0);
    }
    let tau = ep.duration();
    let s = theta - ep.t1;
    let u = (m - ep.x1) / ep.sigma;
    let v = (m - ep.x2) / ep.sigma;
    let d = (ep.x2 - ep.x1) / ep.sigma;
    let expo = d * d / (2.0 * tau) + 2.0 * u * v / tau - u * u / (2.0 * s) - v * v / (2.0 * (tau - s));
    let shape = (tau / (s * (tau - s))).powf(1.5);
    Ok(u * v / (u + v) * shape * expo.exp() / (2.0 * PI).sqrt())
}

/// Joint density of the bridge minimum `m` and its location `theta`.
pub fn bb_joint_min_argmin_density(m: f64, theta: f64, ep: &BridgeEndpoints) -> f64 {
    if m >= ep.x1 || m >= ep.x2 || theta <= ep.t1 || theta >= ep.t2 {
        return 0.0;
    }
    let tau = ep.duration();
    let s = theta - ep.t1;
    let u = (ep.x1 - m) / ep.sigma;
    let v = (ep.x2 - m) / ep.sigma;
    let d = (ep.x2 - ep.x1) / ep.sigma;
    let expo = d * d / (2.0 * tau) - u * u / (2.0 * s) - v * v / (2.0 * (tau - s));
    let pref = u * v * (2.0 * tau).sqrt() / (PI * (s * (tau - s)).powi(3)).sqrt();
    pref * expo.exp() / ep.sigma
}

/// `e^a * (1 - Φ(z))`, evaluated in log space.
fn exp_times_sf(a: f64, z: f64) -> f64 {
    (a + log_normal_sf(z)).exp()
}

/// Density of the running maximum (relative to the start) of drifted
/// Brownian motion over a horizon `t`.
pub fn drift_max_density(m: f64, t: f64, p: &DriftParams) -> f64 {
    if m < 0.0 {
        return 0.0;
    }
    let c = p.ratio();
    let m = m / p.sigma;
    let rt = t.sqrt();
    let first = (2.0 / (PI * t)).sqrt() * (-(m - c * t).powi(2) / (2.0 * t)).exp();
    let second = 2.0 * c * exp_times_sf(2.0 * c * m, (m + c * t) / rt);
    ((first - second) / p.sigma).max(0.0)
}

/// `P(max <= m)` for drifted Brownian motion started at 0.
pub fn drift_max_bound_prob(m: f64, t: f64, p: &DriftParams) -> f64 {
    if m < 0.0 {
        return 0.0;
    }
    let c = p.ratio();
    let m = m / p.sigma;
    let rt = t.sqrt();
    let v = normal_cdf((m - c * t) / rt) - exp_times_sf(2.0 * c * m, (m + c * t) / rt);
    v.clamp(0.0, 1.0)
}

/// Increment density `N(c dt, sigma^2 dt)`.
pub fn drift_increment_density(dx: f64, dt: f64, p: &DriftParams) -> f64 {
    gaussian(dx, p.c * dt, p.sigma * p.sigma * dt)
}

/// Density of the location of the maximum of drifted Brownian motion on `[0, t]`.
pub fn drift_argmax_density(theta: f64, t: f64, p: &DriftParams) -> f64 {
    if theta <= 0.0 || theta >= t {
        return 0.0;
    }
    let c = p.ratio();
    let r = t - theta;
    let left = normal_pdf(c * theta.sqrt()) / theta.sqrt() + c * normal_cdf(c * theta.sqrt());
    let right = normal_pdf(c * r.sqrt()) / r.sqrt() - c * normal_cdf(-c * r.sqrt());
    2.0 * left * right
}
