//! First passage of the unit OU process `dY = -Y dt + dW`.
//!
//! The passage law is a single-layer heat potential whose density `nu` comes
//! from [`super::volterra`]. Formulas are written for a barrier below the
//! start; a barrier above is handled by reflecting both levels.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::integrate_adaptive;

use super::volterra::{Nu, NuSolver};

const ABS_TOL: f64 = 1e-13;
const REL_TOL: f64 = 1e-10;

/// Transition density of the unit OU process over `tau`.
pub fn unit_transition_density(tau: f64, from: f64, to: f64) -> f64 {
    let var2 = -(-2.0 * tau).exp_m1();
    let mean = from * (-tau).exp();
    (-(to - mean) * (to - mean) / var2).exp() / (PI * var2).sqrt()
}

/// Heat time of a unit-OU time.
pub fn heat_time(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// Integrates over `[lo, hi]` split at the given interior points.
pub(crate) fn integrate_split(f: impl Fn(f64) -> f64, lo: f64, hi: f64, cuts: &[f64], abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mut points: Vec<f64> = cuts.iter().copied().filter(|&c| c > lo && c < hi).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut total = 0.0;
    let mut left = lo;
    for &p in points.iter().chain(std::iter::once(&hi)) {
        total += integrate_adaptive(&f, left, p, abs_tol, rel_tol)?.value;
        left = p;
    }
    Ok(total)
}

/// Geometric cut points `scale * 4^k` below `span`, so that a peak of width
/// `scale` near the origin is never missed.
pub(crate) fn geometric_cuts(scale: f64, span: f64) -> Vec<f64> {
    let mut cuts = Vec::new();
    let mut c = scale.max(span * 1e-14);
    while c < span {
        cuts.push(c);
        c *= 4.0;
    }
    cuts
}

/// A level together with the potential that governs hits from one side.
#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    level: f64,
    from_above: bool,
    nu: Nu,
}

impl Barrier {
    /// Barrier at `level` approached from above (`from_above`) or below,
    /// valid for unit times up to `t_max`.
    pub fn new(level: f64, from_above: bool, solver: NuSolver, t_max: f64, n_blocks: usize) -> Result<Self> {
        let param = if from_above { level } else { -level };
        let theta_max = heat_time(t_max).min(1.0 - 1e-9);
        Ok(Self {
            level,
            from_above,
            nu: Nu::build(solver, param, theta_max, n_blocks)?,
        })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn nu(&self) -> &Nu {
        &self.nu
    }

    /// Start and level reflected so that the start lies above the level.
    /// `None` when the start sits on the barrier.
    fn orient(&self, start: f64) -> Result<Option<(f64, f64)>> {
        let (a, b) = if self.from_above { (start, self.level) } else { (-start, -self.level) };
        if a > b {
            Ok(Some((a, b)))
        } else if a == b {
            Ok(None)
        } else {
            Err(Error::DomainError(format!("start {start} is already past the barrier at {}", self.level)))
        }
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let theta = heat_time(t);
        if t.is_nan() || theta > self.nu.theta_max() * (1.0 + 1e-12) {
            return Err(Error::DomainError(format!(
                "time {t} outside the potential's range (heat time {} > {})",
                theta,
                self.nu.theta_max()
            )));
        }
        Ok(theta)
    }

    /// Offset below which the layer integrals cancel catastrophically; the
    /// passage law is linear in the gap there.
    fn near_gap(theta: f64) -> f64 {
        1e-3 * theta.sqrt()
    }

    /// `P(hit by t)` from `start`.
    pub fn probability(&self, t: f64, start: f64) -> Result<f64> {
        let Some((a, b)) = self.orient(start)? else {
            return Ok(1.0);
        };
        if t <= 0.0 {
            return Ok(0.0);
        }
        let theta = self.check_time(t)?;
        let near = Self::near_gap(theta);
        if a - b < near {
            let miss = 1.0 - self.probability_oriented(theta, b + near, b)?;
            return Ok(1.0 - miss * (a - b) / near);
        }
        self.probability_oriented(theta, a, b)
    }

    fn probability_oriented(&self, theta: f64, a: f64, b: f64) -> Result<f64> {
        let w = 1.0 - theta;
        let gap = (a - b) * w;
        // r = theta - theta'
        let f = |r: f64| {
            let p = r * (2.0 * w + r);
            let d = gap - b * r;
            let log_e = -d * d / p - 1.5 * p.ln();
            self.nu.eval(theta - r) * (w + r) * 2.0 * d * log_e.exp() / PI.sqrt()
        };
        let cuts = geometric_cuts(gap * gap / 64.0, theta);
        integrate_split(f, 0.0, theta, &cuts, ABS_TOL, REL_TOL)
    }

    /// First-passage density at `t` from `start`.
    pub fn density(&self, t: f64, start: f64) -> Result<f64> {
        let Some((a, b)) = self.orient(start)? else {
            return Ok(0.0);
        };
        if t <= 0.0 {
            return Ok(0.0);
        }
        let theta = self.check_time(t)?;
        let near = Self::near_gap(theta);
        if a - b < near {
            return Ok(self.density_oriented(theta, b + near, b)? * (a - b) / near);
        }
        self.density_oriented(theta, a, b)
    }

    fn density_oriented(&self, theta: f64, a: f64, b: f64) -> Result<f64> {
        let w = 1.0 - theta;
        let gap = (a - b) * w;
        let f = |r: f64| {
            let p = r * (2.0 * w + r);
            let d = gap - b * r;
            let log_e = -d * d / p - 3.5 * p.ln();
            let poly = 2.0 * w * d * d * d - 3.0 * w * d * p + 2.0 * a * d * d * p - a * p * p;
            self.nu.eval(theta - r) * (w + r) * poly * log_e.exp()
        };
        let cuts = geometric_cuts(gap * gap / 64.0, theta);
        let integral = integrate_split(f, 0.0, theta, &cuts, ABS_TOL, REL_TOL)?;
        Ok(w * 2.0 / PI.sqrt() * integral)
    }
}
