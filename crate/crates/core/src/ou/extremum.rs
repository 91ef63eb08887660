//! Running-maximum laws of OU bridges and open-ended OU paths.
//!
//! The joint law of (maximum, argmax, terminal value) of a diffusion factors
//! into two first-passage densities, one from each end, times
//! `S'(M) m(b)`. For the unit process that factor is `2 exp(M^2 - b^2)`.
//! Conditioning on the terminal value divides by the transition density.

use serde::{Deserialize, Serialize};

use crate::densities::BridgeEndpoints;
use crate::error::{Error, Result};
use crate::numerics::MonotoneCubic;
use crate::processes::OUParams;

use super::coords::NormalizedOUCoords;
use super::hitting::{geometric_cuts, integrate_split, unit_transition_density, Barrier};
use super::volterra::NuSolver;

/// Terminal value pinned or free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OuMode {
    #[default]
    Bridge,
    Open,
}

/// Discretisation of the potential behind every OU hitting density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuNumerics {
    pub solver: NuSolver,
    pub n_blocks: usize,
}

impl Default for OuNumerics {
    fn default() -> Self {
        Self {
            solver: NuSolver::Volterra,
            n_blocks: 200,
        }
    }
}

const CONV_ABS: f64 = 1e-12;
const CONV_REL: f64 = 1e-9;

/// `int_0^tau f(u) g(tau - u) du` where `f` may peak near 0 on the scale
/// `f_scale` and `g` near 0 on the scale `g_scale`.
pub(crate) fn convolve(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, tau: f64, f_scale: f64, g_scale: f64) -> Result<f64> {
    let mut cuts = geometric_cuts(f_scale, 0.5 * tau);
    cuts.extend(geometric_cuts(g_scale, 0.5 * tau).into_iter().map(|c| tau - c));
    cuts.push(0.5 * tau);
    integrate_split(|u| f(u) * g(tau - u), 0.0, tau, &cuts, CONV_ABS, CONV_REL)
}

/// Maximum laws of the unit OU process at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMaxLaw {
    barrier: Barrier,
}

impl UnitMaxLaw {
    /// Level `y`, valid for durations up to `tau_max`.
    pub fn new(level: f64, tau_max: f64, num: &OuNumerics) -> Result<Self> {
        Ok(Self {
            barrier: Barrier::new(level, false, num.solver, tau_max, num.n_blocks)?,
        })
    }

    pub fn level(&self) -> f64 {
        self.barrier.level()
    }

    pub fn barrier(&self) -> &Barrier {
        &self.barrier
    }

    fn peak_scale(&self, x: f64) -> f64 {
        let d = self.level() - x;
        d * d / 16.0
    }

    /// `P(max <= y)` for the bridge `x -> b` over `tau`.
    pub fn bridge_bound(&self, x: f64, b: f64, tau: f64) -> Result<f64> {
        let y = self.level();
        if x >= y || b >= y {
            return Ok(0.0);
        }
        let hit = convolve(
            |u| self.barrier.density(u, x).unwrap_or(f64::NAN),
            |s| unit_transition_density(s, y, b),
            tau,
            self.peak_scale(x),
            self.peak_scale(b),
        )?;
        let q = hit / unit_transition_density(tau, x, b);
        check_finite(q, tau)?;
        Ok((1.0 - q).clamp(0.0, 1.0))
    }

    /// Density of the bridge maximum at `y`.
    pub fn bridge_density(&self, x: f64, b: f64, tau: f64) -> Result<f64> {
        let y = self.level();
        if x >= y || b >= y {
            return Ok(0.0);
        }
        let both = convolve(
            |u| self.barrier.density(u, x).unwrap_or(f64::NAN),
            |s| self.barrier.density(s, b).unwrap_or(f64::NAN),
            tau,
            self.peak_scale(x),
            self.peak_scale(b),
        )?;
        let v = 2.0 * (y * y - b * b).exp() * both / unit_transition_density(tau, x, b);
        check_finite(v, tau)?;
        Ok(v.max(0.0))
    }

    /// `P(max <= y)` over `tau` with a free terminal value.
    pub fn open_bound(&self, x: f64, tau: f64) -> Result<f64> {
        if x >= self.level() {
            return Ok(0.0);
        }
        Ok((1.0 - self.barrier.probability(tau, x)?).clamp(0.0, 1.0))
    }

    /// Open-ended maximum density assembled from the joint law: the
    /// terminal value is integrated out against the speed density.
    pub fn open_density_joint(&self, x: f64, tau: f64) -> Result<f64> {
        if x >= self.level() {
            return Ok(0.0);
        }
        let table = self.free_end_table(tau)?;
        let v = convolve(
            |u| self.barrier.density(u, x).unwrap_or(f64::NAN),
            |s| if s > 0.0 { table.eval(s.ln()) / s.sqrt() } else { 0.0 },
            tau,
            self.peak_scale(x),
            0.0,
        )?;
        check_finite(v, tau)?;
        Ok(v)
    }

    /// `sqrt(s) E(s)` against `ln s`, where
    /// `E(s) = 2 exp(y^2) int_{z < y} n_{z -> y}(s) exp(-z^2) dz`
    /// is the weight of reaching the level `s` before a free end.
    pub(crate) fn free_end_table(&self, tau: f64) -> Result<MonotoneCubic> {
        const NODES: usize = 48;
        let y = self.level();
        let (lo, hi) = ((tau * 1e-6).ln(), tau.ln());
        let mut xs = Vec::with_capacity(NODES);
        let mut ys = Vec::with_capacity(NODES);
        for i in 0..NODES {
            let ls = lo + (hi - lo) * i as f64 / (NODES - 1) as f64;
            let s = ls.exp();
            let root = s.sqrt();
            let lower = (y - 12.0 * root).max((-8.0f64).min(y - 1.0));
            let inner = integrate_split(
                |z| self.barrier.density(s, z).unwrap_or(f64::NAN) * (-z * z).exp(),
                lower,
                y,
                &[y - root, y - 0.1 * root],
                1e-11,
                1e-8,
            )?;
            xs.push(ls);
            ys.push(root * 2.0 * (y * y).exp() * inner);
        }
        MonotoneCubic::new(xs, ys)
    }
}

fn check_finite(v: f64, tau: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::QuadratureFailure {
            lo: 0.0,
            hi: tau,
            estimate: v,
            error: f64::INFINITY,
        })
    }
}

/// Open-ended density as the level derivative of [`UnitMaxLaw::open_bound`].
pub fn unit_open_max_density(level: f64, x: f64, tau: f64, num: &OuNumerics) -> Result<f64> {
    if x >= level {
        return Ok(0.0);
    }
    let h = 1e-4 * (1.0 + level.abs()).min(level - x);
    let up = UnitMaxLaw::new(level + h, tau, num)?.open_bound(x, tau)?;
    let down = UnitMaxLaw::new(level - h, tau, num)?.open_bound(x, tau)?;
    Ok(((up - down) / (2.0 * h)).max(0.0))
}

fn unit_problem(m: f64, ep: &BridgeEndpoints, p: &OUParams) -> Result<(NormalizedOUCoords, f64, f64, f64, f64)> {
    if !(ep.t2 > ep.t1) {
        return Err(Error::param("T", "need t2 > t1"));
    }
    let c = NormalizedOUCoords::new(p);
    Ok((c, c.level(m), c.level(ep.x1), c.level(ep.x2), c.time(ep.t2 - ep.t1)))
}

fn check_extremum(m: f64, ep: &BridgeEndpoints, mode: OuMode) -> Result<()> {
    let above = match mode {
        OuMode::Bridge => m > ep.x1 && m > ep.x2,
        OuMode::Open => m > ep.x1,
    };
    if above {
        Ok(())
    } else {
        Err(Error::InvalidExtremum { m, x1: ep.x1, x2: ep.x2 })
    }
}

/// Density of the OU maximum at `m` over `[ep.t1, ep.t2]` from `ep.x1`.
///
/// In bridge mode the path ends at `ep.x2`; in open mode `ep.x2` is
/// ignored. Volatility comes from `p`, not from `ep.sigma`.
pub fn ou_max_density(m: f64, ep: &BridgeEndpoints, p: &OUParams, mode: OuMode, num: &OuNumerics) -> Result<f64> {
    check_extremum(m, ep, mode)?;
    let (c, y, x, b, tau) = unit_problem(m, ep, p)?;
    let unit = match mode {
        OuMode::Bridge => UnitMaxLaw::new(y, tau, num)?.bridge_density(x, b, tau)?,
        OuMode::Open => unit_open_max_density(y, x, tau, num)?,
    };
    Ok(unit * c.level_scale())
}

/// `P(max <= m)`; zero when `m` does not clear the fixed endpoints.
pub fn ou_max_bound_prob(m: f64, ep: &BridgeEndpoints, p: &OUParams, mode: OuMode, num: &OuNumerics) -> Result<f64> {
    if check_extremum(m, ep, mode).is_err() {
        return Ok(0.0);
    }
    let (_, y, x, b, tau) = unit_problem(m, ep, p)?;
    let law = UnitMaxLaw::new(y, tau, num)?;
    match mode {
        OuMode::Bridge => law.bridge_bound(x, b, tau),
        OuMode::Open => law.open_bound(x, tau),
    }
}
