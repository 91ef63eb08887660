//! Drifted Brownian motion and geometric Brownian motion conditioned on an
//! extremum.
//!
//! Bridges do not depend on the drift, so they go through the meander
//! construction. Open-ended paths run the incremental generator in the
//! coordinates `(X - a) / sigma`, where the volatility is one.

use serde::{Deserialize, Serialize};

use crate::bayesian::{gen_open_constrained, ConstraintSpec, Dynamics, ExtremumKind, NumericsConfig, Segment};
use crate::densities::{bb_max_bound_prob, bb_max_density, drift_max_bound_prob, drift_max_density, BridgeEndpoints, DriftParams};
use crate::error::{Error, Result};
use crate::meander::gen_bridge_with_max_meander;
use crate::numerics::{Path, RandomSource, TimeGrid};

/// Open-ended drifted Brownian motion with unit volatility.
///
/// Left factors are bridge laws (they do not see the drift), right factors
/// are the drifted open-ended laws from the current point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftDynamics {
    /// Drift in units of volatility.
    pub c: f64,
}

impl DriftDynamics {
    pub fn new(p: &DriftParams) -> Self {
        Self { c: p.ratio() }
    }

    fn unit(&self) -> DriftParams {
        DriftParams { c: self.c, sigma: 1.0 }
    }
}

impl Dynamics for DriftDynamics {
    type Negated = DriftDynamics;

    fn sigma(&self) -> f64 {
        1.0
    }

    fn density_max(&self, level: f64, seg: &Segment) -> Result<f64> {
        Ok(match seg.x2 {
            Some(x2) => bb_max_density(level, &BridgeEndpoints::new(seg.t1, seg.t2, seg.x1, x2, 1.0)?),
            None => drift_max_density(level - seg.x1, seg.t2 - seg.t1, &self.unit()),
        })
    }

    fn prob_bound(&self, level: f64, seg: &Segment) -> Result<f64> {
        Ok(match seg.x2 {
            Some(x2) => bb_max_bound_prob(level, &BridgeEndpoints::new(seg.t1, seg.t2, seg.x1, x2, 1.0)?),
            None => drift_max_bound_prob(level - seg.x1, seg.t2 - seg.t1, &self.unit()),
        })
    }

    fn density_increment(&self, dx: f64, _t: f64, dt: f64, _x: f64) -> Result<f64> {
        let z = dx - self.c * dt;
        Ok((-0.5 * z * z / dt).exp() / (2.0 * std::f64::consts::PI * dt).sqrt())
    }

    fn negated(&self) -> Result<Self> {
        Ok(Self { c: -self.c })
    }
}

/// Open-ended path of `dX = c dt + sigma dW` on `[0, t_end]` from `a` with maximum `m`.
pub fn gen_drift_open_with_max(
    a: f64,
    m: f64,
    p: &DriftParams,
    t_end: f64,
    cfg: &NumericsConfig,
    rng: &mut RandomSource,
) -> Result<Path> {
    let spec = ConstraintSpec {
        t0: 0.0,
        t_end,
        a,
        b: None,
        m,
        kind: ExtremumKind::Max,
    };
    gen_drift_open_constrained(&spec, p, cfg, rng)
}

/// Open-ended drifted path for a maximum or minimum constraint.
pub fn gen_drift_open_constrained(
    spec: &ConstraintSpec,
    p: &DriftParams,
    cfg: &NumericsConfig,
    rng: &mut RandomSource,
) -> Result<Path> {
    spec.validate()?;
    let unit = ConstraintSpec {
        a: 0.0,
        m: (spec.m - spec.a) / p.sigma,
        ..*spec
    };
    // The attainment tolerance is a level, so it shrinks with the volatility.
    let unit_cfg = NumericsConfig {
        epsilon: cfg.epsilon / p.sigma,
        ..*cfg
    };
    let path = gen_open_constrained(&unit, &DriftDynamics::new(p), &unit_cfg, rng)?;
    let mut values = path.into_values();
    for v in values.iter_mut() {
        *v = spec.a + p.sigma * *v;
    }
    values[0] = spec.a;
    let grid = TimeGrid::new(spec.t0, spec.t_end, cfg.n_timesteps)?;
    Path::new(grid, values)
}

/// Drifted Brownian bridge with maximum `m`. The law does not depend on
/// `c`, so this is the meander construction and `c` only gets logged.
pub fn gen_bridge_with_max_drift(
    ep: &BridgeEndpoints,
    m: f64,
    c: f64,
    grid: &TimeGrid,
    rng: &mut RandomSource,
) -> Result<Path> {
    log::debug!("drift {c} ignored: a pinned bridge does not depend on its drift");
    gen_bridge_with_max_meander(ep, m, grid, rng)
}

/// Geometric Brownian motion `S = exp(Y)` where `Y` has drift `c` and volatility `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GBMParams {
    pub c: f64,
    pub sigma: f64,
    /// Read `c` as the drift of `dS/S` and subtract `sigma^2 / 2` in log space.
    #[serde(default)]
    pub ito_correction: bool,
}

impl GBMParams {
    pub fn new(c: f64, sigma: f64) -> Result<Self> {
        DriftParams::new(c, sigma)?;
        Ok(Self {
            c,
            sigma,
            ito_correction: false,
        })
    }

    /// Drift and volatility of the log process.
    pub fn log_drift(&self) -> Result<DriftParams> {
        let c = if self.ito_correction { self.c - 0.5 * self.sigma * self.sigma } else { self.c };
        DriftParams::new(c, self.sigma)
    }
}

fn positive_log(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v.ln())
    } else {
        Err(Error::param(field, format!("must be positive, got {v}")))
    }
}

/// GBM path from `spec.a` (to `spec.b` when present) with extremum `spec.m`.
///
/// The endpoints and the extremum are restored exactly after exponentiation.
pub fn gen_gbm_with_max(p: &GBMParams, spec: &ConstraintSpec, cfg: &NumericsConfig, rng: &mut RandomSource) -> Result<Path> {
    let log_spec = ConstraintSpec {
        a: positive_log("a", spec.a)?,
        b: spec.b.map(|b| positive_log("b", b)).transpose()?,
        m: positive_log("M", spec.m)?,
        ..*spec
    };
    log_spec.validate()?;
    let drift = p.log_drift()?;
    let grid = TimeGrid::new(spec.t0, spec.t_end, cfg.n_timesteps)?;
    let log_path = match log_spec.b {
        Some(b) => {
            let sign = match spec.kind {
                ExtremumKind::Max => 1.0,
                ExtremumKind::Min => -1.0,
            };
            let ep = BridgeEndpoints::new(spec.t0, spec.t_end, sign * log_spec.a, sign * b, p.sigma)?;
            gen_bridge_with_max_drift(&ep, sign * log_spec.m, sign * drift.c, &grid, rng)?.map(|v| sign * v)?
        }
        None => gen_drift_open_constrained(&log_spec, &drift, cfg, rng)?,
    };
    let extreme = match spec.kind {
        ExtremumKind::Max => log_path.argmax(),
        ExtremumKind::Min => log_path.argmin(),
    };
    let hit = log_path.values()[extreme] == log_spec.m;
    let mut values: Vec<f64> = log_path.values().iter().map(|v| v.exp()).collect();
    values[0] = spec.a;
    if let Some(b) = spec.b {
        values[grid.n_steps()] = b;
    }
    if hit {
        values[extreme] = spec.m;
    }
    Path::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_adaptive, normal_cdf};

    fn right(x: f64, t1: f64) -> Segment {
        Segment { t1, t2: 2.0, x1: x, x2: None }
    }

    #[test]
    fn zero_drift_bound_is_reflection_law() {
        let d = DriftDynamics { c: 0.0 };
        for &(level, x, t1) in &[(1.0, 0.0, 0.0), (2.5, 1.0, 0.7), (0.3, 0.2, 1.9)] {
            let tau: f64 = 2.0 - t1;
            let want = 2.0 * normal_cdf((level - x) / tau.sqrt()) - 1.0;
            assert!((d.prob_bound(level, &right(x, t1)).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn increment_mean_is_drift_times_step() {
        let d = DriftDynamics { c: 0.5 };
        let dt = 0.02f64;
        let width = 10.0 * dt.sqrt();
        let mean = integrate_adaptive(|dx| dx * d.density_increment(dx, 0.0, dt, 0.0).unwrap(), -width, width, 1e-14, 1e-12)
            .unwrap()
            .value;
        assert!((mean - 0.5 * dt).abs() < 1e-12);
    }

    #[test]
    fn right_max_density_normalises() {
        let d = DriftDynamics { c: 0.5 };
        let seg = right(0.3, 0.4);
        let mass = integrate_adaptive(|m| d.density_max(m, &seg).unwrap(), 0.3, 40.0, 1e-13, 1e-11).unwrap().value;
        assert!((mass - 1.0).abs() < 1e-5, "{mass}");
    }

    #[test]
    fn bridges_ignore_the_drift() {
        let ep = BridgeEndpoints::new(0.0, 2.0, 3.0, 4.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 100).unwrap();
        let a = gen_bridge_with_max_drift(&ep, 5.0, 0.0, &grid, &mut RandomSource::new(9)).unwrap();
        let b = gen_bridge_with_max_drift(&ep, 5.0, 7.0, &grid, &mut RandomSource::new(9)).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.max(), 5.0);
        assert_eq!((a.initial(), a.terminal()), (3.0, 4.0));
    }

    #[test]
    fn open_drift_paths_start_at_a_and_stay_below_the_maximum() {
        let p = DriftParams::new(1.0, 2.0).unwrap();
        let cfg = NumericsConfig::new(100, 1e-3, 0.1, 400, 5);
        let mut rng = RandomSource::new(cfg.seed);
        for _ in 0..5 {
            let path = gen_drift_open_with_max(3.0, 6.0, &p, 2.0, &cfg, &mut rng).unwrap();
            assert_eq!(path.initial(), 3.0);
            assert!(path.max() <= 6.0);
            assert_eq!(path.terminal(), path.values()[99]);
        }
    }

    #[test]
    fn gbm_bridge_is_positive_and_pinned() {
        let p = GBMParams::new(1.0, 2.0).unwrap();
        let spec = ConstraintSpec {
            t0: 0.0,
            t_end: 2.0,
            a: 3.0,
            b: Some(4.0),
            m: 6.0,
            kind: ExtremumKind::Max,
        };
        let cfg = NumericsConfig::new(100, 1e-3, 0.1, 400, 1);
        let path = gen_gbm_with_max(&p, &spec, &cfg, &mut RandomSource::new(1)).unwrap();
        assert!(path.values().iter().all(|&v| v > 0.0));
        assert_eq!((path.initial(), path.terminal(), path.max()), (3.0, 4.0, 6.0));
    }

    #[test]
    fn exponentiation_keeps_the_argmax_node() {
        let p = GBMParams::new(0.2, 0.5).unwrap();
        let spec = ConstraintSpec {
            t0: 0.0,
            t_end: 2.0,
            a: 3.0,
            b: Some(3.5),
            m: 6.0,
            kind: ExtremumKind::Max,
        };
        let cfg = NumericsConfig::new(100, 1e-3, 0.1, 400, 1);
        let gbm = gen_gbm_with_max(&p, &spec, &cfg, &mut RandomSource::new(4)).unwrap();
        let ep = BridgeEndpoints::new(0.0, 2.0, 3.0f64.ln(), 3.5f64.ln(), 0.5).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 100).unwrap();
        let log = gen_bridge_with_max_meander(&ep, 6.0f64.ln(), &grid, &mut RandomSource::new(4)).unwrap();
        assert_eq!(gbm.argmax(), log.argmax());
    }

    #[test]
    fn gbm_minimum_bridge_is_pinned() {
        let p = GBMParams::new(0.0, 0.5).unwrap();
        let spec = ConstraintSpec {
            t0: 0.0,
            t_end: 1.0,
            a: 3.0,
            b: Some(2.5),
            m: 1.5,
            kind: ExtremumKind::Min,
        };
        let cfg = NumericsConfig::new(50, 1e-3, 0.1, 400, 1);
        let path = gen_gbm_with_max(&p, &spec, &cfg, &mut RandomSource::new(2)).unwrap();
        assert_eq!((path.initial(), path.terminal(), path.min()), (3.0, 2.5, 1.5));
        assert!(path.values().iter().all(|&v| v >= 1.5));
    }

    #[test]
    fn ito_correction_lowers_the_log_drift() {
        let mut p = GBMParams::new(1.0, 2.0).unwrap();
        assert_eq!(p.log_drift().unwrap().c, 1.0);
        p.ito_correction = true;
        assert_eq!(p.log_drift().unwrap().c, -1.0);
    }

    #[test]
    fn non_positive_levels_are_rejected() {
        let p = GBMParams::new(1.0, 2.0).unwrap();
        let spec = ConstraintSpec {
            t0: 0.0,
            t_end: 2.0,
            a: 0.0,
            b: None,
            m: 6.0,
            kind: ExtremumKind::Max,
        };
        let cfg = NumericsConfig::new(10, 1e-3, 0.1, 100, 1);
        assert!(matches!(
            gen_gbm_with_max(&p, &spec, &cfg, &mut RandomSource::new(1)),
            Err(Error::InvalidParameter { .. })
        ));
    }
}
