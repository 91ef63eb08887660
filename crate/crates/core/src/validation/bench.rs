use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bayesian::{gen_constrained_bayesian, BrownianDynamics, ConstraintSpec, ExtremumKind, NumericsConfig};
use crate::densities::BridgeEndpoints;
use crate::error::{Error, Result};
use crate::meander::gen_bridge_with_max_meander;
use crate::numerics::{RandomSource, TimeGrid};

/// Mean wall-clock seconds per call of `f` over `n` calls.
pub fn time_per_path(n: usize, mut f: impl FnMut(u64) -> Result<()>) -> Result<f64> {
    if n == 0 {
        return Err(Error::InsufficientSamples("no timed paths".into()));
    }
    let start = Instant::now();
    for i in 0..n {
        f(i as u64)?;
    }
    Ok(start.elapsed().as_secs_f64() / n as f64)
}

/// Per-path cost of the meander construction (argmax table built per path).
pub fn time_method1(ep: &BridgeEndpoints, m: f64, n_timesteps: usize, n_paths: usize, seed: u64) -> Result<f64> {
    let grid = TimeGrid::new(ep.t1, ep.t2, n_timesteps)?;
    time_per_path(n_paths, |i| {
        gen_bridge_with_max_meander(ep, m, &grid, &mut RandomSource::substream(seed, i)).map(|_| ())
    })
}

/// Per-path cost of the incremental generator on a Brownian bridge.
pub fn time_method2(ep: &BridgeEndpoints, m: f64, cfg: &NumericsConfig, n_paths: usize) -> Result<f64> {
    let spec = ConstraintSpec {
        t0: ep.t1,
        t_end: ep.t2,
        a: ep.x1,
        b: Some(ep.x2),
        m,
        kind: ExtremumKind::Max,
    };
    let dynamics = BrownianDynamics::for_spec(ep.sigma, &spec)?;
    time_per_path(n_paths, |i| {
        gen_constrained_bayesian(&spec, &dynamics, cfg, &mut RandomSource::substream(cfg.seed, i)).map(|_| ())
    })
}

/// Timings of both bridge constructions and the ratios reported on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub n_paths: usize,
    pub n_timesteps: usize,
    pub l_points: usize,
    pub method1_seconds: f64,
    pub method2_seconds: f64,
    /// Method 2 over Method 1 per-path cost.
    pub ratio: f64,
    /// Per-path cost at `2 * n_timesteps` over the cost at `n_timesteps`.
    pub method1_doubling: Option<f64>,
    pub method2_doubling: Option<f64>,
}

/// Times both methods on the same bridge; `doubling` adds the runs at twice the steps.
pub fn benchmark(ep: &BridgeEndpoints, m: f64, cfg: &NumericsConfig, n_paths: usize, doubling: bool) -> Result<TimingReport> {
    let m1 = time_method1(ep, m, cfg.n_timesteps, n_paths, cfg.seed)?;
    let m2 = time_method2(ep, m, cfg, n_paths)?;
    let (d1, d2) = if doubling {
        let twice = NumericsConfig {
            n_timesteps: 2 * cfg.n_timesteps,
            ..*cfg
        };
        (
            Some(time_method1(ep, m, twice.n_timesteps, n_paths, cfg.seed)? / m1),
            Some(time_method2(ep, m, &twice, n_paths)? / m2),
        )
    } else {
        (None, None)
    };
    Ok(TimingReport {
        n_paths,
        n_timesteps: cfg.n_timesteps,
        l_points: cfg.l_points,
        method1_seconds: m1,
        method2_seconds: m2,
        ratio: m2 / m1,
        method1_doubling: d1,
        method2_doubling: d2,
    })
}
