//! Baseline generators: Wiener process, Brownian bridge, OU and OU bridge by
//! Euler-Maruyama, and the reflection construction of an open-ended Wiener
//! path with a prescribed maximum.

use rand::Rng;
use rand_distr::InverseGaussian;
use serde::{Deserialize, Serialize};

use crate::densities::BridgeEndpoints;
use crate::error::{Error, Result};
use crate::numerics::{Path, RandomSource, TimeGrid};

/// Parameters of `dX = kappa (mu - X) dt + sigma dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub kappa: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl OUParams {
    pub fn new(kappa: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::param("kappa", format!("must be positive, got {kappa}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        if !mu.is_finite() {
            return Err(Error::param("mu", "must be finite"));
        }
        Ok(Self { kappa, mu, sigma })
    }
}

fn check_span(ep: &BridgeEndpoints, grid: &TimeGrid) -> Result<()> {
    let tol = 1e-12 * (1.0 + ep.t2.abs());
    if (grid.t0() - ep.t1).abs() > tol || (grid.t_end() - ep.t2).abs() > tol {
        return Err(Error::param(
            "grid",
            format!(
                "grid [{}, {}] does not span the bridge interval [{}, {}]",
                grid.t0(),
                grid.t_end(),
                ep.t1,
                ep.t2
            ),
        ));
    }
    Ok(())
}

/// Wiener path started at `a` with volatility `sigma`.
pub fn gen_wiener(a: f64, sigma: f64, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be nonnegative, got {sigma}")));
    }
    let sd = sigma * grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut x = a;
    values.push(x);
    for _ in 0..grid.n_steps() {
        x += sd * rng.normal();
        values.push(x);
    }
    Path::new(*grid, values)
}

/// Map a Wiener path started at 0 onto the bridge from `x1` to `x2`:
/// `x1 + (x2 - x1) s / tau + W_s - W_tau s / tau`.
pub fn bridge_from_wiener(ep: &BridgeEndpoints, grid: &TimeGrid, wiener: &[f64]) -> Result<Path> {
    check_span(ep, grid)?;
    if wiener.len() != grid.len() {
        return Err(Error::param("values", "Wiener path length does not match the grid"));
    }
    let n = grid.n_steps();
    let tau = ep.duration();
    let w_end = wiener[n] - wiener[0];
    let mut values: Vec<f64> = (0..=n)
        .map(|i| {
            let frac = (grid.time(i) - ep.t1) / tau;
            ep.x1 + (ep.x2 - ep.x1) * frac + (wiener[i] - wiener[0]) - w_end * frac
        })
        .collect();
    values[0] = ep.x1;
    values[n] = ep.x2;
    Path::new(*grid, values)
}

/// Brownian bridge from `ep.x1` at `ep.t1` to `ep.x2` at `ep.t2`.
pub fn gen_brownian_bridge(ep: &BridgeEndpoints, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
    check_span(ep, grid)?;
    let w = gen_wiener(0.0, ep.sigma, grid, rng)?;
    bridge_from_wiener(ep, grid, w.values())
}

/// Euler-Maruyama OU path started at `a`.
pub fn gen_ou(p: &OUParams, a: f64, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
    let dt = grid.dt();
    if p.kappa * dt >= 1.0 {
        return Err(Error::UnstableStep(p.kappa * dt));
    }
    let sd = p.sigma * dt.sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut x = a;
    values.push(x);
    for _ in 0..grid.n_steps() {
        x += p.kappa * (p.mu - x) * dt + sd * rng.normal();
        values.push(x);
    }
    Path::new(*grid, values)
}

/// Drift of the shifted OU bridge `y = x - mu` towards `b_shift` with `tau`
/// time left.
pub(crate) fn ou_bridge_drift(kappa: f64, y: f64, b_shift: f64, tau: f64) -> f64 {
    let e1 = (-kappa * tau).exp();
    let denom = -(-2.0 * kappa * tau).exp_m1();
    -kappa * y + 2.0 * kappa * (b_shift * e1 - y * e1 * e1) / denom
}

/// Euler-Maruyama OU bridge; the last node is pinned to `ep.x2`.
pub fn gen_ou_bridge(p: &OUParams, ep: &BridgeEndpoints, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
    check_span(ep, grid)?;
    let dt = grid.dt();
    if p.kappa * dt >= 1.0 {
        return Err(Error::UnstableStep(p.kappa * dt));
    }
    let n = grid.n_steps();
    let sd = p.sigma * dt.sqrt();
    let b_shift = ep.x2 - p.mu;
    let mut values = Vec::with_capacity(grid.len());
    let mut y = ep.x1 - p.mu;
    values.push(ep.x1);
    for i in 0..n.saturating_sub(1) {
        let tau = ep.t2 - grid.time(i);
        y += ou_bridge_drift(p.kappa, y, b_shift, tau) * dt + sd * rng.normal();
        values.push(p.mu + y);
    }
    values.push(ep.x2);
    Path::new(*grid, values)
}

/// Open-ended Wiener path from `a` whose maximum is `m`.
///
/// A bridge from 0 to `m - a` is generated; from its first passage through
/// `m - a` on the path is replaced by `2 * running_min - bridge`, the bridge
/// reflected below its running minimum. Passage time and running minimum are
/// those of the continuous bridge between the nodes, so node values carry no
/// discretisation bias; the maximum itself falls between two nodes.
pub fn gen_wiener_open_max(a: f64, m: f64, sigma: f64, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
    if !(m > a) {
        return Err(Error::InfeasibleConstraint(format!("maximum {m} must exceed start {a}")));
    }
    let level = m - a;
    let ep = BridgeEndpoints::new(grid.t0(), grid.t_end(), 0.0, level, sigma)?;
    let w = gen_brownian_bridge(&ep, grid, rng)?.into_values();
    let var = sigma * sigma * grid.dt();

    let mut out = Vec::with_capacity(w.len());
    out.push(a);
    let mut k = 0;
    while k + 1 < w.len() {
        let (x, y) = (w[k], w[k + 1]);
        if y >= level || rng.uniform() < (-2.0 * (level - x) * (level - y) / var).exp() {
            break;
        }
        out.push(a + y);
        k += 1;
    }
    // Passage inside step k: with s the passage time into the step,
    // s / (dt - s) is inverse Gaussian.
    let (h, q) = (level - w[k], (level - w[k + 1]).abs());
    let shape = h * h / var;
    let ratio = if q > 1e-12 * (h + 1.0) {
        rng.sample(InverseGaussian::new(h / q, shape).map_err(|e| Error::DomainError(e.to_string()))?)
    } else {
        shape / rng.normal().powi(2)
    };
    let rest = var / (1.0 + ratio);
    let mut running_min = bridge_min(level, w[k + 1], rest, rng);
    out.push(a + 2.0 * running_min - w[k + 1]);
    for j in k + 1..w.len() - 1 {
        running_min = running_min.min(bridge_min(w[j], w[j + 1], var, rng));
        out.push(a + 2.0 * running_min - w[j + 1]);
    }
    Path::new(*grid, out)
}

/// The grid-level variant of [`gen_wiener_open_max`]: passage is the first
/// node at or above `m - a` and the running minimum is taken over nodes.
/// The maximum sits on that node and overshoots `m` by `O(sigma sqrt(dt))`.
pub fn gen_wiener_open_max_on_grid(a: f64, m: f64, sigma: f64, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
    if !(m > a) {
        return Err(Error::InfeasibleConstraint(format!("maximum {m} must exceed start {a}")));
    }
    let ep = BridgeEndpoints::new(grid.t0(), grid.t_end(), 0.0, m - a, sigma)?;
    let bridge = gen_brownian_bridge(&ep, grid, rng)?;
    Path::new(*grid, reflect_after_hit(bridge.values(), m - a, a))
}

// Minimum of a Brownian bridge from `x` to `y` with total variance `var`.
fn bridge_min(x: f64, y: f64, var: f64, rng: &mut RandomSource) -> f64 {
    let gap = x - y;
    0.5 * (x + y - (gap * gap - 2.0 * var * rng.uniform_pos().ln()).sqrt())
}

pub(crate) fn reflect_after_hit(w: &[f64], level: f64, offset: f64) -> Vec<f64> {
    let hit = w.iter().position(|&v| v >= level).unwrap_or(w.len() - 1);
    let mut out = Vec::with_capacity(w.len());
    out.extend(w[..hit].iter().map(|v| offset + v));
    let mut running_min = f64::INFINITY;
    for &v in &w[hit..] {
        running_min = running_min.min(v);
        out.push(offset + 2.0 * running_min - v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn zero_volatility_wiener_is_constant() {
        let mut rng = RandomSource::new(1);
        let p = gen_wiener(2.5, 0.0, &grid(10), &mut rng).unwrap();
        assert!(p.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn wiener_terminal_variance() {
        let g = TimeGrid::new(0.0, 2.0, 20).unwrap();
        let mut rng = RandomSource::new(2);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| gen_wiener(1.0, 1.5, &g, &mut rng).unwrap().terminal() - 1.0)
            .collect();
        let (_, v) = mean_var(&xs);
        let target = 1.5 * 1.5 * 2.0;
        // sd of the sample variance ≈ target * sqrt(2/(n-1))
        assert!((v - target).abs() < 3.0 * target * (2.0 / 9999.0f64).sqrt());
    }

    #[test]
    fn wiener_is_reproducible() {
        let a = gen_wiener(0.0, 1.0, &grid(50), &mut RandomSource::new(9)).unwrap();
        let b = gen_wiener(0.0, 1.0, &grid(50), &mut RandomSource::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_bridge_is_straight_line() {
        let g = TimeGrid::new(0.0, 2.0, 8).unwrap();
        let ep = BridgeEndpoints::new(0.0, 2.0, 1.0, 3.0, 1.0).unwrap();
        let p = bridge_from_wiener(&ep, &g, &[0.0; 9]).unwrap();
        for (i, v) in p.values().iter().enumerate() {
            assert!((v - (1.0 + 2.0 * g.time(i) / 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn bridge_midpoint_variance_and_mean() {
        let g = TimeGrid::new(0.0, 2.0, 10).unwrap();
        let ep = BridgeEndpoints::new(0.0, 2.0, 0.0, 0.0, 1.3).unwrap();
        let mut rng = RandomSource::new(3);
        let paths: Vec<Path> = (0..10_000).map(|_| gen_brownian_bridge(&ep, &g, &mut rng).unwrap()).collect();
        let mid: Vec<f64> = paths.iter().map(|p| p.values()[5]).collect();
        let (m, v) = mean_var(&mid);
        let target = 1.3 * 1.3 * 2.0 / 4.0;
        assert!((v - target).abs() < 3.0 * target * (2.0 / 9999.0f64).sqrt());
        assert!(m.abs() < 3.0 * (target / 10_000.0).sqrt());
        for p in &paths {
            assert_eq!(p.initial(), 0.0);
            assert_eq!(p.terminal(), 0.0);
        }
    }

    #[test]
    fn ou_zero_noise_fixed_point_and_decay() {
        let p = OUParams { kappa: 2.0, mu: 1.0, sigma: 0.0 };
        let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let mut rng = RandomSource::new(4);
        let flat = gen_ou(&p, 1.0, &g, &mut rng).unwrap();
        assert!(flat.values().iter().all(|&v| v == 1.0));
        let decay = gen_ou(&p, 3.0, &g, &mut rng).unwrap();
        assert!(decay.values().windows(2).all(|w| w[1] <= w[0]));
        let exact = 2.0 * (-2.0f64).exp();
        assert!(((decay.terminal() - 1.0) - exact).abs() < 2.0 * g.dt());
    }

    #[test]
    fn ou_rejects_unstable_step() {
        let p = OUParams::new(20.0, 0.0, 1.0).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert!(matches!(gen_ou(&p, 0.0, &g, &mut RandomSource::new(1)), Err(Error::UnstableStep(_))));
    }

    #[test]
    fn ou_stationary_variance() {
        let p = OUParams::new(1.0, 0.0, 0.8).unwrap();
        let g = TimeGrid::new(0.0, 8.0, 800).unwrap();
        let mut rng = RandomSource::new(5);
        let xs: Vec<f64> = (0..10_000).map(|_| gen_ou(&p, 0.0, &g, &mut rng).unwrap().terminal()).collect();
        let (_, v) = mean_var(&xs);
        let target = 0.64 / 2.0;
        assert!((v / target - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn ou_bridge_endpoints_and_zero_noise() {
        let p = OUParams { kappa: 1.5, mu: 0.5, sigma: 0.0 };
        let ep = BridgeEndpoints::new(0.0, 1.0, 2.0, -1.0, 1.0).unwrap();
        let g = grid(200);
        let path = gen_ou_bridge(&p, &ep, &g, &mut RandomSource::new(6)).unwrap();
        assert_eq!(path.initial(), 2.0);
        assert_eq!(path.terminal(), -1.0);
        assert!(path.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn ou_bridge_small_kappa_midpoint_variance() {
        let p = OUParams::new(1e-4, 0.0, 1.0).unwrap();
        let ep = BridgeEndpoints::new(0.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let g = grid(100);
        let mut rng = RandomSource::new(7);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| gen_ou_bridge(&p, &ep, &g, &mut rng).unwrap().values()[50])
            .collect();
        let (_, v) = mean_var(&xs);
        assert!((v / 0.25 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn reflection_keeps_maximum() {
        let g = grid(1000);
        let mut rng = RandomSource::new(8);
        for _ in 0..200 {
            let p = gen_wiener_open_max(0.5, 1.5, 1.0, &g, &mut rng).unwrap();
            assert!(p.max() <= 1.5);
            assert!(1.5 - p.max() <= 4.0 * g.dt().sqrt());
            assert_eq!(p.initial(), 0.5);

            let q = gen_wiener_open_max_on_grid(0.5, 1.5, 1.0, &g, &mut rng).unwrap();
            let j = q.argmax();
            assert!((q.max() - 1.5).abs() <= 4.0 * g.dt().sqrt());
            assert!(q.values()[j..].iter().all(|&v| v <= q.max()));
        }
        assert!(gen_wiener_open_max(1.0, 1.0, 1.0, &g, &mut rng).is_err());
    }

    #[test]
    fn reflection_terminal_law_does_not_depend_on_the_grid() {
        // The exact construction gives the same terminal law on any grid.
        let mut coarse = Vec::new();
        let mut fine = Vec::new();
        for i in 0..4000 {
            coarse.push(gen_wiener_open_max(0.0, 1.0, 1.0, &grid(5), &mut RandomSource::substream(1, i)).unwrap().terminal());
            fine.push(gen_wiener_open_max(0.0, 1.0, 1.0, &grid(400), &mut RandomSource::substream(2, i)).unwrap().terminal());
        }
        let ks = crate::validation::ks_two_sample(&coarse, &fine).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }
}
