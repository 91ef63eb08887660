//! Brownian meanders built from three independent bridges, and bridges with a
//! prescribed maximum obtained by joining two time-reversed meanders at a
//! sampled argmax.

use serde::{Deserialize, Serialize};

use crate::densities::{bb_argmax_density_given_max, BridgeEndpoints};
use crate::error::{Error, Result};
use crate::numerics::{DensityGrid, Path, RandomSource, TimeGrid};

/// Node count of the tabulated argmax law.
pub const ARGMAX_GRID_POINTS: usize = 4096;

/// A meander `a + sigma sqrt(T) W^{me, r/(sigma sqrt T)}_{t/T}` ending at `a + r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanderSpec {
    pub r: f64,
    pub t: f64,
    pub sigma: f64,
    pub a: f64,
}

impl MeanderSpec {
    pub fn new(r: f64, t: f64, sigma: f64, a: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::param("r", format!("must be nonnegative, got {r}")));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param("T", format!("must be positive, got {t}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(Self { r, t, sigma, a })
    }
}

/// Standard bridge 0 -> 0 on `n` equal steps of `[0, 1]`.
fn unit_bridge(n: usize, rng: &mut RandomSource) -> Vec<f64> {
    let sd = (1.0 / n as f64).sqrt();
    let mut w = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    w.push(x);
    for _ in 0..n {
        x += sd * rng.normal();
        w.push(x);
    }
    let end = w[n];
    for (i, v) in w.iter_mut().enumerate() {
        *v -= end * i as f64 / n as f64;
    }
    w[n] = 0.0;
    w
}

/// Standard meander values at `k/n`, `k = 0..=n`, from three given unit bridges.
pub fn meander_from_bridges(r: f64, b1: &[f64], b2: &[f64], b3: &[f64]) -> Vec<f64> {
    let n = b1.len() - 1;
    let mut out: Vec<f64> = (0..=n)
        .map(|k| {
            let s = if k == n { 1.0 } else { k as f64 / n as f64 };
            let x = r * s + b1[k];
            (x * x + b2[k] * b2[k] + b3[k] * b3[k]).sqrt()
        })
        .collect();
    out[0] = 0.0;
    out[n] = r;
    out
}

fn standard_meander_values(r: f64, n: usize, rng: &mut RandomSource) -> Vec<f64> {
    let b1 = unit_bridge(n, rng);
    let b2 = unit_bridge(n, rng);
    let b3 = unit_bridge(n, rng);
    meander_from_bridges(r, &b1, &b2, &b3)
}

/// Meander from 0 to `r` on the unit interval.
pub fn gen_standard_meander(r: f64, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
    if (grid.t0() != 0.0) || (grid.t_end() != 1.0) {
        return Err(Error::param("grid", "standard meander lives on [0, 1]"));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::param("r", format!("must be nonnegative, got {r}")));
    }
    Path::new(*grid, standard_meander_values(r, grid.n_steps(), rng))
}

fn scaled_meander_values(spec: &MeanderSpec, n: usize, rng: &mut RandomSource) -> Vec<f64> {
    let scale = spec.sigma * spec.t.sqrt();
    let mut v = standard_meander_values(spec.r / scale, n, rng);
    for x in v.iter_mut() {
        *x = spec.a + scale * *x;
    }
    v[0] = spec.a;
    v[n] = spec.a + spec.r;
    v
}

/// Meander from `a` to `a + r` over a grid of duration `spec.t`.
pub fn gen_scaled_meander(spec: &MeanderSpec, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
    if (grid.duration() - spec.t).abs() > 1e-12 * spec.t {
        return Err(Error::param("grid", "grid duration must equal the meander duration"));
    }
    Path::new(*grid, scaled_meander_values(spec, grid.n_steps(), rng))
}

/// Tabulated argmax law of a bridge conditioned on its maximum.
#[derive(Debug, Clone)]
pub struct ArgmaxSampler {
    ep: BridgeEndpoints,
    m: f64,
    table: DensityGrid,
}

impl ArgmaxSampler {
    pub fn new(m: f64, ep: &BridgeEndpoints) -> Result<Self> {
        // validates m before tabulating
        bb_argmax_density_given_max(0.5 * (ep.t1 + ep.t2), m, ep)?;
        let table = DensityGrid::try_new(
            |t| bb_argmax_density_given_max(t, m, ep).unwrap_or(0.0),
            ep.t1,
            ep.t2,
            ARGMAX_GRID_POINTS,
        )?;
        Ok(Self { ep: *ep, m, table })
    }

    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        // open interval: the density vanishes at both ends
        self.table
            .quantile(rng.uniform())
            .clamp(self.ep.t1 + f64::EPSILON * self.ep.t2.abs(), self.ep.t2)
    }

    pub fn table(&self) -> &DensityGrid {
        &self.table
    }

    /// Bridge conditioned on its maximum, with the argmax snapped to the
    /// nearest interior node of `grid`.
    pub fn sample_path(&self, grid: &TimeGrid, rng: &mut RandomSource) -> Result<Path> {
        let n = grid.n_steps();
        if n < 3 {
            return Err(Error::param("n_steps", "need at least four grid nodes"));
        }
        let theta = self.sample(rng);
        let j = grid.nearest_index(theta).clamp(1, n - 1);
        let dt = grid.dt();
        let (a, b, m, sigma) = (self.ep.x1, self.ep.x2, self.m, self.ep.sigma);

        let left = scaled_meander_values(&MeanderSpec::new(m - a, j as f64 * dt, sigma, 0.0)?, j, rng);
        let right = scaled_meander_values(&MeanderSpec::new(m - b, (n - j) as f64 * dt, sigma, 0.0)?, n - j, rng);

        let mut values = Vec::with_capacity(n + 1);
        values.extend((0..j).map(|k| m - left[j - k]));
        values.extend(right.iter().map(|v| m - v));
        values[0] = a;
        values[j] = m;
        values[n] = b;
        Path::new(*grid, values)
    }
}

/// Draw the location of the maximum of the bridge `ep` given the maximum `m`.
pub fn sample_argmax(m: f64, ep: &BridgeEndpoints, rng: &mut RandomSource) -> Result<f64> {
    Ok(ArgmaxSampler::new(m, ep)?.sample(rng))
}

/// Brownian bridge from `ep.x1` to `ep.x2` conditioned on its maximum `m`.
///
/// Tabulates the argmax law on every call; use [`ArgmaxSampler`] for batches.
pub fn gen_bridge_with_max_meander(
    ep: &BridgeEndpoints,
    m: f64,
    grid: &TimeGrid,
    rng: &mut RandomSource,
) -> Result<Path> {
    ArgmaxSampler::new(m, ep)?.sample_path(grid, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_noise_meander_is_linear() {
        let z = vec![0.0; 11];
        let v = meander_from_bridges(1.5, &z, &z, &z);
        for (k, x) in v.iter().enumerate() {
            assert!((x - 1.5 * k as f64 / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn standard_meander_endpoints_and_sign() {
        let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let mut rng = RandomSource::new(1);
        for r in [0.0, 1.0] {
            for _ in 0..10_000 {
                let p = gen_standard_meander(r, &g, &mut rng).unwrap();
                assert_eq!(p.initial(), 0.0);
                assert_eq!(p.terminal(), r);
                assert!(p.values().iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn identity_scaling_matches_standard() {
        let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let spec = MeanderSpec::new(0.7, 1.0, 1.0, 0.0).unwrap();
        let a = gen_scaled_meander(&spec, &g, &mut RandomSource::new(5)).unwrap();
        let b = gen_standard_meander(0.7, &g, &mut RandomSource::new(5)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn scaled_variance_ratio() {
        let n = 10_000;
        let g1 = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let g2 = TimeGrid::new(0.0, 3.0, 20).unwrap();
        let (sigma, t): (f64, f64) = (1.7, 3.0);
        let mut rng = RandomSource::new(6);
        let std_mid: Vec<f64> = (0..n)
            .map(|_| gen_standard_meander(0.4, &g1, &mut rng).unwrap().values()[10])
            .collect();
        let spec = MeanderSpec::new(0.4 * sigma * t.sqrt(), t, sigma, 2.0).unwrap();
        let sc_mid: Vec<f64> = (0..n)
            .map(|_| gen_scaled_meander(&spec, &g2, &mut rng).unwrap().values()[10])
            .collect();
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        };
        let ratio = var(&sc_mid) / var(&std_mid) / (sigma * sigma * t);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn argmax_symmetric_mean() {
        let ep = BridgeEndpoints::new(0.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        let s = ArgmaxSampler::new(2.0, &ep).unwrap();
        let mut rng = RandomSource::new(7);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((m - 1.0).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn argmax_near_low_max_sits_by_higher_endpoint() {
        let ep = BridgeEndpoints::new(0.0, 2.0, 3.0, 4.0, 1.0).unwrap();
        let s = ArgmaxSampler::new(4.05, &ep).unwrap();
        let mut rng = RandomSource::new(8);
        let xs: Vec<f64> = (0..20_000).map(|_| s.sample(&mut rng)).collect();
        let first = xs.iter().filter(|&&t| t < 0.5).count();
        let last = xs.iter().filter(|&&t| t > 1.5).count();
        assert!(last > 10 * first.max(1), "{first} vs {last}");
    }

    #[test]
    fn argmax_rejects_low_max() {
        let ep = BridgeEndpoints::new(0.0, 2.0, 3.0, 4.0, 1.0).unwrap();
        assert!(matches!(
            sample_argmax(4.0, &ep, &mut RandomSource::new(1)),
            Err(Error::InvalidExtremum { .. })
        ));
    }

    #[test]
    fn bridge_with_max_is_exact() {
        let ep = BridgeEndpoints::new(0.0, 1.0, 1.0, 3.0, 1.0).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let s = ArgmaxSampler::new(5.0, &ep).unwrap();
        let mut rng = RandomSource::new(9);
        for _ in 0..500 {
            let p = s.sample_path(&g, &mut rng).unwrap();
            let j = p.argmax();
            assert_eq!(p.max(), 5.0);
            assert_eq!(p.initial(), 1.0);
            assert_eq!(p.terminal(), 3.0);
            assert!(p.values().iter().enumerate().all(|(i, &v)| i == j || v < 5.0));
        }
    }

    #[test]
    fn short_grid_is_rejected() {
        let ep = BridgeEndpoints::new(0.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(gen_bridge_with_max_meander(&ep, 1.0, &g, &mut RandomSource::new(1)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn meander_is_nonnegative_with_exact_ends(r in 0.0f64..5.0, seed in any::<u64>(), n in 1usize..60) {
            let g = TimeGrid::new(0.0, 1.0, n).unwrap();
            let p = gen_standard_meander(r, &g, &mut RandomSource::new(seed)).unwrap();
            prop_assert!(p.values().iter().all(|&v| v >= 0.0));
            prop_assert_eq!(p.initial(), 0.0);
            prop_assert_eq!(p.terminal(), r);
        }

        #[test]
        fn scaled_meander_endpoints(r in 0.0f64..5.0, t in 0.1f64..4.0, sigma in 0.1f64..3.0, a in -5.0f64..5.0, seed in any::<u64>()) {
            let spec = MeanderSpec::new(r, t, sigma, a).unwrap();
            let g = TimeGrid::new(0.0, t, 16).unwrap();
            let p = gen_scaled_meander(&spec, &g, &mut RandomSource::new(seed)).unwrap();
            prop_assert_eq!(p.initial(), a);
            prop_assert_eq!(p.terminal(), a + r);
            prop_assert!(p.values().iter().all(|&v| v >= a));
        }

        #[test]
        fn conditioned_bridge_is_exact(
            a in -2.0f64..2.0, b in -2.0f64..2.0, gap in 0.05f64..3.0,
            sigma in 0.2f64..3.0, n in 3usize..80, seed in any::<u64>()
        ) {
            let m = a.max(b) + gap;
            let ep = BridgeEndpoints::new(0.0, 1.5, a, b, sigma).unwrap();
            let g = TimeGrid::new(0.0, 1.5, n).unwrap();
            let p = gen_bridge_with_max_meander(&ep, m, &g, &mut RandomSource::new(seed)).unwrap();
            let j = p.argmax();
            prop_assert_eq!(p.max(), m);
            prop_assert_eq!(p.initial(), a);
            prop_assert_eq!(p.terminal(), b);
            prop_assert!(j >= 1 && j < n);
            prop_assert!(p.values().iter().enumerate().all(|(i, &v)| i == j || v < m));
        }
    }
}
