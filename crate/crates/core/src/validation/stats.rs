use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numerics::{integrate_adaptive, Path, TimeGrid};

/// Equal-width histogram over `[t0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub t0: f64,
    pub t_end: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(t0: f64, t_end: f64, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::param("n_bins", "need at least two bins"));
        }
        if !(t_end > t0) {
            return Err(Error::param("T", "empty histogram range"));
        }
        Ok(Self {
            t0,
            t_end,
            counts: vec![0; n_bins],
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.t_end - self.t0) / self.n_bins() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin of `t`. Values on an interior edge go to the upper bin; a small
    /// relative slack keeps grid nodes that sit on edges from flipping bins.
    pub fn bin_of(&self, t: f64) -> usize {
        let s = (t - self.t0) / self.width();
        let k = (s + 1e-9).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.n_bins() - 1)
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins())
            .map(|k| self.t0 + k as f64 * self.width())
            .collect()
    }

    pub fn add(&mut self, t: f64) {
        let k = self.bin_of(t);
        self.counts[k] += 1;
    }

    /// Counts normalised to a density over `[t0, t_end]`.
    pub fn density(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / (n * self.width())).collect()
    }
}

/// Histogram of the argmax times of `paths` (all on the same interval).
pub fn histogram_argmax(paths: &[Path], n_bins: usize) -> Result<Histogram> {
    let first = paths
        .first()
        .ok_or_else(|| Error::InsufficientSamples("no paths".into()))?;
    let grid = first.grid();
    let mut h = Histogram::new(grid.t0(), grid.t_end(), n_bins)?;
    for p in paths {
        h.add(p.grid().time(p.argmax()));
    }
    Ok(h)
}

/// Outcome of a Pearson goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of `observed` counts against cell probabilities `probs`
/// (renormalised). Adjacent cells are merged until each expects at least 5.
pub fn chi_square_counts(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probs.len() {
        return Err(Error::param("probs", "length differs from observed counts"));
    }
    let n: u64 = observed.iter().sum();
    let total_p: f64 = probs.iter().sum();
    if n == 0 || !(total_p > 0.0) {
        return Err(Error::InsufficientSamples("no observations".into()));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += n as f64 * p / total_p;
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => cells.push((o_acc, e_acc)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} usable cell(s) after merging",
            cells.len()
        )));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let law = ChiSquared::new(dof as f64).map_err(|e| Error::param("dof", e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: law.sf(statistic),
    })
}

fn mass(density: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    Ok(integrate_adaptive(density, lo, hi, 1e-12, 1e-9)?.value)
}

/// Pearson test of a histogram against bin-integrated masses of `density`.
pub fn chi_square_vs_density(hist: &Histogram, density: impl Fn(f64) -> f64) -> Result<ChiSquare> {
    let edges = hist.edges();
    let probs = edges
        .windows(2)
        .map(|w| mass(&density, w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    chi_square_counts(&hist.counts, &probs)
}

/// As [`chi_square_vs_density`] for argmax times that live on `grid` nodes:
/// each node collects the mass of its half-step cell (clipped to the
/// interval) and passes it to the bin containing the node. Nodes outside
/// `[first_node, last_node]` hand their mass to the nearest allowed node.
pub fn chi_square_on_grid(
    hist: &Histogram,
    grid: &TimeGrid,
    first_node: usize,
    last_node: usize,
    density: impl Fn(f64) -> f64,
) -> Result<ChiSquare> {
    let probs = grid_bin_probs(hist, grid, first_node, last_node, &density)?;
    chi_square_counts(&hist.counts, &probs)
}

/// Bin probabilities used by [`chi_square_on_grid`].
pub fn grid_bin_probs(
    hist: &Histogram,
    grid: &TimeGrid,
    first_node: usize,
    last_node: usize,
    density: &dyn Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    let half = 0.5 * grid.dt();
    let mut probs = vec![0.0; hist.n_bins()];
    for j in 0..grid.len() {
        let t = grid.time(j);
        let lo = (t - half).max(grid.t0());
        let hi = (t + half).min(grid.t_end());
        let node = j.clamp(first_node, last_node);
        probs[hist.bin_of(grid.time(node))] += mass(density, lo, hi)?;
    }
    Ok(probs)
}

/// Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample KS test.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsTest> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InsufficientSamples("empty sample".into()));
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsTest {
        statistic: d,
        p_value: ks_p_value(d, n * m / (n + m)),
    })
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsTest> {
    if x.is_empty() {
        return Err(Error::InsufficientSamples("empty sample".into()));
    }
    let mut a = x.to_vec();
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in a.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsTest {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}
