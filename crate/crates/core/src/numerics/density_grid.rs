use crate::error::{Error, Result};
use crate::numerics::RandomSource;

/// A density tabulated on a uniform grid with its normalised trapezoidal CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    lo: f64,
    hi: f64,
    densities: Vec<f64>,
    cumulative: Vec<f64>,
    mass: f64,
}

/// Tabulate `f` on `n_points` uniform nodes of `[lo, hi]` and build the CDF.
pub fn build_density_grid(
    f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    n_points: usize,
) -> Result<DensityGrid> {
    DensityGrid::try_new(f, lo, hi, n_points)
}

/// Inverse-CDF draw from `grid`.
pub fn sample_from_grid(grid: &DensityGrid, rng: &mut RandomSource) -> f64 {
    grid.quantile(rng.uniform())
}

impl DensityGrid {
    pub fn try_new(
        mut f: impl FnMut(f64) -> f64,
        lo: f64,
        hi: f64,
        n_points: usize,
    ) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::param("hi", format!("need hi > lo, got [{lo}, {hi}]")));
        }
        if n_points < 2 {
            return Err(Error::param("n_points", "need at least two nodes"));
        }
        let h = (hi - lo) / (n_points - 1) as f64;
        let mut densities = Vec::with_capacity(n_points);
        for i in 0..n_points {
            let x = if i == n_points - 1 { hi } else { lo + i as f64 * h };
            let v = f(x);
            if v.is_nan() || v < 0.0 {
                return Err(Error::param("density", format!("invalid value {v} at {x}")));
            }
            densities.push(v);
        }
        let mut cumulative = Vec::with_capacity(n_points);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for w in densities.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cumulative.push(acc);
        }
        if !(acc >= 1e-300) || !acc.is_finite() {
            return Err(Error::TotalMassZero { lo, hi, mass: acc });
        }
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        *cumulative.last_mut().expect("n_points >= 2") = 1.0;
        Ok(Self {
            lo,
            hi,
            densities,
            cumulative,
            mass: acc,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_points(&self) -> usize {
        self.densities.len()
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Trapezoidal mass of the raw (unnormalised) tabulation.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points() {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    /// Piecewise-linear interpolation of the CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let s = (x - self.lo) / self.spacing();
        let k = (s.floor() as usize).min(self.n_points() - 2);
        let frac = s - k as f64;
        self.cumulative[k] + frac * (self.cumulative[k + 1] - self.cumulative[k])
    }

    /// Inverse of [`DensityGrid::cdf`]; `u` is clamped to `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        // first node whose cumulative value exceeds u
        let k = self.cumulative.partition_point(|&c| c <= u);
        if k == 0 {
            return self.lo;
        }
        if k >= self.n_points() {
            // u == 1: last node with positive increment
            let j = self
                .cumulative
                .partition_point(|&c| c < 1.0)
                .min(self.n_points() - 1);
            return self.node(j);
        }
        let (c0, c1) = (self.cumulative[k - 1], self.cumulative[k]);
        let frac = (u - c0) / (c1 - c0);
        let x = self.node(k - 1) + frac * self.spacing();
        x.clamp(self.lo, self.hi)
    }
}
