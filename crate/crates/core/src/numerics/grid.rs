use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_i = t0 + i*dt`, with the last node pinned to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
            return Err(Error::param("T", format!("need T > t0, got [{t0}, {t_end}]")));
        }
        if n_steps < 1 {
            return Err(Error::param("n_steps", "need at least one step"));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t0
    }

    pub fn time(&self, i: usize) -> f64 {
        if i >= self.n_steps {
            self.t_end
        } else {
            self.t0 + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of the node nearest to `t` (clamped to the grid).
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt()).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.n_steps)
        }
    }
}

/// Real-valued samples on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(
                "values",
                format!("expected {} values, got {}", grid.len(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("values", format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// First index attaining the maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// First index attaining the minimum.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.values[self.argmax()]
    }

    pub fn min(&self) -> f64 {
        self.values[self.argmin()]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Path> {
        Path::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_node_is_pinned() {
        let g = TimeGrid::new(0.1, 0.7, 3).unwrap();
        assert_eq!(g.time(3), 0.7);
        let ts = g.times();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(ts.len(), 4);
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn path_checks_length_and_finiteness() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(Path::new(g, vec![0.0, 1.0]).is_err());
        assert!(Path::new(g, vec![0.0, f64::NAN, 1.0]).is_err());
        let p = Path::new(g, vec![0.0, 2.0, 2.0]).unwrap();
        assert_eq!(p.argmax(), 1);
        assert_eq!(p.max(), 2.0);
        assert_eq!(p.argmin(), 0);
    }
}
