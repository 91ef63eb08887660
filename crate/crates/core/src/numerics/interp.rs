use crate::error::{Error, Result};

/// Shape-preserving piecewise cubic (Fritsch-Carlson) through `(xs, ys)`.
///
/// Outside the node range the end cubic is replaced by the end chord.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::param("nodes", format!("need matching node arrays of length >= 2, got {} and {}", n, ys.len())));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::param("nodes", "abscissae must increase and ordinates be finite"));
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = delta[0];
        slopes[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            let d = (self.ys[1] - self.ys[0]) / (self.xs[1] - self.xs[0]);
            return self.ys[0] + d * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            let d = (self.ys[n - 1] - self.ys[n - 2]) / (self.xs[n - 1] - self.xs[n - 2]);
            return self.ys[n - 1] + d * (x - self.xs[n - 1]);
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.ys[i]
            + (s3 - 2.0 * s2 + s) * h * self.slopes[i]
            + (-2.0 * s3 + 3.0 * s2) * self.ys[i + 1]
            + (s3 - s2) * h * self.slopes[i + 1]
    }
}
