use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Composite Simpson rule with `n_panels` subintervals (rounded up to even).
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n_panels: usize) -> f64 {
    if hi == lo {
        return 0.0;
    }
    let n = (n_panels.max(2) + 1) & !1;
    let h = (hi - lo) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let x = lo + i as f64 * h;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(lo) + f(hi) + 4.0 * odd + 2.0 * even)
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

// Gauss-Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod (7/15) panel: `(value, error estimate)`.
pub(crate) fn gk15(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kronrod * h;
    let error = ((kronrod - gauss) * h).abs();
    (value, error)
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_PANELS: usize = 4000;

/// Globally adaptive Gauss-Kronrod (7/15) quadrature.
///
/// The rule never evaluates `f` at `lo` or `hi`, so integrable endpoint
/// singularities are tolerated. Fails with [`Error::QuadratureFailure`] when
/// the tolerance `max(abs_tol, rel_tol*|I|)` cannot be met.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    if lo == hi {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (value, error) = gk15(&f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { lo, hi, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut evaluations = 15;
    loop {
        if !total.is_finite() {
            return Err(Error::QuadratureFailure {
                lo,
                hi,
                estimate: total,
                error: total_err,
            });
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::QuadratureFailure {
                lo,
                hi,
                estimate: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Panel can no longer be split in floating point.
            heap.push(Panel { error: 0.0, ..worst });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = gk15(&f, worst.lo, mid);
        let (v2, e2) = gk15(&f, mid, worst.hi);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel {
            lo: worst.lo,
            hi: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            lo: mid,
            hi: worst.hi,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed accumulated rounding from the running updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Quadrature {
        value,
        error,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_constant_and_cubic() {
        assert!((integrate(|_| 1.0, 0.0, 1.0, 4) - 1.0).abs() < 1e-15);
        assert!((integrate(|x| x * x * x, 0.0, 1.0, 2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn simpson_sine() {
        let v = integrate(f64::sin, 0.0, std::f64::consts::PI, 256);
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn simpson_order_four() {
        let e1 = (integrate(f64::exp, 0.0, 1.0, 16) - (1f64.exp() - 1.0)).abs();
        let e2 = (integrate(f64::exp, 0.0, 1.0, 32) - (1f64.exp() - 1.0)).abs();
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let q = integrate_adaptive(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 1e-10).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn adaptive_reports_failure_on_divergence() {
        let r = integrate_adaptive(|x| 1.0 / x, 0.0, 1.0, 1e-12, 1e-12);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }
}
