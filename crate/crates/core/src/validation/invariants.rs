use serde::{Deserialize, Serialize};

use crate::bayesian::ExtremumKind;
use crate::numerics::Path;

use super::report::ValidationReport;

/// What a batch of constrained paths must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantSpec {
    pub a: f64,
    pub b: Option<f64>,
    pub m: f64,
    pub kind: ExtremumKind,
    /// A path attains the extremum when it comes within this distance.
    pub tolerance: f64,
    /// Required share of paths that attain within `tolerance`.
    pub min_attained: f64,
    /// The extremum must be hit exactly (rectified or constructed paths).
    pub exact: bool,
    /// Values must be strictly positive.
    pub positive: bool,
    /// Compare levels after taking logarithms (geometric paths).
    pub log_levels: bool,
}

impl InvariantSpec {
    pub fn new(a: f64, b: Option<f64>, m: f64, kind: ExtremumKind, tolerance: f64) -> Self {
        Self {
            a,
            b,
            m,
            kind,
            tolerance,
            min_attained: 0.95,
            exact: false,
            positive: false,
            log_levels: false,
        }
    }

    // Extremum of the path in the orientation where it is a maximum.
    fn oriented_extremum(&self, p: &Path) -> (f64, f64) {
        match self.kind {
            ExtremumKind::Max => (p.max(), self.m),
            ExtremumKind::Min => (-p.min(), -self.m),
        }
    }
}

/// One record per invariant over the whole batch.
pub fn invariant_suite(paths: &[Path], spec: &InvariantSpec, seed: u64) -> ValidationReport {
    let n = paths.len();
    let mut report = ValidationReport::default();
    let count = |f: &dyn Fn(&Path) -> bool| paths.iter().filter(|p| f(p)).count();

    let bad_start = count(&|p| p.initial() != spec.a);
    report.push("start-pinned", bad_start as f64, 0.0, bad_start == 0, n, seed);
    if let Some(b) = spec.b {
        let bad_end = count(&|p| p.terminal() != b);
        report.push("end-pinned", bad_end as f64, 0.0, bad_end == 0, n, seed);
    }
    let over = count(&|p| {
        let (e, m) = spec.oriented_extremum(p);
        e > m
    });
    report.push("extremum-bound", over as f64, 0.0, over == 0, n, seed);

    let gap = |p: &Path| {
        let (e, m) = spec.oriented_extremum(p);
        if spec.log_levels {
            (m.abs().ln() - e.abs().ln()).abs()
        } else {
            m - e
        }
    };
    let attained = count(&|p| gap(p) <= spec.tolerance);
    let share = if n == 0 { 0.0 } else { attained as f64 / n as f64 };
    report.push("extremum-attained", share, spec.min_attained, n > 0 && share >= spec.min_attained, n, seed);
    if spec.exact {
        let missed = count(&|p| spec.oriented_extremum(p).0 != spec.oriented_extremum(p).1);
        report.push("exact-attainment", missed as f64, 0.0, missed == 0, n, seed);
    }
    if spec.positive {
        let non_positive = count(&|p| p.values().iter().any(|&v| !(v > 0.0)));
        report.push("positivity", non_positive as f64, 0.0, non_positive == 0, n, seed);
    }
    report
}
