//! Second-kind Volterra equation behind the OU hitting-time density.
//!
//! In heat-time `theta = 1 - exp(-t)` the potential `nu` of a barrier at
//! `level` solves
//!
//! ```text
//! nu(theta) = 1 + int_0^theta k(theta, s) nu(s) / sqrt(theta - s) ds
//! k(theta, s) = (2 level / sqrt(pi)) exp(-level^2 (theta - s) / (2 - theta - s))
//!               * (1 - s) / (2 - theta - s)^(3/2)
//! ```
//!
//! The solver is the block-by-block product-integration scheme: quadratic
//! interpolation over pairs of panels, with the `1/sqrt` singularity folded
//! into exact weights.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gk15, integrate_adaptive, normal_cdf};

/// Exact weights of the three quadratic Lagrange basis functions on a
/// double panel `[y, y + 2z]` against `1/sqrt(x - s)`.
///
/// Returns `(alpha, beta, gamma)` for the left, middle and right node.
pub fn volterra_abc(x: f64, y: f64, z: f64) -> Result<(f64, f64, f64)> {
    let d = x - y;
    let tol = 1e-12 * (1.0 + x.abs());
    if !(z >= 0.0) || d - 2.0 * z < -tol {
        return Err(Error::DomainError(format!(
            "product weights need x - y >= 2z >= 0, got x - y = {d}, z = {z}"
        )));
    }
    if z == 0.0 {
        return Ok((0.0, 0.0, 0.0));
    }
    if d > 8.0 * z {
        // Far from the singularity the integrand is analytic on the panel.
        let w = |g: fn(f64) -> f64| gk15(&|s: f64| g(s) / (d - s * z).sqrt(), 0.0, 2.0).0;
        return Ok((
            0.5 * z * w(|s| (1.0 - s) * (2.0 - s)),
            z * w(|s| s * (2.0 - s)),
            0.5 * z * w(|s| s * (s - 1.0)),
        ));
    }
    // Substitute xi = sqrt(d - s z); each weight becomes a polynomial in xi.
    let upper = d.sqrt();
    let lower = (d - 2.0 * z).max(0.0).sqrt();
    let prim = |c0: f64, c1: f64, c2: f64, xi: f64| {
        let xi2 = xi * xi;
        c0 * xi
            + c1 * (d * xi - xi * xi2 / 3.0) / z
            + c2 * (d * d * xi - 2.0 * d * xi * xi2 / 3.0 + xi2 * xi2 * xi / 5.0) / (z * z)
    };
    let between = |c0: f64, c1: f64, c2: f64| prim(c0, c1, c2, upper) - prim(c0, c1, c2, lower);
    Ok((
        between(2.0, -3.0, 1.0),
        2.0 * between(0.0, 2.0, -1.0),
        between(0.0, -1.0, 1.0),
    ))
}

/// Weight of node `i` when integrating over `[0, t_last]` at `t_n`, on the
/// uniform grid `t_i = i h`. `last` must be even.
pub fn volterra_weights(n: usize, i: usize, last: usize, h: f64) -> Result<f64> {
    if i > last || last % 2 == 1 || n <= last {
        return Err(Error::DomainError(format!("bad weight index i={i}, last={last}, n={n}")));
    }
    let t = |j: usize| j as f64 * h;
    if i.is_multiple_of(2) {
        let mut w = 0.0;
        if i < last {
            w += volterra_abc(t(n), t(i), h)?.0;
        }
        if i > 0 {
            w += volterra_abc(t(n), t(i) - 2.0 * h, h)?.2;
        }
        Ok(w)
    } else {
        Ok(volterra_abc(t(n), t(i) - h, h)?.1)
    }
}

/// Regular part of the kernel.
pub fn smooth_kernel(level: f64, theta: f64, s: f64) -> f64 {
    let span = 2.0 - theta - s;
    2.0 * level / PI.sqrt() * (-level * level * (theta - s) / span).exp() * (1.0 - s) / (span * span * span).sqrt()
}

/// Nodal values `F_i ~ nu(i h)` on `[0, theta_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraSolution {
    pub level: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

impl VolterraSolution {
    pub fn theta_max(&self) -> f64 {
        self.h * (self.values.len() - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| i as f64 * self.h).collect()
    }

    /// Piecewise-quadratic interpolant over the solver's double panels.
    pub fn eval(&self, theta: f64) -> f64 {
        let blocks = (self.values.len() - 1) / 2;
        let j = ((theta / (2.0 * self.h)).floor().max(0.0) as usize).min(blocks - 1);
        let s = theta / self.h - 2.0 * j as f64;
        let f = &self.values[2 * j..2 * j + 3];
        0.5 * (1.0 - s) * (2.0 - s) * f[0] + s * (2.0 - s) * f[1] + 0.5 * s * (s - 1.0) * f[2]
    }

    /// `theta,F` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,F")?;
        for (i, f) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", i as f64 * self.h, f)?;
        }
        Ok(())
    }
}

/// Block-by-block solution with `n_blocks` double panels on `[0, theta_max]`.
pub fn solve_volterra_nu(level: f64, theta_max: f64, n_blocks: usize) -> Result<VolterraSolution> {
    if n_blocks == 0 {
        return Err(Error::param("n_blocks", "need at least one block"));
    }
    if !(theta_max > 0.0 && theta_max < 1.0) {
        return Err(Error::param("theta_max", format!("must lie in (0, 1), got {theta_max}")));
    }
    let n = 2 * n_blocks;
    let h = theta_max / n as f64;
    let t = |i: usize| i as f64 * h;
    let k = |a: f64, b: f64| smooth_kernel(level, a, b);

    // Weights depend only on the distance to the evaluation node.
    let mut abc = vec![(0.0, 0.0, 0.0); n + 3];
    for (j, w) in abc.iter_mut().enumerate().skip(2) {
        *w = volterra_abc(j as f64 * h, 0.0, h)?;
    }
    let weight = |row: usize, i: usize, last: usize| -> f64 {
        if i.is_multiple_of(2) {
            let mut w = 0.0;
            if i < last {
                w += abc[row - i].0;
            }
            if i > 0 {
                w += abc[row - i + 2].2;
            }
            w
        } else {
            abc[row - i + 1].1
        }
    };
    let (a_half, b_half, g_half) = volterra_abc(h, 0.0, 0.5 * h)?;
    let (a_full, b_full, g_full) = abc[2];

    let mut f = Vec::with_capacity(n + 1);
    f.push(1.0);
    for m in 0..n_blocks {
        let i0 = 2 * m;
        let (r1, r2) = (i0 + 1, i0 + 2);
        let (x1, x2) = (t(r1), t(r2));
        let mut hist1 = 0.0;
        let mut hist2 = 0.0;
        for (i, &fi) in f.iter().enumerate() {
            hist1 += weight(r1, i, i0) * k(x1, t(i)) * fi;
            hist2 += weight(r2, i, i0) * k(x2, t(i)) * fi;
        }
        let f0 = f[i0];
        // Half-panel rule for the first node; the midpoint value is
        // interpolated from (F0, F1, F2).
        let mid = b_half * k(x1, t(i0) + 0.5 * h);
        let top = g_half * k(x1, x1);
        let (p11, p12) = (1.0 - 0.75 * mid - top, 0.125 * mid);
        let q1 = 1.0 + hist1 + (a_half * k(x1, t(i0)) + 0.375 * mid) * f0;
        let (p21, p22) = (-b_full * k(x2, x1), 1.0 - g_full * k(x2, x2));
        let q2 = 1.0 + hist2 + a_full * k(x2, t(i0)) * f0;
        let det = p11 * p22 - p12 * p21;
        if !(det.abs() >= 1e-300) {
            return Err(Error::SingularBlock { block: m, det });
        }
        f.push((q1 * p22 - p12 * q2) / det);
        f.push((p11 * q2 - p21 * q1) / det);
    }
    Ok(VolterraSolution { level, h, values: f })
}

/// `nu(theta) - 1 - int k nu / sqrt` with `nu` replaced by the interpolant.
pub fn volterra_residual(sol: &VolterraSolution, theta: f64) -> Result<f64> {
    // s = theta - r^2 removes the square-root singularity.
    let integral = integrate_adaptive(
        |r| {
            let s = theta - r * r;
            2.0 * smooth_kernel(sol.level, theta, s) * sol.eval(s)
        },
        0.0,
        theta.sqrt(),
        1e-12,
        1e-10,
    )?;
    Ok(sol.eval(theta) - 1.0 - integral.value)
}

/// Short-time closed form `2 exp(level^2 theta / 2) Phi(level sqrt(theta))`.
pub fn nu_abel_approx(vartheta: f64, level: f64) -> f64 {
    2.0 * (0.5 * level * level * vartheta).exp() * normal_cdf(level * vartheta.sqrt())
}

/// Which approximation of `nu` feeds the hitting densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NuSolver {
    #[default]
    Volterra,
    Abel,
}

/// A callable `nu` for one barrier parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Nu {
    Abel { level: f64 },
    Table(VolterraSolution),
}

impl Nu {
    pub fn build(solver: NuSolver, level: f64, theta_max: f64, n_blocks: usize) -> Result<Self> {
        match solver {
            NuSolver::Abel => Ok(Nu::Abel { level }),
            NuSolver::Volterra => solve_volterra_nu(level, theta_max, n_blocks).map(Nu::Table),
        }
    }

    pub fn level(&self) -> f64 {
        match self {
            Nu::Abel { level } => *level,
            Nu::Table(sol) => sol.level,
        }
    }

    /// Upper end of the heat-time range covered.
    pub fn theta_max(&self) -> f64 {
        match self {
            Nu::Abel { .. } => 1.0,
            Nu::Table(sol) => sol.theta_max(),
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            Nu::Abel { level } => nu_abel_approx(theta, *level),
            Nu::Table(sol) => sol.eval(theta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abc_by_quadrature(x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        // s = 2 - 2v^2 keeps the integrand bounded when x - y = 2z.
        let q = |g: fn(f64) -> f64| {
            let f = |v: f64| 4.0 * v * g(2.0 - 2.0 * v * v) / (x - y - 2.0 * z + 2.0 * z * v * v).sqrt();
            integrate_adaptive(f, 0.0, 1.0, 1e-14, 1e-13).unwrap().value
        };
        (
            0.5 * z * q(|s| (1.0 - s) * (2.0 - s)),
            z * q(|s| s * (2.0 - s)),
            0.5 * z * q(|s| s * (s - 1.0)),
        )
    }

    #[test]
    fn closed_form_weights_match_quadrature() {
        for &(x, y, z) in &[(1.0, 0.1, 0.2), (0.5, 0.1, 0.2), (3.0, 0.0, 0.1), (1.0, 0.0, 0.01)] {
            let got = volterra_abc(x, y, z).unwrap();
            let want = abc_by_quadrature(x, y, z);
            assert!((got.0 - want.0).abs() < 1e-8, "{got:?} {want:?}");
            assert!((got.1 - want.1).abs() < 1e-8, "{got:?} {want:?}");
            assert!((got.2 - want.2).abs() < 1e-8, "{got:?} {want:?}");
        }
    }

    #[test]
    fn weights_vanish_with_panel_width() {
        let (a, b, g) = volterra_abc(1.0, 0.5, 1e-9).unwrap();
        assert!(a.abs() < 1e-8 && b.abs() < 1e-8 && g.abs() < 1e-8);
        assert_eq!(volterra_abc(1.0, 0.5, 0.0).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn negative_radicand_is_a_domain_error() {
        assert!(matches!(volterra_abc(1.0, 0.5, 0.3), Err(Error::DomainError(_))));
    }

    proptest! {
        #[test]
        fn weights_partition_the_abel_integral(d in 0.05f64..3.0, frac in 0.01f64..0.5) {
            let z = frac * d;
            let (a, b, g) = volterra_abc(d, 0.0, z).unwrap();
            let exact = 2.0 * (d.sqrt() - (d - 2.0 * z).sqrt());
            prop_assert!((a + b + g - exact).abs() < 1e-10 * (1.0 + exact));
        }
    }

    #[test]
    fn kronecker_terms_drop_at_the_ends() {
        let h = 0.05;
        // i = 0: only the alpha of the first panel.
        assert_eq!(volterra_weights(7, 0, 6, h).unwrap(), volterra_abc(7.0 * h, 0.0, h).unwrap().0);
        // i = last: only the gamma of the last panel.
        let g = volterra_abc(7.0 * h, 4.0 * h, h).unwrap().2;
        assert!((volterra_weights(7, 6, 6, h).unwrap() - g).abs() < 1e-15);
    }

    #[test]
    fn row_sum_reproduces_the_abel_integral() {
        let h = 0.1;
        for (n, last) in [(7usize, 6usize), (8, 6)] {
            let tn = n as f64 * h;
            let tl = last as f64 * h;
            let sum: f64 = (0..=last).map(|i| volterra_weights(n, i, last, h).unwrap()).sum();
            let exact = 2.0 * (tn.sqrt() - (tn - tl).sqrt());
            assert!((sum - exact).abs() < 1e-3, "{sum} vs {exact}");
        }
        // Full row at n = 8 once the last panel is added.
        let (a, b, g) = volterra_abc(0.8, 0.6, h).unwrap();
        let sum: f64 = (0..=6).map(|i| volterra_weights(8, i, 6, h).unwrap()).sum::<f64>() + a + b + g;
        assert!((sum - 2.0 * 0.8f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn zero_level_gives_unit_potential() {
        let sol = solve_volterra_nu(0.0, 0.5, 20).unwrap();
        assert!(sol.values.iter().all(|&f| f == 1.0));
        assert_eq!(nu_abel_approx(0.3, 0.0), 1.0);
        assert_eq!(nu_abel_approx(0.0, 1.7), 1.0);
    }

    #[test]
    fn solution_starts_at_one_and_has_odd_length() {
        let sol = solve_volterra_nu(1.0, 0.5, 16).unwrap();
        assert_eq!(sol.values[0], 1.0);
        assert_eq!(sol.values.len(), 33);
        assert!((sol.theta_max() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn self_convergence_under_doubling() {
        let coarse = solve_volterra_nu(1.0, 0.5, 64).unwrap();
        let fine = solve_volterra_nu(1.0, 0.5, 128).unwrap();
        let drift = coarse
            .values
            .iter()
            .enumerate()
            .map(|(i, f)| (f - fine.values[2 * i]).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-3, "{drift}");
    }

    #[test]
    fn residual_is_small_at_every_node() {
        for &level in &[1.0, -1.5] {
            let sol = solve_volterra_nu(level, 0.5, 64).unwrap();
            for theta in sol.nodes().into_iter().skip(1) {
                let r = volterra_residual(&sol, theta).unwrap();
                assert!(r.abs() < 1e-2, "level {level} theta {theta}: {r}");
            }
        }
    }

    #[test]
    fn abel_form_matches_solver_at_short_times() {
        let sol = solve_volterra_nu(0.5, 0.05, 64).unwrap();
        for theta in sol.nodes() {
            let rel = (nu_abel_approx(theta, 0.5) / sol.eval(theta) - 1.0).abs();
            assert!(rel < 0.05, "{theta}: {rel}");
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let sol = solve_volterra_nu(1.0, 0.2, 2).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("theta,F\n0,1\n"));
    }
}
