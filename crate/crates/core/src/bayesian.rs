//! Incremental generator for paths conditioned on their extremum.
//!
//! Each increment is drawn from the unconstrained transition density
//! reweighted by how likely the remaining path is to have maximum `M`
//! given the proposed value. The process family enters only through the
//! [`Dynamics`] trait.

use serde::{Deserialize, Serialize};

use crate::densities::{bb_increment_density, bb_max_bound_prob, bb_max_density, drift_max_bound_prob, drift_max_density, BridgeEndpoints, DriftParams};
use crate::error::{Error, Result};
use crate::numerics::{minimize_scalar, DensityGrid, Path, RandomSource, TimeGrid};

/// Whether the constraint is on the maximum or the minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    #[default]
    Max,
    Min,
}

/// Interval, start, optional terminal value and extremum of a constrained path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub t0: f64,
    pub t_end: f64,
    pub a: f64,
    pub b: Option<f64>,
    pub m: f64,
    pub kind: ExtremumKind,
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t_end.is_finite()) || self.t_end <= self.t0 {
            return Err(Error::param("T", format!("need T > t0, got [{}, {}]", self.t0, self.t_end)));
        }
        if !(self.a.is_finite() && self.m.is_finite() && self.b.is_none_or(f64::is_finite)) {
            return Err(Error::param("M", "levels must be finite"));
        }
        let (a, m, b) = match self.kind {
            ExtremumKind::Max => (self.a, self.m, self.b),
            ExtremumKind::Min => (-self.a, -self.m, self.b.map(|b| -b)),
        };
        if !(m > a) || b.is_some_and(|b| !(m > b)) {
            return Err(Error::InvalidExtremum {
                m: self.m,
                x1: self.a,
                x2: self.b.unwrap_or(self.a),
            });
        }
        Ok(())
    }

    /// The mirrored problem for `-X`.
    pub fn negated(&self) -> Self {
        Self {
            a: -self.a,
            b: self.b.map(|b| -b),
            m: -self.m,
            kind: match self.kind {
                ExtremumKind::Max => ExtremumKind::Min,
                ExtremumKind::Min => ExtremumKind::Max,
            },
            ..*self
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t0
    }
}

/// Time interval with a start value and, for bridge-type segments, an end value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t1: f64,
    pub t2: f64,
    pub x1: f64,
    pub x2: Option<f64>,
}

/// Transition and running-maximum laws of a process family.
pub trait Dynamics: Sync {
    type Negated: Dynamics;

    /// Volatility in level units, used to size search brackets.
    fn sigma(&self) -> f64;

    /// Density of `max` over the segment at `level`.
    fn density_max(&self, level: f64, seg: &Segment) -> Result<f64>;

    /// `P(max <= level)` over the segment.
    fn prob_bound(&self, level: f64, seg: &Segment) -> Result<f64>;

    /// Density of the unconstrained increment `dx` over `[t, t + dt]` from `x`.
    fn density_increment(&self, dx: f64, t: f64, dt: f64, x: f64) -> Result<f64>;

    /// Dynamics of `-X`.
    fn negated(&self) -> Result<Self::Negated>;

    /// Lower cutoff known without a search (closed form or precomputed).
    fn known_xmin(&self, _spec: &ConstraintSpec, _delta: f64) -> Option<f64> {
        None
    }
}

/// Reweighting used once the path has come within `epsilon` of the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttainedBranch {
    /// `pBoundLeft * pBoundRight`: the rest of the path stays below `M`.
    #[default]
    Product,
    /// `pBoundLeft + pBoundRight`, kept only for comparison.
    Sum,
}

/// How the generator decides that the maximum has been reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttainmentRule {
    /// Flag flips once `|M - X_i| < epsilon`.
    #[default]
    Tolerance,
    /// Flag flips at random with the posterior probability that the maximum
    /// fell inside the step just drawn. Removes the dependence on `epsilon`.
    Posterior,
}

/// Discretisation controls of the incremental generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericsConfig {
    pub n_timesteps: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub l_points: usize,
    pub seed: u64,
    #[serde(default)]
    pub per_step_xmin: bool,
    #[serde(default)]
    pub attained_branch: AttainedBranch,
    #[serde(default)]
    pub attainment: AttainmentRule,
}

impl NumericsConfig {
    pub fn new(n_timesteps: usize, delta: f64, epsilon: f64, l_points: usize, seed: u64) -> Self {
        Self {
            n_timesteps,
            delta,
            epsilon,
            l_points,
            seed,
            per_step_xmin: false,
            attained_branch: AttainedBranch::Product,
            attainment: AttainmentRule::Tolerance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_timesteps < 4 {
            return Err(Error::param("n_timesteps", "need at least 4 steps"));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::param("delta", format!("must lie in (0, 0.5), got {}", self.delta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if self.l_points < 16 {
            return Err(Error::param("L", "need at least 16 grid points"));
        }
        Ok(())
    }
}

/// Brownian motion with volatility `sigma`, optionally pinned to `b` at `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianDynamics {
    pub sigma: f64,
    pub terminal: Option<(f64, f64)>,
}

impl BrownianDynamics {
    pub fn new(sigma: f64, terminal: Option<(f64, f64)>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(Self { sigma, terminal })
    }

    /// Dynamics matching the terminal condition of `spec`.
    pub fn for_spec(sigma: f64, spec: &ConstraintSpec) -> Result<Self> {
        Self::new(sigma, spec.b.map(|b| (spec.t_end, b)))
    }

    fn bridge(&self, seg: &Segment, x2: f64) -> BridgeEndpoints {
        BridgeEndpoints {
            t1: seg.t1,
            t2: seg.t2,
            x1: seg.x1,
            x2,
            sigma: self.sigma,
        }
    }

    fn open(&self) -> DriftParams {
        DriftParams { c: 0.0, sigma: self.sigma }
    }
}

impl Dynamics for BrownianDynamics {
    type Negated = BrownianDynamics;

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn density_max(&self, level: f64, seg: &Segment) -> Result<f64> {
        Ok(match seg.x2 {
            Some(x2) => bb_max_density(level, &self.bridge(seg, x2)),
            None => drift_max_density(level - seg.x1, seg.t2 - seg.t1, &self.open()),
        })
    }

    fn prob_bound(&self, level: f64, seg: &Segment) -> Result<f64> {
        Ok(match seg.x2 {
            Some(x2) => bb_max_bound_prob(level, &self.bridge(seg, x2)),
            None => drift_max_bound_prob(level - seg.x1, seg.t2 - seg.t1, &self.open()),
        })
    }

    fn density_increment(&self, dx: f64, t: f64, dt: f64, x: f64) -> Result<f64> {
        match self.terminal {
            Some((t_end, b)) => {
                let ep = BridgeEndpoints {
                    t1: t,
                    t2: t_end,
                    x1: x,
                    x2: b,
                    sigma: self.sigma,
                };
                bb_increment_density(dx, t, dt, x, &ep)
            }
            None => {
                let var = self.sigma * self.sigma * dt;
                Ok((-0.5 * dx * dx / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
            }
        }
    }

    fn negated(&self) -> Result<Self> {
        Ok(Self {
            sigma: self.sigma,
            terminal: self.terminal.map(|(t, b)| (t, -b)),
        })
    }

    fn known_xmin(&self, spec: &ConstraintSpec, delta: f64) -> Option<f64> {
        let b = spec.b?;
        let ep = BridgeEndpoints {
            t1: spec.t0,
            t2: spec.t_end,
            x1: spec.a,
            x2: b,
            sigma: self.sigma,
        };
        Some(xmin_brownian_closed_form(&ep, delta))
    }
}

/// Increment density reweighted by the maximum constraint (product branch).
#[allow(clippy::too_many_arguments)]
pub fn density_increment_max<D: Dynamics>(
    dx: f64,
    t: f64,
    dt: f64,
    x: f64,
    spec: &ConstraintSpec,
    dynamics: &D,
    max_attained: bool,
) -> Result<f64> {
    density_increment_max_with(dx, t, dt, x, spec, dynamics, max_attained, AttainedBranch::Product)
}

/// As [`density_increment_max`] with an explicit attained-branch rule.
#[allow(clippy::too_many_arguments)]
pub fn density_increment_max_with<D: Dynamics>(
    dx: f64,
    t: f64,
    dt: f64,
    x: f64,
    spec: &ConstraintSpec,
    dynamics: &D,
    max_attained: bool,
    branch: AttainedBranch,
) -> Result<f64> {
    let m = spec.m;
    let next = x + dx;
    if next > m {
        return Ok(0.0);
    }
    let base = dynamics.density_increment(dx, t, dt, x)?;
    if base == 0.0 {
        return Ok(0.0);
    }
    let whole = Segment {
        t1: t,
        t2: spec.t_end,
        x1: x,
        x2: spec.b,
    };
    let left = Segment {
        t1: t,
        t2: t + dt,
        x1: x,
        x2: Some(next),
    };
    let right = Segment {
        t1: t + dt,
        t2: spec.t_end,
        x1: next,
        x2: spec.b,
    };
    let bound_left = dynamics.prob_bound(m, &left)?;
    let bound_right = dynamics.prob_bound(m, &right)?;
    if max_attained {
        let norm = dynamics.prob_bound(m, &whole)?;
        if !(norm > 1e-300) {
            return Err(Error::ZeroDenominator { t, x });
        }
        let weight = match branch {
            AttainedBranch::Product => bound_left * bound_right,
            AttainedBranch::Sum => bound_left + bound_right,
        };
        return Ok(base * weight / norm);
    }
    let p_max = dynamics.density_max(m, &whole)?;
    if !(p_max > 1e-300) {
        return Err(Error::ZeroDenominator { t, x });
    }
    let max_left = dynamics.density_max(m, &left)?;
    let max_right = dynamics.density_max(m, &right)?;
    Ok(base * (max_left * bound_right + bound_left * max_right) / p_max)
}

/// Posterior probability that the maximum over `[t, t_end]` lies in
/// `[t, t + dt]`, given the endpoints of that step.
fn max_in_step_probability<D: Dynamics>(
    t: f64,
    dt: f64,
    x: f64,
    next: f64,
    spec: &ConstraintSpec,
    dynamics: &D,
) -> Result<f64> {
    let left = Segment {
        t1: t,
        t2: t + dt,
        x1: x,
        x2: Some(next),
    };
    let right = Segment {
        t1: t + dt,
        t2: spec.t_end,
        x1: next,
        x2: spec.b,
    };
    let here = dynamics.density_max(spec.m, &left)? * dynamics.prob_bound(spec.m, &right)?;
    let later = dynamics.prob_bound(spec.m, &left)? * dynamics.density_max(spec.m, &right)?;
    Ok(if here + later > 0.0 { here / (here + later) } else { 0.0 })
}

/// Lower cutoff of the bridge minimum: `P(min <= X_min) = delta`.
pub fn xmin_brownian_closed_form(ep: &BridgeEndpoints, delta: f64) -> f64 {
    let (a, b) = (ep.x1, ep.x2);
    let s2t = ep.sigma * ep.sigma * ep.duration();
    0.5 * (a + b) - 0.5 * ((a - b) * (a - b) - 2.0 * s2t * delta.ln()).sqrt()
}

/// Lower cutoff found by minimising `|1 - P(max(-X) <= -x) - delta|`.
pub fn xmin_numeric<D: Dynamics>(dynamics: &D, spec: &ConstraintSpec, delta: f64) -> Result<f64> {
    let neg = dynamics.negated()?;
    let seg = Segment {
        t1: spec.t0,
        t2: spec.t_end,
        x1: -spec.a,
        x2: spec.b.map(|b| -b),
    };
    let hi = spec.b.map_or(spec.a, |b| b.min(spec.a));
    let lo = spec.a - 20.0 * dynamics.sigma() * spec.duration().sqrt();
    let failure = std::cell::Cell::new(None);
    let objective = |x: f64| match neg.prob_bound(-x, &seg) {
        Ok(p) => (1.0 - p - delta).abs(),
        Err(e) => {
            failure.set(Some(e));
            f64::INFINITY
        }
    };
    let tol = 1e-12 * (1.0 + hi.abs() + lo.abs());
    let x = minimize_scalar(objective, lo, hi, tol)?;
    match failure.take() {
        Some(e) => Err(e),
        None => Ok(x),
    }
}

fn lower_cutoff<D: Dynamics>(dynamics: &D, spec: &ConstraintSpec, delta: f64) -> Result<f64> {
    match dynamics.known_xmin(spec, delta) {
        Some(x) => Ok(x),
        None => xmin_numeric(dynamics, spec, delta),
    }
}

fn generate_max<D: Dynamics>(
    spec: &ConstraintSpec,
    dynamics: &D,
    cfg: &NumericsConfig,
    start_attained: bool,
    rng: &mut RandomSource,
) -> Result<Path> {
    let grid = TimeGrid::new(spec.t0, spec.t_end, cfg.n_timesteps)?;
    let n = grid.n_steps();
    let dt = grid.dt();
    let floor_width = 8.0 * dynamics.sigma() * dt.sqrt();
    let mut x_min = lower_cutoff(dynamics, spec, cfg.delta)?;
    let mut values = Vec::with_capacity(n + 1);
    values.push(spec.a);
    let mut attained = start_attained;
    for i in 0..n - 1 {
        let t = grid.time(i);
        let x = values[i];
        if cfg.per_step_xmin && i > 0 {
            let sub = ConstraintSpec { t0: t, a: x, ..*spec };
            x_min = lower_cutoff(dynamics, &sub, cfg.delta).map_err(|e| e.at_step(i))?;
        }
        let hi = spec.m - x;
        let lo = (x_min - x).min(-floor_width);
        let mut failure = None;
        let table = DensityGrid::try_new(
            |dx| match density_increment_max_with(dx, t, dt, x, spec, dynamics, attained, cfg.attained_branch) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            lo,
            hi,
            cfg.l_points,
        );
        if let Some(e) = failure {
            return Err(e.at_step(i));
        }
        let table = table.map_err(|e| e.at_step(i))?;
        let dx = table.quantile(rng.uniform());
        let next = (x + dx).min(spec.m);
        match cfg.attainment {
            AttainmentRule::Tolerance => {
                if (spec.m - x).abs() < cfg.epsilon {
                    attained = true;
                }
            }
            AttainmentRule::Posterior => {
                if !attained && rng.uniform() < max_in_step_probability(t, dt, x, next, spec, dynamics).map_err(|e| e.at_step(i))? {
                    attained = true;
                }
            }
        }
        values.push(next);
    }
    let last = spec.b.unwrap_or(values[n - 1]);
    values.push(last);
    Path::new(grid, values)
}

fn generate<D: Dynamics>(
    spec: &ConstraintSpec,
    dynamics: &D,
    cfg: &NumericsConfig,
    start_attained: bool,
    rng: &mut RandomSource,
) -> Result<Path> {
    spec.validate()?;
    cfg.validate()?;
    match spec.kind {
        ExtremumKind::Max => generate_max(spec, dynamics, cfg, start_attained, rng),
        ExtremumKind::Min => {
            let mirrored = spec.negated();
            let path = generate_max(&mirrored, &dynamics.negated()?, cfg, start_attained, rng)?;
            path.map(|v| -v)
        }
    }
}

/// Path from `spec.a` to `spec.b` (or open-ended) with extremum `spec.m`.
pub fn gen_constrained_bayesian<D: Dynamics>(
    spec: &ConstraintSpec,
    dynamics: &D,
    cfg: &NumericsConfig,
    rng: &mut RandomSource,
) -> Result<Path> {
    generate(spec, dynamics, cfg, false, rng)
}

/// Open-ended variant; the last node repeats the penultimate one.
pub fn gen_open_constrained<D: Dynamics>(
    spec: &ConstraintSpec,
    dynamics: &D,
    cfg: &NumericsConfig,
    rng: &mut RandomSource,
) -> Result<Path> {
    if spec.b.is_some() {
        return Err(Error::param("b", "open-ended generation takes no terminal value"));
    }
    generate(spec, dynamics, cfg, false, rng)
}

/// Path conditioned only on staying below `spec.m` (above it for a minimum).
pub fn gen_bounded_bayesian<D: Dynamics>(
    spec: &ConstraintSpec,
    dynamics: &D,
    cfg: &NumericsConfig,
    rng: &mut RandomSource,
) -> Result<Path> {
    generate(spec, dynamics, cfg, true, rng)
}

/// Affine correction so that the maximum is exactly `m` and, for bridges,
/// the terminal value is exactly `b`.
pub fn rectify(path: &Path, a: f64, b: Option<f64>, m: f64) -> Result<Path> {
    let mut v = path.values().to_vec();
    let j = path.argmax();
    let top = v[j];
    if top <= a {
        return Err(Error::DegenerateScale(format!("path maximum {top} does not exceed start {a}")));
    }
    let s1 = (m - a) / (top - a);
    if s1 != 1.0 {
        for x in v.iter_mut() {
            *x = (a + s1 * (*x - a)).min(m);
        }
    }
    v[0] = a;
    v[j] = m;
    if let Some(b) = b {
        let n = v.len() - 1;
        let end = v[n];
        if j == n || end >= m {
            return Err(Error::DegenerateScale(format!("terminal value {end} reaches the maximum {m}")));
        }
        let s2 = (m - b) / (m - end);
        if s2 != 1.0 {
            for x in v[j + 1..].iter_mut() {
                *x = (m + s2 * (*x - m)).min(m);
            }
        }
        v[n] = b;
    }
    Path::new(*path.grid(), v)
}

/// [`rectify`] for either extremum kind.
pub fn rectify_extremum(path: &Path, spec: &ConstraintSpec) -> Result<Path> {
    match spec.kind {
        ExtremumKind::Max => rectify(path, spec.a, spec.b, spec.m),
        ExtremumKind::Min => {
            let flipped = path.map(|v| -v)?;
            rectify(&flipped, -spec.a, spec.b.map(|b| -b), -spec.m)?.map(|v| -v)
        }
    }
}
