//! Ornstein-Uhlenbeck extremum laws and the matching generator adapters.
//!
//! Everything is computed for the unit process `dY = -Y dt + dW` and mapped
//! back with [`NormalizedOUCoords`].

pub mod coords;
pub mod dynamics;
pub mod extremum;
pub mod hitting;
pub mod volterra;

pub use coords::{scale_and_speed, LinearDiffusionSpec, NormalizedOUCoords};
pub use dynamics::OuDynamics;
pub use extremum::{ou_max_bound_prob, ou_max_density, unit_open_max_density, OuMode, OuNumerics, UnitMaxLaw};
pub use hitting::{heat_time, unit_transition_density, Barrier};
pub use volterra::{
    nu_abel_approx, smooth_kernel, solve_volterra_nu, volterra_abc, volterra_residual, volterra_weights, Nu, NuSolver,
    VolterraSolution,
};
