//! Shared numerical primitives: grids, paths, the normal law, quadrature,
//! tabulated densities, scalar minimisation and the seeded random source.

mod density_grid;
mod grid;
mod normal;
mod optimize;
mod interp;
mod quad;
mod rng;

pub use density_grid::{build_density_grid, sample_from_grid, DensityGrid};
pub use grid::{Path, TimeGrid};
pub use interp::MonotoneCubic;
pub use normal::{log_normal_sf, normal_cdf, normal_pdf, normal_sf};
pub use optimize::minimize_scalar;
pub use quad::{integrate, integrate_adaptive, Quadrature};
pub(crate) use quad::gk15;
pub use rng::RandomSource;
