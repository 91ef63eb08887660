//! Statistical checks of generated batches.

mod bench;
mod invariants;
mod report;
mod stats;

pub use bench::{benchmark, time_method1, time_method2, time_per_path, TimingReport};
pub use invariants::{invariant_suite, InvariantSpec};
pub use report::{ValidationRecord, ValidationReport};
pub use stats::{
    chi_square_counts, chi_square_on_grid, chi_square_vs_density, grid_bin_probs, histogram_argmax,
    ks_one_sample, ks_two_sample, ChiSquare, Histogram, KsTest,
};
