//! Sampling of Brownian, Ornstein-Uhlenbeck, drifted and geometric Brownian
//! paths conditioned on endpoints and on a prescribed maximum or minimum.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod densities;
pub mod processes;
pub mod meander;
pub mod bayesian;
pub mod ou;
pub mod drift;
pub mod validation;
pub mod run;
