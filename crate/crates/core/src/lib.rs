//! Exact simulation of the Moran model with mutation, resampling and
//! fitness-proportional selection, together with the branching processes
//! that bound it and the tools used to check those bounds.

// `!(x >= 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod branching;
pub mod coupling;
pub mod ctmc;
pub mod engine;
pub mod error;
pub mod excursion;
pub mod experiments;
pub mod init;
pub mod labels;
pub mod params;
pub mod population;
pub mod rng;
pub mod stats;
pub mod tracked;
pub mod trajectory;

pub use error::{Error, Result};
pub use params::{Params, Scales, WChoice, WPreset};
pub use population::{Event, EventKind, Population};
