//! Numerical core for attributing the slow dynamics of a collective market
//! observable to an external field.
//!
//! The crate is `no_std` (it needs `alloc`): file formats, configuration and
//! the command-line runner live in the companion `fieldattr` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod decomp;
pub mod diagnostics;
pub mod error;
pub mod market;
pub mod model;
pub mod oos;
pub mod optimize;
pub mod ou;
pub mod regime;
pub mod residual_state;
pub mod rng;
pub mod series;
pub mod special;
pub mod stats;
pub mod surrogate;
pub mod synth;
pub mod twod;

pub use error::{Error, Result};
pub use model::{Family, LikelihoodFit, ModelFit, ModelSpec};
pub use series::{align, AlignedPair, Date, ObservableSeries};
