//! Parasitic-resistance analysis and Manhattan distance mapping for
//! bit-sliced memristive crossbars.
//!
//! * [`crossbar`]: tile, geometry and parameter types, index conventions.
//! * [`bitslice`]: weight quantization and bit-density statistics.
//! * [`analytic`]: first-order nonideality prediction and the row/dataflow mapper.
//! * [`circuit`]: exact nodal solution of the resistive mesh.
//! * [`experiments`]: seeded Monte-Carlo drivers and report types.

pub mod analytic;
pub mod bitslice;
pub mod circuit;
pub mod crossbar;
mod error;
pub mod experiments;
pub mod io;
pub mod rng;

pub use error::{Error, Result};
