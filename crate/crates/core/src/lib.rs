//! Co-moving coordinate discovery and reduced-order models for traveling
//! waves on a periodic 1D domain.
//!
//! The crate is `no_std` (with `alloc`): it holds the numerical algorithms
//! only. File formats, plotting and the command line live in the companion
//! `comoving` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod decomposition;
pub mod dmd;
pub mod error;
pub mod field;
pub mod koopman;
pub mod library;
pub mod lotka_volterra;
pub mod nn;
pub mod oscillator;
pub mod periodic;
pub mod shift;
pub mod spectrum;
pub mod sr3;
pub mod synth;
pub mod tracking;
pub mod untwist;

pub use error::{Error, Result};
pub use field::{variance_explained, SpatiotemporalField};
