//! File formats, plots, the stage pipeline and the command line around
//! `comoving-core`.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use error::{AppError, AppResult};
