//! Small-scale spatial fading and autocorrelation statistics for linear-track
//! channel measurements.
//!
//! The pipeline runs from directional power delay profiles to received
//! amplitudes ([`pdp`]), from amplitudes to fitted marginal distributions
//! ([`fading`]) and to spatial autocorrelation with a damped-cosine model
//! ([`spatial`]). [`synth`] runs it backwards, generating tracks and scans
//! with prescribed statistics. [`io`] holds the file formats and [`cli`] the
//! command-line surface.

pub mod cli;
pub mod error;
pub mod fading;
pub mod io;
pub mod model;
mod optim;
pub mod pdp;
pub mod special;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
