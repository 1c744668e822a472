//! Spin-dynamics library for designing bang-bang RF pulse sequences that
//! transfer polarization from ancillary spins into the long-lived singlet
//! order of a spin pair, with a genetic-algorithm optimizer and a
//! phenomenological relaxation / algorithmic-cooling pipeline around the
//! unitary core.

pub mod algebra;
pub mod bb;
pub mod cli;
pub mod config;
pub mod error;
pub mod ga;
pub mod pulse_io;
pub mod relax;
pub mod spin;

pub use error::{Error, Result};
