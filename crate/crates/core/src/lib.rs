//! Simulation core for microwave-driven generation of shaped single photons
//! from a transmon coupled to a transmission-line resonator.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration,
//! parallel sweeps and the command-line front end live in the `mwphoton`
//! companion crate.
//!
//! Unit conventions: configuration and envelopes use ordinary frequency in
//! GHz and time in ns. The factor 2π is applied once, where Hamiltonians and
//! rates enter the integrator.

#![no_std]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod quantum;
pub mod device;
pub mod pulses;
pub mod dynamics;
pub mod analysis;
pub mod tomography;
pub mod calibration;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
