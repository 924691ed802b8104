//! Simulation and analysis of optical rotations seen by polarization-entangled
//! photon pairs.
//!
//! The crate is `no_std` with `alloc`; file formats, configuration and the
//! command-line driver live in the companion `nonlocal-lab` crate.
//!
//! Angles are radians throughout. Two-photon matrices use the basis order
//! `(HH, HV, VH, VV)` with arm A as the first tensor factor.

#![no_std]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channels;
pub mod error;
pub mod fit;
pub mod measure;
pub mod metrology;
pub mod states;
pub mod sweep;
pub mod tomography;
pub mod verify;

pub use error::{Error, Result};
