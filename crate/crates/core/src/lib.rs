//! Near-field XL-MIMO toolkit for low-altitude (UAV-height) users.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: array layout, spherical-wave and planar-wave LoS channels,
//!   Rayleigh distance and ground-truth field labels.
//! - [`beams`]: beamfocusing / beamsteering vectors, polar and angular
//!   codebooks, array gain and gain maps.
//! - [`precoding`]: MRT, ZF, codebook (SDMA / LDMA) precoders, the
//!   dual-weighted optimal-structure precoder and a derivative-free oracle
//!   over its weights and power split.
//! - [`fieldsplit`]: near/far classification from the channel alone.
//! - [`datastore`]: deterministic dataset generation, the binary
//!   dataset / prediction formats and scoring of external predictions.

pub mod beams;
pub mod datastore;
mod error;
pub mod fieldsplit;
pub mod geometry;
pub mod precoding;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
