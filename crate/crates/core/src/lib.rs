//! Ray-tracing model of the electric field inside a flip-chip package.
//!
//! The die plane is the thin interconnect (SiO2) layer under the bulk
//! silicon. Each receiver sees a direct ray, a ray bounced off the metal
//! heatsink through the silicon, one ray per lateral die edge, and an
//! optional diffracted heatsink ray. Components are summed coherently per
//! grid cell, with a near-field power law substituted close to the antenna.
//! A comparison harness measures the dB mismatch against a reference map.

pub mod compare;
pub mod config;
pub mod error;
pub mod fieldmap;
pub mod geometry;
pub mod materials;
pub mod nearfield;
pub mod raytrace;
pub mod run;

pub use error::{Error, Result};

pub use num_complex::Complex64;
