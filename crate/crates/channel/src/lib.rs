//! Geometry-based stochastic channel simulator for indoor THz massive MIMO.
//!
//! The library generates seeded channel drops (clusters of diffusely scattered
//! rays around specular reflection points), evolves them along the time, space
//! (antenna index), and frequency axes, assembles complex channel transfer
//! function (CTF) tensors, and estimates the statistical properties of the
//! resulting channel: delay power spectral density, time ACF, spatial CCF,
//! frequency correlation, Ricean K factor, and correlation-matrix based
//! stationary intervals.
//!
//! Pipeline: [`init`] draws a [`init::ChannelRealization`] at the first
//! element pair, initial time, and anchor frequency; [`evolution`] advances it
//! over an [`evolution::EvolutionGrid`]; [`ctf`] turns the evolved state into
//! a [`ctf::CtfTensor`]; [`stats`] reduces tensors from an ensemble of seeded
//! drops into correlation curves and interval distributions; [`montecarlo`]
//! orchestrates whole runs from a [`scenario::Scenario`].
//!
//! Monte Carlo loops and tensor fills are data-parallel with `rayon` when the
//! default `parallel` feature is enabled; disabling it yields a sequential
//! build with bit-identical output.

pub mod ctf;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod init;
pub mod montecarlo;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use error::ChannelError;

/// Speed of light in vacuum, m/s (CODATA).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, ChannelError>;
