//! Deterministic reverse diffusion built from certified strongly log-concave
//! subproblems.
//!
//! The crate covers the variance-preserving noise schedule, denoising fields
//! with analytic derivatives, the proxy energy and its certificates, reverse
//! samplers, a small trainer, equivariant graph and sequence-mixer layers,
//! conformer-ensemble metrics and a command-line front end.

pub mod cli;
pub mod demo;
pub mod energy;
pub mod error;
pub mod field;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod trainer;

pub use error::{Error, Result};
