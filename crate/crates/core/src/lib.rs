//! Pseudo-spectral solver and diagnostics for Whitham-Boussinesq type
//! systems on periodic domains.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod harness;
pub mod model;
pub mod multiplier;
pub mod plot;
pub mod report;
pub mod selftest;
pub mod snapshot;
pub mod spectral;
pub mod stepper;
