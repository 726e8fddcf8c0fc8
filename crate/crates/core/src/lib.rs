//! Simulation of a heralded single-photon source built from a fiber-cavity
//! quantum memory with Bragg-scattering four-wave-mixing readout.
//!
//! The analytic engine (`fock`, `clicks`, `model`) and the Monte Carlo
//! generator (`trialsim`) sample the same physical model; `estimate` turns
//! click records back into rates and correlations.

pub mod calibrate;
pub mod clicks;
pub mod config;
pub mod error;
pub mod estimate;
pub mod fit;
pub mod fock;
pub mod io;
pub mod lm;
pub mod model;
pub mod multiplex;
pub mod presets;
pub mod readout;
pub mod trialsim;

pub use config::{ExperimentConfig, ValidatedConfig};
pub use error::{Error, Result};
