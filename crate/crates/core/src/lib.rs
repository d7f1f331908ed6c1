//! Differentially private, communication-efficient distributed stochastic
//! convex optimization driven by Vaidya's volumetric cutting-plane method.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the numerical
//! core (barrier, cutting planes), the privacy machinery (clipping, Gaussian
//! mechanism, stochastic quantizer, accountant, parameter calculator), the
//! simulated clients and the end-to-end driver. File formats and the CLI live
//! in the companion `charter` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod client;
pub mod dp;
pub mod error;
pub mod linalg;
pub mod math;
pub mod orchestrator;
pub mod planar;
pub mod polytope;
pub mod problems;
pub mod rng;
pub mod vaidya;

pub use error::{Error, Result};
pub use polytope::{BarrierState, CenteringOptions, Polyhedron};
pub use vaidya::{CutKind, CutStep, CuttingPlane, VaidyaConfig};
