//! Test support shared by the integration suites: independent reference
//! computations and a scripted client for the annotation API.

pub mod harness;
pub mod oracles;

pub use harness::*;
