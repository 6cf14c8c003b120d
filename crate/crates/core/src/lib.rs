//! Simulation, calibration and sensitivity analysis for a five-compartment
//! scam-propagation model (susceptible, victim, recovered, active scammer,
//! removed scammer).
//!
//! - [`model`]: right-hand side, reproduction number, equilibrium analysis.
//! - [`integrators`]: positivity-preserving NSFD scheme and an RK4 reference.
//! - [`inference`]: DRAM calibration against monthly report counts.
//! - [`sensitivity`]: local indices of `R0`, LHS + PRCC global analysis.
//! - [`data`]: report CSV ingestion, pooling and synthetic series.

pub mod data;
pub mod inference;
pub mod integrators;
pub mod model;
pub mod observe;
pub mod sensitivity;
pub mod stats;

pub use model::{Param, Parameters, State};
