//! Multimodal mobility game: traveler equilibrium, operator competition and
//! municipal policy search on a layered transport network.

pub mod assignment;
pub mod baselines;
pub mod demand;
pub mod equilibrium;
pub mod error;
pub mod municipality;
pub mod network;
pub mod operators;
pub mod scenario;

pub use error::{Error, Result, ValidationReport, Violation};
