//! Adam-based augmented random search for smart-inverter attack mitigation.
//!
//! The crate holds the training algorithm ([`trainer`], [`optimizer`],
//! [`policy`]) and the simulated feeder it is trained on ([`env`],
//! [`inverter`], [`observer`]).

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod inverter;
pub mod observer;
pub mod optimizer;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
