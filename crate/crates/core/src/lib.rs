//! Ride-pooling dispatch with forward-looking matching.

pub mod domain;
pub mod experiment;
pub mod io;
pub mod network;
pub mod oracle;
pub mod prediction;
pub mod simulator;
pub mod strategies;
