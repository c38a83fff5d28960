//! Planning and cost sharing for pooled QKD networks.
//!
//! Providers pool QKD and key-management wavelengths; a two-stage
//! stochastic planner reserves wavelengths ahead of uncertain secret-key
//! demand, Shapley values split the pooled cost, and a best-response game
//! with bounded rationality predicts which coalitions form.

pub mod cost;
pub mod demand;
pub mod dynamics;
pub mod economics;
pub mod error;
pub mod generate;
pub mod network;
pub mod planner;

pub use error::{Error, Result};
