//! Cluster-graph simulator and randomized (Δ+1)-coloring pipeline.

pub mod acd;
pub mod coloring;
pub mod engine;
pub mod error;
pub mod fingerprint;
pub mod netmodel;
pub mod palette;
pub mod putaside;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
