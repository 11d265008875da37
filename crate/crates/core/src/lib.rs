//! Beam sweep simulation for mmWave vehicle-to-infrastructure links.
//!
//! The receiver carries four phased-array faces with 50 steerable beams each.
//! It periodically sweeps every beam, serves data on the strongest one, and
//! loses throughput either to sweep overhead (short periods) or to stale beams
//! and blockage (long periods). This crate simulates that trade-off on per-beam
//! SNR traces and searches for the throughput-optimal sweep period.
//!
//! Modules:
//! - [`geometry`]: beam codebook construction and antenna gain patterns
//! - [`channel`]: SNR traces, trace files, and the synthetic V2I channel
//! - [`engine`]: the slot-level sweep/serve state machine
//! - [`metrics`]: transmission fraction, Shannon rate, throughput curves
//! - [`cli`]: experiment configuration and the `codebook`/`synth`/`analyze` commands

pub mod channel;
pub mod cli;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod metrics;

pub use error::{Error, Result};
