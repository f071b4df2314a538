//! Allocation-only core of the spikegrid co-simulator.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical piece
//! of the pipeline:
//!
//! * [`grid`]: averaged DC-DC converter plant, dynamic-consensus observer,
//!   primary/secondary control and the closed-loop scenario simulator.
//! * [`snn`]: spike-response-model kernels, layered SRM networks, the LIF
//!   membrane (deterministic and noisy) and surrogate-gradient training.
//! * [`events`]: residual synthesis, threshold triggering, inference gating
//!   and the affine signal scaling between the plant and the network.
//! * [`noise`]: AWGN injection, detection metrics, threshold calibration,
//!   estimation error and noisy-LIF ensembles.
//!
//! File formats, configuration parsing and the command line live in the
//! `spikegrid` companion crate.
#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod events;
pub mod grid;
pub mod noise;
pub mod rng;
pub mod snn;

pub use error::{Error, Result, ValidationReport, Violation};
