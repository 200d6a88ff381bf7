//! Building blocks for IMU-assisted BLE proximity detection.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. Everything here is pure computation; file formats, the CLI and
//! run manifests live in the `proxkit` crate.
//!
//! * [`simulator`] generates labelled RSSI/IMU windows with a tunable
//!   coupling between carriage state and proximity label.
//! * [`encoding`] turns a window into the classifier input: an RSSI
//!   histogram followed by per-axis IMU statistics.
//! * [`nn`] is the full-precision classifier (dense, batch norm, Mish).
//! * [`kmm`] estimates importance weights by kernel mean matching.
//! * [`bnn`] is the binarized classifier with bit-packed inference.
//! * [`eval`] holds the metrics and the log-distance path loss baseline.
//! * [`model`] and [`pipeline`] glue the pieces into a trainable detector.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bnn;
pub mod encoding;
mod error;
pub mod eval;
pub mod kmm;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod simulator;

pub use error::{Error, Result};
