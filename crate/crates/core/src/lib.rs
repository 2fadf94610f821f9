//! Radial distribution-feeder models and local volt/var control.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acpf;
pub mod cli;
pub mod controllers;
pub mod error;
pub mod lindistflow;
pub mod network;
pub mod optimizer;
pub mod simulator;
pub mod synthesis;

pub use error::{Error, Result};
