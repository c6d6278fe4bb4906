//! Spiking deterministic policy (SDP) for portfolio management.
//!
//! Pipeline: [`market_data`] turns OHLCV candles into states and price
//! relatives, [`snn`] maps a state to portfolio weights through a
//! population-coded LIF network, [`stbp`] trains it with surrogate
//! gradients, [`portfolio`] supplies the log-return objective and the
//! training loop, [`metrics`] back-tests, and [`quantizer`] emulates 8-bit
//! neuromorphic deployment.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod linalg;
pub mod manifest;
pub mod market_data;
pub mod metrics;
pub mod pipeline;
pub mod portfolio;
pub mod quantizer;
pub mod seed;
pub mod simplex;
pub mod snn;
pub mod stbp;

pub use error::{Error, Result};
