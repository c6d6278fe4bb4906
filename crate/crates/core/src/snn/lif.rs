//! Dual-state (current + voltage) leaky integrate-and-fire layer.
//!
//! Update per step, with `o_prev` the layer's spikes from the previous step:
//!
//! ```text
//! c <- d_c * c + W o_in + b
//! v <- d_v * v * (1 - o_prev) + c
//! o <- v > v_th
//! ```
//!
//! The reset is the `(1 - o_prev)` gate applied one step later.

use serde::{Deserialize, Serialize};

use super::{Result, SnnError};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifLayerParams {
    /// `out x in`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub d_c: f64,
    pub d_v: f64,
    pub v_th: f64,
}

impl LifLayerParams {
    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias.len() != self.outputs() {
            return Err(SnnError::DimensionMismatch { what: "bias", expected: self.outputs(), found: self.bias.len() });
        }
        if !self.weights.is_finite() || self.bias.iter().any(|b| !b.is_finite()) {
            return Err(SnnError::InvalidParams("non-finite layer parameter".into()));
        }
        if !(0.0..=1.0).contains(&self.d_c) || !(0.0..=1.0).contains(&self.d_v) {
            return Err(SnnError::InvalidParams(format!("decays ({}, {}) outside [0, 1]", self.d_c, self.d_v)));
        }
        if !(self.v_th.is_finite() && self.v_th > 0.0) {
            return Err(SnnError::InvalidParams(format!("threshold {} must be positive", self.v_th)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LifLayerState {
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    /// Spikes emitted on the previous step (0 or 1).
    pub spiked: Vec<f64>,
}

impl LifLayerState {
    pub fn zeros(n: usize) -> Self {
        Self { current: vec![0.0; n], voltage: vec![0.0; n], spiked: vec![0.0; n] }
    }
}

/// One timestep of one layer. Returns the new state and its output spikes.
pub fn lif_step(
    params: &LifLayerParams,
    state: &LifLayerState,
    input_spikes: &[f64],
) -> Result<(LifLayerState, Vec<f64>)> {
    let (out, inp) = params.weights.shape();
    if input_spikes.len() != inp {
        return Err(SnnError::DimensionMismatch { what: "input spikes", expected: inp, found: input_spikes.len() });
    }
    if state.current.len() != out || state.voltage.len() != out || state.spiked.len() != out {
        return Err(SnnError::DimensionMismatch { what: "layer state", expected: out, found: state.current.len() });
    }
    let mut next = LifLayerState::zeros(out);
    for i in 0..out {
        let drive: f64 = params.weights.row(i).iter().zip(input_spikes).map(|(w, o)| w * o).sum();
        let c = params.d_c * state.current[i] + drive + params.bias[i];
        let v = params.d_v * state.voltage[i] * (1.0 - state.spiked[i]) + c;
        next.current[i] = c;
        next.voltage[i] = v;
        next.spiked[i] = if v > params.v_th { 1.0 } else { 0.0 };
    }
    let spikes = next.spiked.clone();
    Ok((next, spikes))
}
