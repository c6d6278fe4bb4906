//! Central finite-difference comparison against the surrogate gradient.
//!
//! Decoder parameters sit on a smooth path (spikes do not depend on them),
//! so their numeric and analytic gradients must agree. Hidden-layer
//! parameters only affect the loss through piecewise-constant spike counts;
//! their entries are reported but never flagged.

use serde::{Deserialize, Serialize};

use super::{backward, GradientSet, Result, StbpError, SurrogateParams};
use crate::snn::{forward, EncodingMode, SdpNetwork};

/// Decoder entries above this relative error are flagged.
pub const DECODER_TOLERANCE: f64 = 1e-4;

/// Scalar loss of an action with its gradient.
pub trait ActionLoss {
    fn value(&self, action: &[f64]) -> f64;
    fn gradient(&self, action: &[f64]) -> Vec<f64>;
}

/// `-ln(y . a)`: the single-period negative log growth without costs.
#[derive(Clone, Debug)]
pub struct LogGrowthLoss {
    pub relatives: Vec<f64>,
}

impl ActionLoss for LogGrowthLoss {
    fn value(&self, action: &[f64]) -> f64 {
        -crate::simplex::dot(&self.relatives, action).ln()
    }

    fn gradient(&self, action: &[f64]) -> Vec<f64> {
        let growth = crate::simplex::dot(&self.relatives, action);
        self.relatives.iter().map(|y| -y / growth).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamId {
    LayerWeight { layer: usize, row: usize, col: usize },
    LayerBias { layer: usize, index: usize },
    DecoderWeight { action: usize, input: usize },
    DecoderBias { action: usize },
}

impl ParamId {
    pub fn is_decoder(&self) -> bool {
        matches!(self, ParamId::DecoderWeight { .. } | ParamId::DecoderBias { .. })
    }

    pub fn get(&self, net: &SdpNetwork) -> f64 {
        match *self {
            ParamId::LayerWeight { layer, row, col } => net.layers[layer].weights.get(row, col),
            ParamId::LayerBias { layer, index } => net.layers[layer].bias[index],
            ParamId::DecoderWeight { action, input } => net.decoder.weights.get(action, input),
            ParamId::DecoderBias { action } => net.decoder.bias[action],
        }
    }

    pub fn set(&self, net: &mut SdpNetwork, value: f64) {
        match *self {
            ParamId::LayerWeight { layer, row, col } => net.layers[layer].weights.set(row, col, value),
            ParamId::LayerBias { layer, index } => net.layers[layer].bias[index] = value,
            ParamId::DecoderWeight { action, input } => net.decoder.weights.set(action, input, value),
            ParamId::DecoderBias { action } => net.decoder.bias[action] = value,
        }
    }

    pub fn read(&self, grads: &GradientSet) -> f64 {
        match *self {
            ParamId::LayerWeight { layer, row, col } => grads.layers[layer].weights.get(row, col),
            ParamId::LayerBias { layer, index } => grads.layers[layer].bias[index],
            ParamId::DecoderWeight { action, input } => grads.decoder_weights.get(action, input),
            ParamId::DecoderBias { action } => grads.decoder_bias[action],
        }
    }

    pub fn is_valid(&self, net: &SdpNetwork) -> bool {
        match *self {
            ParamId::LayerWeight { layer, row, col } => {
                net.layers.get(layer).is_some_and(|l| row < l.outputs() && col < l.inputs())
            }
            ParamId::LayerBias { layer, index } => net.layers.get(layer).is_some_and(|l| index < l.outputs()),
            ParamId::DecoderWeight { action, input } => action < net.decoder.actions() && input < net.decoder.inputs(),
            ParamId::DecoderBias { action } => action < net.decoder.actions(),
        }
    }

    /// Every decoder parameter of `net`.
    pub fn decoder_params(net: &SdpNetwork) -> Vec<ParamId> {
        let mut out = Vec::new();
        for action in 0..net.decoder.actions() {
            out.extend((0..net.decoder.inputs()).map(|input| ParamId::DecoderWeight { action, input }));
            out.push(ParamId::DecoderBias { action });
        }
        out
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`, zero when both agree exactly.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    if analytic == numeric {
        return 0.0;
    }
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub param: ParamId,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn flagged(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| e.flagged)
    }

    pub fn max_decoder_error(&self) -> f64 {
        self.entries.iter().filter(|e| e.param.is_decoder()).map(|e| e.relative_error).fold(0.0, f64::max)
    }
}

pub fn grad_check(
    net: &SdpNetwork,
    state: &[f64],
    loss: &dyn ActionLoss,
    h: f64,
    sample: &[ParamId],
    sg: &SurrogateParams,
) -> Result<GradCheckReport> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(StbpError::InvalidStep(h));
    }
    if net.coder.mode != EncodingMode::Deterministic {
        return Err(StbpError::NotDeterministic);
    }
    if let Some(bad) = sample.iter().find(|p| !p.is_valid(net)) {
        return Err(StbpError::ShapeMismatch(format!("parameter {bad:?} not in network")));
    }
    let (action, trace) = forward(net, state, None)?;
    let grads = backward(net, &trace, &loss.gradient(action.as_slice()), sg)?;
    let mut probe = net.clone();
    let mut entries = Vec::with_capacity(sample.len());
    for &param in sample {
        let theta = param.get(net);
        param.set(&mut probe, theta + h);
        let plus = loss.value(forward(&probe, state, None)?.0.as_slice());
        param.set(&mut probe, theta - h);
        let minus = loss.value(forward(&probe, state, None)?.0.as_slice());
        param.set(&mut probe, theta);
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = param.read(&grads);
        let err = relative_error(analytic, numeric);
        entries.push(GradCheckEntry {
            param,
            analytic,
            numeric,
            relative_error: err,
            flagged: param.is_decoder() && err > DECODER_TOLERANCE,
        });
    }
    Ok(GradCheckReport { entries })
}
