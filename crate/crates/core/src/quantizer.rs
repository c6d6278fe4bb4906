//! Per-layer integer rescaling of weights, biases and thresholds for
//! 8-bit neuromorphic targets, integer-weight inference and float-vs-integer
//! divergence reports.
//!
//! For layer `k`: `r = W_MAX / max|w|`, `w_int = round(r w)`,
//! `b_int = round(r b)`, `v_th_int = max(1, round(r v_th))`. Decays stay
//! real-valued, and so do the membrane accumulators.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::snn::{
    encode, finish, propagate, Action, DecoderParams, ForwardTrace, LayerKernel, LifLayerParams, PopulationCoder,
    SdpNetwork, SnnError,
};

pub const DEFAULT_W_MAX: i32 = 127;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("layer {layer} has only zero weights; rescale ratio undefined")]
    AllZeroWeights { layer: usize },
    #[error("W_MAX must be at least 1, got {0}")]
    InvalidWMax(i32),
    #[error("layer {layer}: value {value} does not fit the integer range")]
    Overflow { layer: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Snn(#[from] SnnError),
}

pub type Result<T, E = QuantizeError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedLayer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`, each within `[-W_MAX, W_MAX]`.
    pub weights: Vec<i32>,
    pub bias: Vec<i64>,
    pub v_th: i64,
    /// Rescale ratio applied to this layer.
    pub ratio: f64,
    pub d_c: f64,
    pub d_v: f64,
}

fn to_int(value: f64, layer: usize, limit: f64) -> Result<i64> {
    let rounded = value.round();
    if !rounded.is_finite() || rounded.abs() > limit {
        return Err(QuantizeError::Overflow { layer, value });
    }
    Ok(rounded as i64)
}

/// Rescales one layer. `layer_index` is only used in error messages.
pub fn rescale_layer(layer: &LifLayerParams, w_max: i32, layer_index: usize) -> Result<QuantizedLayer> {
    if w_max < 1 {
        return Err(QuantizeError::InvalidWMax(w_max));
    }
    let max_abs = layer.weights.max_abs();
    if max_abs == 0.0 {
        return Err(QuantizeError::AllZeroWeights { layer: layer_index });
    }
    let ratio = w_max as f64 / max_abs;
    // Scaled as w_max * (x / max|w|) rather than ratio * x, so that scaling the
    // whole layer by any factor leaves the integers unchanged.
    let scaled = |x: f64| w_max as f64 * (x / max_abs);
    let weights = layer
        .weights
        .as_slice()
        .iter()
        .map(|&w| to_int(scaled(w), layer_index, w_max as f64).map(|v| v as i32))
        .collect::<Result<Vec<_>>>()?;
    let bias = layer
        .bias
        .iter()
        .map(|&b| to_int(scaled(b), layer_index, i32::MAX as f64))
        .collect::<Result<Vec<_>>>()?;
    let v_th = to_int(scaled(layer.v_th), layer_index, i32::MAX as f64)?.max(1);
    Ok(QuantizedLayer {
        rows: layer.outputs(),
        cols: layer.inputs(),
        weights,
        bias,
        v_th,
        ratio,
        d_c: layer.d_c,
        d_v: layer.d_v,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct QuantizedNetworkRepr {
    coder: PopulationCoder,
    layers: Vec<QuantizedLayer>,
    decoder: DecoderParams,
    timesteps: usize,
    window: usize,
    w_max: i32,
    seed: u64,
}

/// Integer-weight network. The encoder and decoder stay in real precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "QuantizedNetworkRepr", into = "QuantizedNetworkRepr")]
pub struct QuantizedNetwork {
    pub coder: PopulationCoder,
    pub layers: Vec<QuantizedLayer>,
    pub decoder: DecoderParams,
    pub timesteps: usize,
    pub window: usize,
    pub w_max: i32,
    pub seed: u64,
    /// Integer parameters widened to f64 for the shared LIF kernel.
    widened: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl From<QuantizedNetworkRepr> for QuantizedNetwork {
    fn from(r: QuantizedNetworkRepr) -> Self {
        let widened = widen(&r.layers);
        Self {
            coder: r.coder,
            layers: r.layers,
            decoder: r.decoder,
            timesteps: r.timesteps,
            window: r.window,
            w_max: r.w_max,
            seed: r.seed,
            widened,
        }
    }
}

impl From<QuantizedNetwork> for QuantizedNetworkRepr {
    fn from(q: QuantizedNetwork) -> Self {
        Self {
            coder: q.coder,
            layers: q.layers,
            decoder: q.decoder,
            timesteps: q.timesteps,
            window: q.window,
            w_max: q.w_max,
            seed: q.seed,
        }
    }
}

fn widen(layers: &[QuantizedLayer]) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    layers
        .iter()
        .map(|l| {
            (
                l.weights.iter().map(|&w| w as f64).collect(),
                l.bias.iter().map(|&b| b as f64).collect(),
                l.v_th as f64,
            )
        })
        .collect()
}

impl QuantizedNetwork {
    pub fn validate(&self) -> Result<()> {
        let mut expected = self.coder.output_size();
        for (k, l) in self.layers.iter().enumerate() {
            if l.cols != expected || l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(QuantizeError::ShapeMismatch(format!("layer {k} shape is inconsistent")));
            }
            if l.weights.iter().any(|w| w.abs() > self.w_max) || l.v_th < 1 {
                return Err(QuantizeError::ShapeMismatch(format!("layer {k} values out of range")));
            }
            expected = l.rows;
        }
        if self.decoder.inputs() != expected {
            return Err(QuantizeError::ShapeMismatch("decoder input size".into()));
        }
        Ok(())
    }

    fn kernels(&self) -> Vec<LayerKernel<'_>> {
        self.layers
            .iter()
            .zip(&self.widened)
            .map(|(l, (w, b, v_th))| LayerKernel {
                weights: w,
                inputs: l.cols,
                outputs: l.rows,
                bias: b,
                d_c: l.d_c,
                d_v: l.d_v,
                v_th: *v_th,
            })
            .collect()
    }

    pub fn state_dim(&self) -> usize {
        self.coder.dims()
    }
}

/// Rescales every layer of `net`.
pub fn quantize_network(net: &SdpNetwork, w_max: i32) -> Result<QuantizedNetwork> {
    let layers = net
        .layers
        .iter()
        .enumerate()
        .map(|(k, l)| rescale_layer(l, w_max, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedNetworkRepr {
        coder: net.coder.clone(),
        layers,
        decoder: net.decoder.clone(),
        timesteps: net.timesteps,
        window: net.window,
        w_max,
        seed: net.seed,
    }
    .into())
}

fn check_state(qnet: &QuantizedNetwork, state: &[f64]) -> Result<()> {
    if state.len() != qnet.state_dim() {
        return Err(SnnError::DimensionMismatch { what: "state", expected: qnet.state_dim(), found: state.len() }.into());
    }
    Ok(())
}

/// Same dynamics as the float forward pass, driven by the integer parameters.
pub fn forward_quantized(qnet: &QuantizedNetwork, state: &[f64], rng: Option<&mut dyn RngCore>) -> Result<(Action, ForwardTrace)> {
    check_state(qnet, state)?;
    let (intensities, input) = encode(&qnet.coder, qnet.timesteps, state, rng)?;
    let (counts, layers) = propagate(&qnet.kernels(), &input, true);
    Ok(finish(&qnet.decoder, qnet.timesteps, counts, intensities, input, layers)?)
}

pub fn infer_quantized(qnet: &QuantizedNetwork, state: &[f64], rng: Option<&mut dyn RngCore>) -> Result<Action> {
    check_state(qnet, state)?;
    let (_, input) = encode(&qnet.coder, qnet.timesteps, state, rng)?;
    let (counts, _) = propagate(&qnet.kernels(), &input, false);
    let rates: Vec<f64> = counts.iter().map(|c| c / qnet.timesteps as f64).collect();
    Ok(crate::snn::decode(&rates, &qnet.decoder)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDivergence {
    pub action_l1: f64,
    /// Differing spikes per layer over all timesteps.
    pub spike_hamming: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub per_state: Vec<StateDivergence>,
    pub mean_action_l1: f64,
    pub max_action_l1: f64,
    pub mean_spike_hamming: Vec<f64>,
    pub max_spike_hamming: Vec<usize>,
}

/// Runs both networks on every state and measures how far they drift apart.
/// In probabilistic mode both sides see the same seeded input spikes.
pub fn compare(net: &SdpNetwork, qnet: &QuantizedNetwork, states: &[Vec<f64>]) -> crate::Result<DivergenceReport> {
    if net.layers.len() != qnet.layers.len()
        || net.layers.iter().zip(&qnet.layers).any(|(f, q)| f.weights.shape() != (q.rows, q.cols))
        || net.coder != qnet.coder
        || net.timesteps != qnet.timesteps
    {
        return Err(QuantizeError::ShapeMismatch("quantized network does not derive from this network".into()).into());
    }
    let depth = net.layers.len();
    let mut per_state = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let seed = crate::seed::sub_seed(net.seed, &format!("compare-{i}"));
        let mut rng_f = crate::seed::component_rng(seed, "encoder");
        let mut rng_q = crate::seed::component_rng(seed, "encoder");
        let (a, tf) = crate::snn::forward(net, state, Some(&mut rng_f))?;
        let (b, tq) = forward_quantized(qnet, state, Some(&mut rng_q))?;
        let action_l1 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).sum();
        let spike_hamming = tf
            .layers
            .iter()
            .zip(&tq.layers)
            .map(|(lf, lq)| {
                lf.spikes.matrix().as_slice().iter().zip(lq.spikes.matrix().as_slice()).filter(|(x, y)| x != y).count()
            })
            .collect();
        per_state.push(StateDivergence { action_l1, spike_hamming });
    }
    let n = per_state.len().max(1) as f64;
    Ok(DivergenceReport {
        mean_action_l1: per_state.iter().map(|s| s.action_l1).sum::<f64>() / n,
        max_action_l1: per_state.iter().map(|s| s.action_l1).fold(0.0, f64::max),
        mean_spike_hamming: (0..depth)
            .map(|k| per_state.iter().map(|s| s.spike_hamming[k] as f64).sum::<f64>() / n)
            .collect(),
        max_spike_hamming: (0..depth).map(|k| per_state.iter().map(|s| s.spike_hamming[k]).max().unwrap_or(0)).collect(),
        per_state,
    })
}

/// The integer network as a back-test policy.
pub struct QuantizedPolicy<'a> {
    pub net: &'a QuantizedNetwork,
    rng: rand_chacha::ChaCha8Rng,
}

impl<'a> QuantizedPolicy<'a> {
    pub fn new(net: &'a QuantizedNetwork) -> Self {
        Self { net, rng: crate::seed::component_rng(net.seed, "backtest-encoder") }
    }
}

impl crate::metrics::Policy for QuantizedPolicy<'_> {
    fn name(&self) -> &str {
        "sdp_quantized"
    }

    fn window(&self) -> usize {
        self.net.window
    }

    fn decide(&mut self, state: &crate::market_data::StateVector) -> crate::Result<Vec<f64>> {
        Ok(infer_quantized(self.net, state.as_slice(), Some(&mut self.rng))?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::snn::NetworkSpec;

    fn layer(weights: Vec<f64>, v_th: f64) -> LifLayerParams {
        let n = weights.len();
        LifLayerParams { weights: Matrix::from_vec(1, n, weights).unwrap(), bias: vec![0.0], d_c: 0.5, d_v: 0.8, v_th }
    }

    #[test]
    fn rescale_example() {
        let q = rescale_layer(&layer(vec![-0.5, 0.25, 0.5], 0.5), 127, 0).unwrap();
        assert_eq!(q.ratio, 254.0);
        assert_eq!(q.weights, vec![-127, 64, 127]);
        assert_eq!(q.v_th, 127);
    }

    #[test]
    fn rescale_errors_and_identity() {
        assert_eq!(
            rescale_layer(&layer(vec![0.0, 0.0], 0.5), 127, 3),
            Err(QuantizeError::AllZeroWeights { layer: 3 })
        );
        let q = rescale_layer(&layer(vec![127.0, -3.0, 12.4], 40.0), 127, 0).unwrap();
        assert_eq!(q.ratio, 1.0);
        assert_eq!(q.weights, vec![127, -3, 12]);
        assert_eq!(q.v_th, 40);
        assert!(rescale_layer(&layer(vec![1.0], 0.5), 0, 0).is_err());
    }

    #[test]
    fn tiny_threshold_floors_at_one() {
        let q = rescale_layer(&layer(vec![1000.0], 1e-6), 127, 0).unwrap();
        assert_eq!(q.v_th, 1);
    }

    #[test]
    fn serde_rebuilds_widened_cache() {
        let net = SdpNetwork::init(&NetworkSpec { assets: 1, neurons_per_dim: 3, hidden: vec![4], ..NetworkSpec::default() }, 3).unwrap();
        let q = quantize_network(&net, 127).unwrap();
        let json = serde_json::to_string(&q).unwrap();
        let back: QuantizedNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(back, q);
        let state = [1.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(forward_quantized(&back, &state, None).unwrap().0, forward_quantized(&q, &state, None).unwrap().0);
    }
}
