//! Spiking deterministic policy network.
//!
//! A forward pass encodes a state vector into population spike trains,
//! drives `L` dual-state LIF layers for `T` timesteps, turns the last
//! layer's spike counts into firing rates and decodes them with a softmax
//! into portfolio weights. [`forward`] records every intermediate tensor
//! in a [`ForwardTrace`] for the surrogate-gradient reverse pass.

mod decoder;
mod encoder;
mod lif;

pub use decoder::{decode, decoder_logits, firing_rates, softmax, DecoderParams};
pub use encoder::{encode_deterministic, encode_probabilistic, stimulation, EncodingMode, PopulationCoder};
pub use lif::{lif_step, LifLayerParams, LifLayerState};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::seed::component_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnnError {
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("non-finite decoder logit")]
    NonFiniteLogit,
    #[error("probabilistic encoding requires a random generator")]
    MissingRng,
    #[error("invalid network parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T, E = SnnError> = std::result::Result<T, E>;

/// `T x n` binary spike matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    spikes: Matrix,
}

impl SpikeTrain {
    /// Wraps a matrix whose entries are already 0.0 or 1.0.
    pub fn from_binary(spikes: Matrix) -> Self {
        debug_assert!(spikes.as_slice().iter().all(|&s| s == 0.0 || s == 1.0));
        Self { spikes }
    }

    pub fn try_from_matrix(spikes: Matrix) -> Result<Self> {
        if spikes.as_slice().iter().all(|&s| s == 0.0 || s == 1.0) {
            Ok(Self { spikes })
        } else {
            Err(SnnError::InvalidParams("spike train entries must be 0 or 1".into()))
        }
    }

    pub fn timesteps(&self) -> usize {
        self.spikes.rows()
    }

    pub fn neurons(&self) -> usize {
        self.spikes.cols()
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.spikes.get(t, i)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.spikes.row(t)
    }

    /// Number of spikes emitted by neuron `i`.
    pub fn count(&self, i: usize) -> f64 {
        (0..self.timesteps()).map(|t| self.spikes.get(t, i)).sum()
    }

    pub fn total(&self) -> f64 {
        self.spikes.as_slice().iter().sum()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.spikes
    }
}

/// Portfolio weights, cash first. Always on the simplex when produced by [`decode`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action(pub Vec<f64>);

impl Action {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-layer record of one forward pass, each matrix `T x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub currents: Matrix,
    pub voltages: Matrix,
    pub spikes: SpikeTrain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub intensities: Vec<f64>,
    pub input: SpikeTrain,
    pub layers: Vec<LayerTrace>,
    pub rates: Vec<f64>,
    pub logits: Vec<f64>,
    pub action: Action,
}

/// Construction parameters for a freshly initialized network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    pub assets: usize,
    pub window: usize,
    pub neurons_per_dim: usize,
    pub hidden: Vec<usize>,
    pub timesteps: usize,
    pub v_th: f64,
    pub d_c: f64,
    pub d_v: f64,
    pub eps_enc: f64,
    pub price_range: (f64, f64),
    pub weight_range: (f64, f64),
    pub mode: EncodingMode,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            assets: 11,
            window: 1,
            neurons_per_dim: 10,
            hidden: vec![128, 128],
            timesteps: 5,
            v_th: 0.5,
            d_c: 0.5,
            d_v: 0.8,
            eps_enc: 0.01,
            price_range: (0.5, 1.5),
            weight_range: (0.0, 1.0),
            mode: EncodingMode::Deterministic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpNetwork {
    pub coder: PopulationCoder,
    pub layers: Vec<LifLayerParams>,
    pub decoder: DecoderParams,
    pub timesteps: usize,
    /// Lookback window of the state layout this network consumes.
    pub window: usize,
    /// Seed used to initialize the parameters.
    pub seed: u64,
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (1.0 / cols.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

impl SdpNetwork {
    /// Validates layer chaining and parameter ranges.
    pub fn new(
        coder: PopulationCoder,
        layers: Vec<LifLayerParams>,
        decoder: DecoderParams,
        timesteps: usize,
        window: usize,
        seed: u64,
    ) -> Result<Self> {
        let net = Self { coder, layers, decoder, timesteps, window, seed };
        net.validate()?;
        Ok(net)
    }

    /// Seeded initialization: weights uniform in `±sqrt(1 / fan_in)`, zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        if spec.assets == 0 || spec.hidden.is_empty() || spec.hidden.contains(&0) {
            return Err(SnnError::InvalidParams("need at least one asset and one non-empty hidden layer".into()));
        }
        let coder = PopulationCoder::for_state(
            spec.assets,
            spec.window,
            spec.neurons_per_dim,
            spec.price_range,
            spec.weight_range,
            spec.eps_enc,
            spec.mode,
        )?;
        let mut rng = component_rng(seed, "network-init");
        let mut fan_in = coder.output_size();
        let mut layers = Vec::with_capacity(spec.hidden.len());
        for &width in &spec.hidden {
            layers.push(LifLayerParams {
                weights: uniform_matrix(width, fan_in, &mut rng),
                bias: vec![0.0; width],
                d_c: spec.d_c,
                d_v: spec.d_v,
                v_th: spec.v_th,
            });
            fan_in = width;
        }
        let decoder = DecoderParams { weights: uniform_matrix(spec.assets + 1, fan_in, &mut rng), bias: vec![0.0; spec.assets + 1] };
        Self::new(coder, layers, decoder, spec.timesteps, spec.window.max(1), seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.coder.validate()?;
        if self.timesteps == 0 {
            return Err(SnnError::InvalidParams("timesteps must be at least 1".into()));
        }
        if self.layers.is_empty() {
            return Err(SnnError::InvalidParams("network needs at least one LIF layer".into()));
        }
        let mut expected = self.coder.output_size();
        for layer in &self.layers {
            if layer.inputs() != expected {
                return Err(SnnError::DimensionMismatch { what: "layer input", expected, found: layer.inputs() });
            }
            layer.validate()?;
            expected = layer.outputs();
        }
        if self.decoder.inputs() != expected {
            return Err(SnnError::DimensionMismatch { what: "decoder input", expected, found: self.decoder.inputs() });
        }
        if self.decoder.bias.len() != self.decoder.actions() || self.decoder.actions() == 0 {
            return Err(SnnError::InvalidParams("decoder bias must have one entry per action".into()));
        }
        if !self.decoder.weights.is_finite() || self.decoder.bias.iter().any(|b| !b.is_finite()) {
            return Err(SnnError::InvalidParams("non-finite decoder parameter".into()));
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        self.decoder.actions()
    }

    pub fn state_dim(&self) -> usize {
        self.coder.dims()
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Parameters in canonical order: each layer's weights then bias, then decoder weights and bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.weights.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.decoder.weights.as_slice());
        out.push(self.decoder.bias.as_slice());
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(self.decoder.weights.as_mut_slice());
        out.push(self.decoder.bias.as_mut_slice());
        out
    }

    pub(crate) fn kernels(&self) -> Vec<LayerKernel<'_>> {
        self.layers
            .iter()
            .map(|l| LayerKernel {
                weights: l.weights.as_slice(),
                inputs: l.inputs(),
                outputs: l.outputs(),
                bias: &l.bias,
                d_c: l.d_c,
                d_v: l.d_v,
                v_th: l.v_th,
            })
            .collect()
    }
}

/// Borrowed view of one layer's dynamics, shared by the float and integer-weight paths.
pub(crate) struct LayerKernel<'a> {
    pub weights: &'a [f64],
    pub inputs: usize,
    pub outputs: usize,
    pub bias: &'a [f64],
    pub d_c: f64,
    pub d_v: f64,
    pub v_th: f64,
}

/// Encodes `state` into the input spike train.
pub fn encode(coder: &PopulationCoder, timesteps: usize, state: &[f64], rng: Option<&mut dyn RngCore>) -> Result<(Vec<f64>, SpikeTrain)> {
    let intensities = stimulation(state, coder)?;
    let train = match coder.mode {
        EncodingMode::Deterministic => encode_deterministic(&intensities, timesteps, coder.eps),
        EncodingMode::Probabilistic => {
            let rng = rng.ok_or(SnnError::MissingRng)?;
            encode_probabilistic(&intensities, timesteps, rng)
        }
    };
    Ok((intensities, train))
}

/// Runs all layers over the input train. Spike inputs are binary, so the
/// synaptic drive sums only the weights of active presynaptic neurons.
/// Returns the last layer's spike counts and, when requested, per-layer traces.
pub(crate) fn propagate(kernels: &[LayerKernel<'_>], input: &SpikeTrain, record: bool) -> (Vec<f64>, Vec<LayerTrace>) {
    let steps = input.timesteps();
    let mut currents: Vec<Vec<f64>> = kernels.iter().map(|k| vec![0.0; k.outputs]).collect();
    let mut voltages = currents.clone();
    let mut spiked = currents.clone();
    let mut traces: Vec<(Matrix, Matrix, Matrix)> = if record {
        kernels
            .iter()
            .map(|k| (Matrix::zeros(steps, k.outputs), Matrix::zeros(steps, k.outputs), Matrix::zeros(steps, k.outputs)))
            .collect()
    } else {
        Vec::new()
    };
    let mut counts = vec![0.0; kernels.last().map_or(0, |k| k.outputs)];
    let mut active: Vec<usize> = Vec::new();
    for t in 0..steps {
        active.clear();
        active.extend(input.row(t).iter().enumerate().filter(|(_, &s)| s != 0.0).map(|(j, _)| j));
        for (k, kernel) in kernels.iter().enumerate() {
            let (c, v, o) = (&mut currents[k], &mut voltages[k], &mut spiked[k]);
            for i in 0..kernel.outputs {
                let row = &kernel.weights[i * kernel.inputs..(i + 1) * kernel.inputs];
                let mut drive = 0.0;
                for &j in &active {
                    drive += row[j];
                }
                c[i] = kernel.d_c * c[i] + drive + kernel.bias[i];
                v[i] = kernel.d_v * v[i] * (1.0 - o[i]) + c[i];
                o[i] = if v[i] > kernel.v_th { 1.0 } else { 0.0 };
            }
            if record {
                let (tc, tv, to) = &mut traces[k];
                tc.row_mut(t).copy_from_slice(c);
                tv.row_mut(t).copy_from_slice(v);
                to.row_mut(t).copy_from_slice(o);
            }
            active.clear();
            active.extend(o.iter().enumerate().filter(|(_, &s)| s != 0.0).map(|(j, _)| j));
        }
        if let Some(last) = spiked.last() {
            for (n, s) in counts.iter_mut().zip(last) {
                *n += s;
            }
        }
    }
    let layer_traces = traces
        .into_iter()
        .map(|(c, v, o)| LayerTrace { currents: c, voltages: v, spikes: SpikeTrain::from_binary(o) })
        .collect();
    (counts, layer_traces)
}

fn check_state(net: &SdpNetwork, state: &[f64]) -> Result<()> {
    if state.len() != net.state_dim() {
        return Err(SnnError::DimensionMismatch { what: "state", expected: net.state_dim(), found: state.len() });
    }
    Ok(())
}

/// Full forward pass with a complete trace. Membrane state starts at zero
/// on every call. `rng` is only consulted in probabilistic encoding mode.
pub fn forward(net: &SdpNetwork, state: &[f64], rng: Option<&mut dyn RngCore>) -> Result<(Action, ForwardTrace)> {
    check_state(net, state)?;
    let (intensities, input) = encode(&net.coder, net.timesteps, state, rng)?;
    let (counts, layers) = propagate(&net.kernels(), &input, true);
    finish(&net.decoder, net.timesteps, counts, intensities, input, layers)
}

pub(crate) fn finish(
    decoder: &DecoderParams,
    timesteps: usize,
    counts: Vec<f64>,
    intensities: Vec<f64>,
    input: SpikeTrain,
    layers: Vec<LayerTrace>,
) -> Result<(Action, ForwardTrace)> {
    let rates: Vec<f64> = counts.iter().map(|c| c / timesteps as f64).collect();
    let logits = decoder_logits(&rates, decoder)?;
    let action = Action(softmax(&logits)?);
    let trace = ForwardTrace { intensities, input, layers, rates, logits, action: action.clone() };
    Ok((action, trace))
}

/// Forward pass without recording a trace.
pub fn infer(net: &SdpNetwork, state: &[f64], rng: Option<&mut dyn RngCore>) -> Result<Action> {
    check_state(net, state)?;
    let (_, input) = encode(&net.coder, net.timesteps, state, rng)?;
    let (counts, _) = propagate(&net.kernels(), &input, false);
    let rates: Vec<f64> = counts.iter().map(|c| c / net.timesteps as f64).collect();
    decode(&rates, &net.decoder)
}
