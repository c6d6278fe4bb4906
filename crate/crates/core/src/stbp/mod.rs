//! Spatio-temporal backpropagation through a recorded [`ForwardTrace`].
//!
//! The reverse pass is exact reverse-mode differentiation of the forward
//! graph except at the spike threshold, whose derivative is replaced by a
//! rectangular surrogate. Both LIF states carry gradient across time:
//! the current through `d_c`, the voltage through `d_v (1 - o_prev)`, and
//! the reset gate feeds `-d_v v_prev` back into the previous spike.

mod gradcheck;
mod optim;

pub use gradcheck::{grad_check, relative_error, ActionLoss, GradCheckEntry, GradCheckReport, LogGrowthLoss, ParamId};
pub use optim::{apply_gradients, OptimizerState, UpdateRule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::snn::{ForwardTrace, SdpNetwork, SnnError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StbpError {
    #[error("trace does not match network: {0}")]
    TraceMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("finite-difference step {0} outside [1e-8, 1e-4]")]
    InvalidStep(f64),
    #[error("gradient check requires deterministic encoding")]
    NotDeterministic,
    #[error("invalid surrogate parameters ({0}, {1})")]
    InvalidSurrogate(f64, f64),
    #[error(transparent)]
    Snn(#[from] SnnError),
}

pub type Result<T, E = StbpError> = std::result::Result<T, E>;

/// Rectangular pseudo-gradient: `amplitude` inside `|v - v_th| < window`, zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub amplitude: f64,
    pub window: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self { amplitude: 9.0, window: 0.4 }
    }
}

impl SurrogateParams {
    pub fn new(amplitude: f64, window: f64) -> Result<Self> {
        if !(amplitude > 0.0 && window > 0.0 && amplitude.is_finite() && window.is_finite()) {
            return Err(StbpError::InvalidSurrogate(amplitude, window));
        }
        Ok(Self { amplitude, window })
    }
}

#[inline]
pub fn surrogate(v: f64, v_th: f64, params: &SurrogateParams) -> f64 {
    if (v - v_th).abs() < params.window {
        params.amplitude
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients shaped exactly like the parameters of an [`SdpNetwork`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
    pub decoder_weights: Matrix,
    pub decoder_bias: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(net: &SdpNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient { weights: Matrix::zeros(l.outputs(), l.inputs()), bias: vec![0.0; l.outputs()] })
                .collect(),
            decoder_weights: Matrix::zeros(net.decoder.actions(), net.decoder.inputs()),
            decoder_bias: vec![0.0; net.decoder.actions()],
        }
    }

    /// Same ordering as [`SdpNetwork::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.weights.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.decoder_weights.as_slice());
        out.push(self.decoder_bias.as_slice());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(self.decoder_weights.as_mut_slice());
        out.push(self.decoder_bias.as_mut_slice());
        out
    }

    /// True when every block has the length of the matching parameter block.
    pub fn matches(&self, net: &SdpNetwork) -> bool {
        let mine = self.slices();
        let theirs = net.param_slices();
        mine.len() == theirs.len() && mine.iter().zip(&theirs).all(|(a, b)| a.len() == b.len())
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales to at most `max_norm` in global L2 norm. Returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.l2_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| *x == 0.0))
    }
}

fn check_trace(net: &SdpNetwork, trace: &ForwardTrace, dl_da: &[f64]) -> Result<()> {
    let steps = net.timesteps;
    let mismatch = |msg: String| Err(StbpError::TraceMismatch(msg));
    if trace.input.timesteps() != steps || trace.input.neurons() != net.coder.output_size() {
        return mismatch(format!(
            "input train is {}x{}, network expects {}x{}",
            trace.input.timesteps(),
            trace.input.neurons(),
            steps,
            net.coder.output_size()
        ));
    }
    if trace.layers.len() != net.layers.len() {
        return mismatch(format!("{} traced layers for {} network layers", trace.layers.len(), net.layers.len()));
    }
    for (k, (lt, lp)) in trace.layers.iter().zip(&net.layers).enumerate() {
        let shape = (steps, lp.outputs());
        if lt.currents.shape() != shape || lt.voltages.shape() != shape || lt.spikes.matrix().shape() != shape {
            return mismatch(format!("layer {k} trace shape differs from {shape:?}"));
        }
    }
    let n = net.num_actions();
    if trace.rates.len() != net.decoder.inputs() || trace.action.len() != n {
        return mismatch("rate or action length differs from decoder".into());
    }
    if dl_da.len() != n {
        return mismatch(format!("loss gradient has {} entries for {n} actions", dl_da.len()));
    }
    Ok(())
}

/// Surrogate-gradient reverse pass for loss gradient `dl_da` with respect to the action.
pub fn backward(net: &SdpNetwork, trace: &ForwardTrace, dl_da: &[f64], sg: &SurrogateParams) -> Result<GradientSet> {
    check_trace(net, trace, dl_da)?;
    let mut grads = GradientSet::zeros_like(net);
    let a = trace.action.as_slice();
    let steps = net.timesteps;

    // softmax Jacobian: dz_j = a_j (g_j - sum_i g_i a_i)
    let weighted: f64 = dl_da.iter().zip(a).map(|(g, p)| g * p).sum();
    let dz: Vec<f64> = a.iter().zip(dl_da).map(|(p, g)| p * (g - weighted)).collect();
    for (j, &g) in dz.iter().enumerate() {
        for (h, &r) in trace.rates.iter().enumerate() {
            grads.decoder_weights.set(j, h, g * r);
        }
        grads.decoder_bias[j] = g;
    }
    let mut d_rate = vec![0.0; net.decoder.inputs()];
    for (j, &g) in dz.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (d, w) in d_rate.iter_mut().zip(net.decoder.weights.row(j)) {
            *d += w * g;
        }
    }
    let d_out_spike: Vec<f64> = d_rate.iter().map(|g| g / steps as f64).collect();

    let depth = net.layers.len();
    let mut dc_next: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.outputs()]).collect();
    let mut dv_next = dc_next.clone();
    let mut active: Vec<usize> = Vec::new();

    for t in (0..steps).rev() {
        let mut d_spike = d_out_spike.clone();
        for k in (0..depth).rev() {
            let layer = &net.layers[k];
            let lt = &trace.layers[k];
            let v_row = lt.voltages.row(t);
            let o_row = lt.spikes.row(t);
            let n_out = layer.outputs();
            let mut dc = vec![0.0; n_out];
            for i in 0..n_out {
                let reset_path = dv_next[k][i] * (-layer.d_v * v_row[i]);
                let d_o = d_spike[i] + reset_path;
                let d_v = d_o * surrogate(v_row[i], layer.v_th, sg) + dv_next[k][i] * layer.d_v * (1.0 - o_row[i]);
                dc[i] = d_v + dc_next[k][i] * layer.d_c;
                dv_next[k][i] = d_v;
            }
            let pre = if k == 0 { trace.input.row(t) } else { trace.layers[k - 1].spikes.row(t) };
            active.clear();
            active.extend(pre.iter().enumerate().filter(|(_, &s)| s != 0.0).map(|(j, _)| j));
            let gw = &mut grads.layers[k];
            for (i, &g) in dc.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                gw.bias[i] += g;
                let row = gw.weights.row_mut(i);
                for &j in &active {
                    row[j] += g;
                }
            }
            if k > 0 {
                let mut d_pre = vec![0.0; layer.inputs()];
                for (i, &g) in dc.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (d, w) in d_pre.iter_mut().zip(layer.weights.row(i)) {
                        *d += w * g;
                    }
                }
                d_spike = d_pre;
            }
            dc_next[k] = dc;
        }
    }
    Ok(grads)
}
