//! Gaussian population coding of real-valued states into spike trains.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Result, SnnError, SpikeTrain};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// One-step soft-reset integrate-and-fire driven by the intensities.
    #[default]
    Deterministic,
    /// Independent Bernoulli draws with probability equal to the intensity.
    Probabilistic,
}

/// One population of Gaussian receptive fields per state dimension.
///
/// Centers are evenly spaced over each dimension's range (endpoints
/// included) and the width of every field equals the center spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationCoder {
    pub neurons_per_dim: usize,
    /// `dims * neurons_per_dim` centers, grouped by dimension.
    pub centers: Vec<f64>,
    /// One width per dimension.
    pub sigmas: Vec<f64>,
    pub eps: f64,
    pub mode: EncodingMode,
}

impl PopulationCoder {
    pub fn new(ranges: &[(f64, f64)], neurons_per_dim: usize, eps: f64, mode: EncodingMode) -> Result<Self> {
        if neurons_per_dim == 0 {
            return Err(SnnError::InvalidParams("population size must be at least 1".into()));
        }
        let mut centers = Vec::with_capacity(ranges.len() * neurons_per_dim);
        let mut sigmas = Vec::with_capacity(ranges.len());
        for &(lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(SnnError::InvalidParams(format!("invalid encoder range [{lo}, {hi}]")));
            }
            if neurons_per_dim == 1 {
                centers.push(0.5 * (lo + hi));
                sigmas.push(hi - lo);
            } else {
                let spacing = (hi - lo) / (neurons_per_dim - 1) as f64;
                centers.extend((0..neurons_per_dim).map(|k| lo + k as f64 * spacing));
                sigmas.push(spacing);
            }
        }
        let coder = Self { neurons_per_dim, centers, sigmas, eps, mode };
        coder.validate()?;
        Ok(coder)
    }

    /// Coder for the standard state layout: price-ratio dimensions first, then `assets + 1` weights.
    pub fn for_state(
        assets: usize,
        window: usize,
        neurons_per_dim: usize,
        price_range: (f64, f64),
        weight_range: (f64, f64),
        eps: f64,
        mode: EncodingMode,
    ) -> Result<Self> {
        let mut ranges = vec![price_range; 3 * assets * window.max(1)];
        ranges.extend(std::iter::repeat_n(weight_range, assets + 1));
        Self::new(&ranges, neurons_per_dim, eps, mode)
    }

    pub fn dims(&self) -> usize {
        self.sigmas.len()
    }

    pub fn output_size(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.neurons_per_dim == 0 || self.centers.len() != self.sigmas.len() * self.neurons_per_dim {
            return Err(SnnError::InvalidParams("encoder centers do not match dimensions".into()));
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(SnnError::InvalidParams("encoder widths must be positive".into()));
        }
        for dim in self.centers.chunks(self.neurons_per_dim) {
            if dim.iter().any(|c| !c.is_finite()) || dim.windows(2).any(|w| w[1] <= w[0]) {
                return Err(SnnError::InvalidParams("encoder centers must be finite and increasing".into()));
            }
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(SnnError::InvalidParams(format!("encoder epsilon {} outside [0, 1)", self.eps)));
        }
        Ok(())
    }
}

/// Stimulation strength of every population neuron, `exp(-0.5 ((s - mu) / sigma)^2)`.
pub fn stimulation(state: &[f64], coder: &PopulationCoder) -> Result<Vec<f64>> {
    if state.len() != coder.dims() {
        return Err(SnnError::DimensionMismatch { what: "state", expected: coder.dims(), found: state.len() });
    }
    let p = coder.neurons_per_dim;
    let mut out = Vec::with_capacity(coder.output_size());
    for (d, &s) in state.iter().enumerate() {
        let sigma = coder.sigmas[d];
        for &mu in &coder.centers[d * p..(d + 1) * p] {
            let z = (s - mu) / sigma;
            out.push((-0.5 * z * z).exp());
        }
    }
    Ok(out)
}

/// Soft-reset integrator: `V += A`; spike and subtract `1 - eps` when `V > 1 - eps`.
pub fn encode_deterministic(intensities: &[f64], timesteps: usize, eps: f64) -> SpikeTrain {
    let threshold = 1.0 - eps;
    let n = intensities.len();
    let mut v = vec![0.0; n];
    let mut spikes = Matrix::zeros(timesteps, n);
    for t in 0..timesteps {
        let row = spikes.row_mut(t);
        for i in 0..n {
            v[i] += intensities[i];
            if v[i] > threshold {
                row[i] = 1.0;
                v[i] -= threshold;
            }
        }
    }
    SpikeTrain::from_binary(spikes)
}

/// Bernoulli spikes with success probability equal to each intensity.
pub fn encode_probabilistic(intensities: &[f64], timesteps: usize, rng: &mut dyn RngCore) -> SpikeTrain {
    let n = intensities.len();
    let mut spikes = Matrix::zeros(timesteps, n);
    for t in 0..timesteps {
        let row = spikes.row_mut(t);
        for i in 0..n {
            if rng.gen::<f64>() < intensities[i] {
                row[i] = 1.0;
            }
        }
    }
    SpikeTrain::from_binary(spikes)
}
