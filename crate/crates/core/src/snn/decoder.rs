use serde::{Deserialize, Serialize};

use super::{Action, Result, SnnError};
use crate::linalg::Matrix;

/// Linear readout of last-layer firing rates, one row per action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    /// `actions x hidden`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DecoderParams {
    pub fn actions(&self) -> usize {
        self.weights.rows()
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }
}

/// Firing rate of each neuron: spike count over the number of timesteps.
pub fn firing_rates(train: &super::SpikeTrain) -> Vec<f64> {
    let steps = train.timesteps().max(1) as f64;
    (0..train.neurons()).map(|i| train.count(i) / steps).collect()
}

pub fn decoder_logits(rates: &[f64], decoder: &DecoderParams) -> Result<Vec<f64>> {
    if rates.len() != decoder.inputs() {
        return Err(SnnError::DimensionMismatch { what: "firing rates", expected: decoder.inputs(), found: rates.len() });
    }
    Ok((0..decoder.actions())
        .map(|i| decoder.weights.row(i).iter().zip(rates).map(|(w, r)| w * r).sum::<f64>() + decoder.bias[i])
        .collect())
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(SnnError::NonFiniteLogit);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn decode(rates: &[f64], decoder: &DecoderParams) -> Result<Action> {
    Ok(Action(softmax(&decoder_logits(rates, decoder)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::SpikeTrain;

    #[test]
    fn rates_from_counts() {
        let train = SpikeTrain::from_binary(Matrix::from_fn(5, 3, |t, i| match i {
            0 => 1.0,
            1 => 0.0,
            _ => (t < 3) as u8 as f64,
        }));
        assert_eq!(firing_rates(&train), vec![1.0, 0.0, 0.6]);
    }

    #[test]
    fn softmax_properties() {
        let a = softmax(&[0.3, 0.3, 0.3, 0.3]).unwrap();
        assert!(a.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let a = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((a[0] - 0.25).abs() < 1e-15 && (a[1] - 0.75).abs() < 1e-15);
        let z = [0.1, -2.0, 1.7];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let (p, q) = (softmax(&z).unwrap(), softmax(&shifted).unwrap());
        for (x, y) in p.iter().zip(&q) {
            assert!((x - y).abs() < 1e-13);
        }
        let big = softmax(&[1000.0, 0.0]).unwrap();
        assert_eq!(big[0], 1.0);
        assert!(matches!(softmax(&[f64::NAN, 0.0]), Err(SnnError::NonFiniteLogit)));
    }
}
