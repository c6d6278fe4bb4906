use serde::{Deserialize, Serialize};

use super::{GradientSet, Result, StbpError};
use crate::snn::SdpNetwork;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    Sgd,
    #[default]
    Adam,
}

/// Optimizer hyperparameters plus Adam moments over the flattened parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub rule: UpdateRule,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(rule: UpdateRule, learning_rate: f64, num_params: usize) -> Self {
        let moments = if rule == UpdateRule::Adam { num_params } else { 0 };
        Self {
            rule,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
        }
    }

    pub fn for_network(rule: UpdateRule, learning_rate: f64, net: &SdpNetwork) -> Self {
        Self::new(rule, learning_rate, net.num_params())
    }

    /// Applies one update in place.
    pub fn update(&mut self, net: &mut SdpNetwork, grads: &GradientSet) -> Result<()> {
        if !grads.matches(net) {
            return Err(StbpError::ShapeMismatch("gradient blocks differ from network parameters".into()));
        }
        let total = net.num_params();
        if self.rule == UpdateRule::Adam && (self.first_moment.len() != total || self.second_moment.len() != total) {
            return Err(StbpError::ShapeMismatch(format!(
                "optimizer moments hold {} entries, network has {total} parameters",
                self.first_moment.len()
            )));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.rule {
            UpdateRule::Sgd => {
                for (p, g) in net.param_slices_mut().into_iter().zip(grads.slices()) {
                    for (x, d) in p.iter_mut().zip(g) {
                        *x -= lr * d;
                    }
                }
            }
            UpdateRule::Adam => {
                let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
                let c1 = 1.0 - b1.powf(self.step as f64);
                let c2 = 1.0 - b2.powf(self.step as f64);
                let mut idx = 0;
                for (p, g) in net.param_slices_mut().into_iter().zip(grads.slices()) {
                    for (x, &d) in p.iter_mut().zip(g) {
                        let m = &mut self.first_moment[idx];
                        let v = &mut self.second_moment[idx];
                        *m = b1 * *m + (1.0 - b1) * d;
                        *v = b2 * *v + (1.0 - b2) * d * d;
                        *x -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                        idx += 1;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`OptimizerState::update`].
pub fn apply_gradients(
    net: &SdpNetwork,
    grads: &GradientSet,
    opt: &OptimizerState,
) -> Result<(SdpNetwork, OptimizerState)> {
    let mut net = net.clone();
    let mut opt = opt.clone();
    opt.update(&mut net, grads)?;
    Ok((net, opt))
}
