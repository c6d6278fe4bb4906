//! Portfolio dynamics, the average log-return objective and the
//! surrogate-gradient training loop.
//!
//! Each period the agent holds `weights` (cash first). Given a new target
//! action and the period's price relatives `y`, the rebalancing cost factor
//! is `mu = 1 - c_s * sum_{i>0} |a_i - w_i|`, the period growth is
//! `mu * (y . a)` and the reward is its logarithm. After the period the
//! held weights are the action drifted by `y`.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{build_state, price_relatives, MarketDataError, MarketFrame, PriceRelativeVector};
use crate::seed::component_rng;
use crate::simplex::{all_cash, dot};
use crate::snn::{forward, Action, EncodingMode, SdpNetwork, SnnError};
use crate::stbp::{backward, GradientSet, OptimizerState, StbpError, SurrogateParams};

/// Lower clamp on the transaction residual factor.
pub const MIN_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("non-positive period growth {0}")]
    NonPositiveGrowth(f64),
    #[error("reward batch is empty")]
    EmptyBatch,
    #[error("frame of length {len} too short for episodes of {episode_length} periods (need {required})")]
    FrameTooShort { len: usize, episode_length: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error(transparent)]
    Stbp(#[from] StbpError),
}

pub type Result<T, E = PortfolioError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioState {
    /// Value as a multiple of the initial capital.
    pub value: f64,
    /// Currently held allocation, cash first.
    pub weights: Vec<f64>,
}

impl PortfolioState {
    /// `p_0 = 1`, all cash.
    pub fn initial(assets: usize) -> Self {
        Self { value: 1.0, weights: all_cash(assets + 1) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub commission: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { commission: 0.0025 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.05).contains(&self.commission) {
            return Err(PortfolioError::InvalidConfig(format!("commission {} outside [0, 0.05]", self.commission)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub episode_length: usize,
    /// Global L2 clip applied to the batch gradient.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 128, steps: 1000, seed: 0, episode_length: 50, clip_norm: 10.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(PortfolioError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.episode_length < 2 {
            return Err(PortfolioError::InvalidConfig("episode_length must be at least 2".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(PortfolioError::InvalidConfig("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Allocation after prices move by `y`: `w_i y_i / (y . w)`.
pub fn drifted_weights(w: &[f64], y: &[f64]) -> Vec<f64> {
    let growth = dot(w, y);
    w.iter().zip(y).map(|(wi, yi)| wi * yi / growth).collect()
}

/// `1 - c_s * sum over non-cash |target - drift|`, clamped below at [`MIN_RESIDUAL`].
pub fn transaction_residual(w_drift: &[f64], w_target: &[f64], cfg: &RewardConfig) -> f64 {
    let turnover: f64 = w_target.iter().zip(w_drift).skip(1).map(|(a, b)| (a - b).abs()).sum();
    (1.0 - cfg.commission * turnover).max(MIN_RESIDUAL)
}

/// Advances one period. Returns the new state and the log reward.
pub fn step(
    ps: &PortfolioState,
    action: &[f64],
    y: &PriceRelativeVector,
    cfg: &RewardConfig,
) -> Result<(PortfolioState, f64)> {
    let y = y.as_slice();
    if action.len() != ps.weights.len() || y.len() != ps.weights.len() {
        return Err(PortfolioError::DimensionMismatch(format!(
            "weights {}, action {}, relatives {}",
            ps.weights.len(),
            action.len(),
            y.len()
        )));
    }
    let mu = transaction_residual(&ps.weights, action, cfg);
    let growth = mu * dot(y, action);
    if !(growth > 0.0) {
        return Err(PortfolioError::NonPositiveGrowth(growth));
    }
    let next = PortfolioState { value: ps.value * growth, weights: drifted_weights(action, y) };
    Ok((next, growth.ln()))
}

/// `d r / d a` for `r = ln(mu(a) (y . a))`, with `sign(0) = 0` at the cost kink.
pub fn reward_gradient(w_held: &[f64], action: &[f64], y: &[f64], cfg: &RewardConfig) -> Vec<f64> {
    let growth = dot(y, action);
    let mu = transaction_residual(w_held, action, cfg);
    let clamped = mu <= MIN_RESIDUAL;
    action
        .iter()
        .zip(w_held)
        .zip(y)
        .enumerate()
        .map(|(i, ((a, w), yi))| {
            let d_mu = if i == 0 || clamped {
                0.0
            } else {
                let diff = a - w;
                let sign = if diff > 0.0 { 1.0 } else if diff < 0.0 { -1.0 } else { 0.0 };
                -cfg.commission * sign
            };
            yi / growth + d_mu / mu
        })
        .collect()
}

/// Mean of the per-period log rewards.
pub fn batch_reward(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(PortfolioError::EmptyBatch);
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// Uniform episode starts in `[earliest, len - 1 - episode_length]`.
pub fn sample_batch(
    frame: &MarketFrame,
    cfg: &TrainConfig,
    earliest: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<usize>> {
    let required = earliest + cfg.episode_length + 1;
    if frame.len() < required {
        return Err(PortfolioError::FrameTooShort { len: frame.len(), episode_length: cfg.episode_length, required });
    }
    let last = frame.len() - 1 - cfg.episode_length;
    Ok((0..cfg.batch_size).map(|_| rng.gen_range(earliest..=last)).collect())
}

struct Rollout {
    grads: GradientSet,
    mean_reward: f64,
}

#[allow(clippy::too_many_arguments)]
fn rollout(
    net: &SdpNetwork,
    frame: &MarketFrame,
    start: usize,
    episode_length: usize,
    rcfg: &RewardConfig,
    sg: &SurrogateParams,
    loss_scale: f64,
    encoder_seed: u64,
) -> Result<Rollout> {
    let mut enc_rng = component_rng(encoder_seed, "encoder");
    let mut ps = PortfolioState::initial(frame.num_assets());
    let mut grads = GradientSet::zeros_like(net);
    let mut rewards = Vec::with_capacity(episode_length);
    for t in start..start + episode_length {
        let state = build_state(frame, t, &ps.weights, net.window)?;
        let rng: Option<&mut dyn RngCore> =
            if net.coder.mode == EncodingMode::Probabilistic { Some(&mut enc_rng) } else { None };
        let (action, trace) = forward(net, state.as_slice(), rng)?;
        let y = price_relatives(frame, t + 1)?;
        let dr = reward_gradient(&ps.weights, action.as_slice(), y.as_slice(), rcfg);
        // L = -R, averaged over the episode and the batch.
        let dl: Vec<f64> = dr.iter().map(|g| -g / episode_length as f64 * loss_scale).collect();
        grads.add_assign(&backward(net, &trace, &dl, sg)?);
        let (next, r) = step(&ps, action.as_slice(), &y, rcfg)?;
        rewards.push(r);
        ps = next;
    }
    Ok(Rollout { grads, mean_reward: batch_reward(&rewards)? })
}

/// Progress record handed to the training callback after each update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub step: usize,
    pub mean_reward: f64,
    pub grad_norm: f64,
}

pub struct TrainOutcome {
    pub network: SdpNetwork,
    pub optimizer: OptimizerState,
    /// Batch-mean `R` before each update.
    pub history: Vec<f64>,
}

/// Runs `tcfg.steps` updates of per-period policy-gradient ascent on the
/// average log return. Gradients do not flow through the next state's
/// weight features. `on_step` sees every update in order.
pub fn train(
    net: &SdpNetwork,
    frame: &MarketFrame,
    tcfg: &TrainConfig,
    rcfg: &RewardConfig,
    opt: &OptimizerState,
    sg: &SurrogateParams,
    mut on_step: impl FnMut(&TrainProgress, &SdpNetwork, &OptimizerState) -> crate::Result<()>,
) -> crate::Result<TrainOutcome> {
    tcfg.validate()?;
    rcfg.validate()?;
    if frame.num_assets() + 1 != net.num_actions() {
        return Err(PortfolioError::DimensionMismatch(format!(
            "frame has {} assets, network emits {} actions",
            frame.num_assets(),
            net.num_actions()
        ))
        .into());
    }
    let mut net = net.clone();
    let mut opt = opt.clone();
    let mut batch_rng = component_rng(tcfg.seed, "train-batches");
    let earliest = net.window.max(1) - 1;
    let mut history = Vec::with_capacity(tcfg.steps);
    let loss_scale = 1.0 / tcfg.batch_size as f64;
    for step_idx in 0..tcfg.steps {
        let starts = sample_batch(frame, tcfg, earliest, &mut batch_rng)?;
        let step_seed = crate::seed::sub_seed(tcfg.seed, &format!("step-{step_idx}"));
        let rollouts: Vec<Rollout> = starts
            .par_iter()
            .enumerate()
            .map(|(b, &s)| {
                rollout(&net, frame, s, tcfg.episode_length, rcfg, sg, loss_scale, step_seed.wrapping_add(b as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grads = GradientSet::zeros_like(&net);
        let mut reward_sum = 0.0;
        for r in &rollouts {
            grads.add_assign(&r.grads);
            reward_sum += r.mean_reward;
        }
        let mean_reward = reward_sum / rollouts.len() as f64;
        let grad_norm = grads.clip_norm(tcfg.clip_norm);
        opt.update(&mut net, &grads).map_err(PortfolioError::from)?;
        history.push(mean_reward);
        on_step(&TrainProgress { step: step_idx + 1, mean_reward, grad_norm }, &net, &opt)?;
    }
    Ok(TrainOutcome { network: net, optimizer: opt, history })
}

/// Rolls a network over the whole frame from all cash and returns each decision's action.
pub fn policy_actions(net: &SdpNetwork, frame: &MarketFrame, rcfg: &RewardConfig) -> Result<Vec<Action>> {
    let mut ps = PortfolioState::initial(frame.num_assets());
    let mut actions = Vec::new();
    for t in net.window.max(1) - 1..frame.len().saturating_sub(1) {
        let state = build_state(frame, t, &ps.weights, net.window)?;
        let action = crate::snn::infer(net, state.as_slice(), None)?;
        let y = price_relatives(frame, t + 1)?;
        ps = step(&ps, action.as_slice(), &y, rcfg)?.0;
        actions.push(action);
    }
    Ok(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::is_on_simplex;

    fn y(v: &[f64]) -> PriceRelativeVector {
        PriceRelativeVector(v.to_vec())
    }

    #[test]
    fn drift_cases() {
        assert_eq!(drifted_weights(&[0.2, 0.3, 0.5], &[1.0, 1.0, 1.0]), vec![0.2, 0.3, 0.5]);
        let w = drifted_weights(&[0.5, 0.5], &[1.0, 2.0]);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(drifted_weights(&[0.0, 1.0, 0.0], &[1.0, 1.7, 0.4]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn residual_cases() {
        let cfg = RewardConfig::default();
        assert_eq!(transaction_residual(&[0.1, 0.9], &[0.1, 0.9], &cfg), 1.0);
        let swap = transaction_residual(&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &cfg);
        assert!((swap - 0.995).abs() < 1e-15);
        let free = RewardConfig { commission: 0.0 };
        assert_eq!(transaction_residual(&[1.0, 0.0], &[0.0, 1.0], &free), 1.0);
    }

    #[test]
    fn step_cases() {
        let cfg = RewardConfig::default();
        let ps = PortfolioState { value: 1.0, weights: vec![0.5, 0.5] };
        let (next, r) = step(&ps, &[0.5, 0.5], &y(&[1.0, 1.0]), &cfg).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(next.value, 1.0);
        let free = RewardConfig { commission: 0.0 };
        let (next, r) = step(&PortfolioState::initial(1), &[0.0, 1.0], &y(&[1.0, 2.0]), &free).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-15);
        assert_eq!(next.value, 2.0);
        assert!(step(&ps, &[1.0], &y(&[1.0, 1.0]), &cfg).is_err());
    }

    #[test]
    fn batch_reward_cases() {
        assert_eq!(batch_reward(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((batch_reward(&[2f64.ln(), 2f64.ln()]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(batch_reward(&[]), Err(PortfolioError::EmptyBatch)));
    }

    #[test]
    fn reward_gradient_matches_finite_difference_off_kink() {
        let cfg = RewardConfig { commission: 0.01 };
        let w = [0.2, 0.5, 0.3];
        let a = [0.1, 0.3, 0.6];
        let yv = [1.0, 1.05, 0.97];
        let g = reward_gradient(&w, &a, &yv, &cfg);
        let f = |a: &[f64]| (transaction_residual(&w, a, &cfg) * dot(&yv, a)).ln();
        for i in 0..3 {
            let h = 1e-7;
            let mut p = a;
            let mut m = a;
            p[i] += h;
            m[i] -= h;
            let numeric = (f(&p) - f(&m)) / (2.0 * h);
            assert!((numeric - g[i]).abs() < 1e-6, "{i}: {numeric} vs {}", g[i]);
        }
    }

    #[test]
    fn simplex_preserved_over_random_steps() {
        let mut rng = component_rng(1, "steps");
        let cfg = RewardConfig::default();
        let mut ps = PortfolioState::initial(3);
        for _ in 0..500 {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let a: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let yv: Vec<f64> = std::iter::once(1.0).chain((0..3).map(|_| rng.gen_range(0.8..1.2))).collect();
            ps = step(&ps, &a, &y(&yv), &cfg).unwrap().0;
            assert!(is_on_simplex(&ps.weights));
            assert!(ps.value > 0.0);
        }
    }
}
