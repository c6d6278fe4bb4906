//! Back-test engine, performance metrics and the UCRP / Best Stock baselines.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{build_state, price_relatives, MarketFrame, StateVector};
use crate::portfolio::{step, PortfolioState, RewardConfig};
use crate::simplex::is_on_simplex;
use crate::snn::SdpNetwork;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least 2 returns, got {0}")]
    TooFewReturns(usize),
    #[error("excess returns have zero variance")]
    ZeroVariance,
    #[error("invalid equity curve: {0}")]
    InvalidCurve(String),
    #[error("policy {policy} returned an action off the simplex")]
    InvalidAction { policy: String },
    #[error("frame of length {len} too short to back-test with window {window}")]
    FrameTooShort { len: usize, window: usize },
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Portfolio value over time, normalized so the first value is 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl EquityCurve {
    pub fn new(timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != timestamps.len() {
            return Err(MetricsError::InvalidCurve("empty or misaligned curve".into()));
        }
        if values[0] != 1.0 {
            return Err(MetricsError::InvalidCurve(format!("first value {} is not 1", values[0])));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(MetricsError::InvalidCurve("values must be finite and positive".into()));
        }
        Ok(Self { timestamps, values })
    }
}

/// Final over initial portfolio value.
pub fn fapv(values: &[f64]) -> f64 {
    match (values.first(), values.last()) {
        (Some(first), Some(last)) => last / first,
        _ => f64::NAN,
    }
}

/// `p_t / p_{t-1} - 1` for each consecutive pair.
pub fn periodic_returns(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Mean excess return over its sample (n - 1) standard deviation. Not annualized.
pub fn sharpe(returns: &[f64], risk_free: f64) -> Result<f64> {
    let n = returns.len();
    if n < 2 {
        return Err(MetricsError::TooFewReturns(n));
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - risk_free).collect();
    let mean = excess.iter().sum::<f64>() / n as f64;
    let var = excess.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 || excess.iter().all(|x| *x == excess[0]) {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(mean / var.sqrt())
}

/// Largest relative peak-to-trough decline, in one pass with a running peak.
pub fn mdd(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0_f64;
    for &v in values {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    worst
}

/// Decision function from state to portfolio weights (cash first).
pub trait Policy {
    fn name(&self) -> &str;

    /// Lookback window of the states this policy expects.
    fn window(&self) -> usize {
        1
    }

    fn decide(&mut self, state: &StateVector) -> crate::Result<Vec<f64>>;
}

/// Returns the same weights at every state.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantPolicy {
    pub name: String,
    pub weights: Vec<f64>,
}

impl Policy for ConstantPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, _state: &StateVector) -> crate::Result<Vec<f64>> {
        Ok(self.weights.clone())
    }
}

/// Uniform weights over the risky assets, no cash, rebalanced every period.
pub fn ucrp_policy(assets: usize) -> ConstantPolicy {
    let mut weights = vec![1.0 / assets as f64; assets + 1];
    weights[0] = 0.0;
    ConstantPolicy { name: "ucrp".into(), weights }
}

/// Hindsight: all capital in the asset with the best close-to-close growth
/// over the frame, ties going to the lexicographically first symbol.
pub fn best_stock_policy(frame: &MarketFrame) -> ConstantPolicy {
    let last = frame.len() - 1;
    let mut best: Option<(f64, &str, usize)> = None;
    for a in 0..frame.num_assets() {
        let growth = frame.closes.get(a, last) / frame.closes.get(a, 0);
        let symbol = frame.symbols[a].as_str();
        let better = match best {
            None => true,
            Some((g, s, _)) => growth > g || (growth == g && symbol < s),
        };
        if better {
            best = Some((growth, symbol, a));
        }
    }
    let mut weights = vec![0.0; frame.num_assets() + 1];
    if let Some((_, _, a)) = best {
        weights[a + 1] = 1.0;
    }
    ConstantPolicy { name: "best_stock".into(), weights }
}

/// The float network as a back-test policy (deterministic encoding).
pub struct SdpPolicy<'a> {
    pub net: &'a SdpNetwork,
    rng: rand_chacha::ChaCha8Rng,
}

impl<'a> SdpPolicy<'a> {
    pub fn new(net: &'a SdpNetwork) -> Self {
        Self { net, rng: crate::seed::component_rng(net.seed, "backtest-encoder") }
    }
}

impl Policy for SdpPolicy<'_> {
    fn name(&self) -> &str {
        "sdp"
    }

    fn window(&self) -> usize {
        self.net.window
    }

    fn decide(&mut self, state: &StateVector) -> crate::Result<Vec<f64>> {
        let rng: Option<&mut dyn rand::RngCore> = match self.net.coder.mode {
            crate::snn::EncodingMode::Probabilistic => Some(&mut self.rng),
            crate::snn::EncodingMode::Deterministic => None,
        };
        Ok(crate::snn::infer(self.net, state.as_slice(), rng)?.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub timestamp: i64,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: String,
    pub fapv: f64,
    /// `None` when undefined (zero variance or too few periods).
    pub sharpe: Option<f64>,
    pub mdd: f64,
    pub equity: EquityCurve,
    pub weights: Vec<WeightRow>,
}

impl BacktestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn equity_csv(&self) -> String {
        let mut out = String::from("timestamp,value\n");
        for (t, v) in self.equity.timestamps.iter().zip(&self.equity.values) {
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }

    pub fn weights_csv(&self) -> String {
        let width = self.weights.first().map_or(0, |r| r.weights.len());
        let mut out = String::from("timestamp");
        for i in 0..width {
            let _ = write!(out, ",w{i}");
        }
        out.push('\n');
        for row in &self.weights {
            out.push_str(&row.timestamp.to_string());
            for w in &row.weights {
                let _ = write!(out, ",{w}");
            }
            out.push('\n');
        }
        out
    }
}

/// Rolls `policy` over the frame from all cash with `p_0 = 1`.
pub fn backtest(
    policy: &mut dyn Policy,
    frame: &MarketFrame,
    rcfg: &RewardConfig,
    risk_free: f64,
) -> crate::Result<BacktestReport> {
    let window = policy.window().max(1);
    let start = window - 1;
    if frame.len() < start + 2 {
        return Err(MetricsError::FrameTooShort { len: frame.len(), window }.into());
    }
    let mut ps = PortfolioState::initial(frame.num_assets());
    let mut timestamps = vec![frame.timestamps[start]];
    let mut values = vec![1.0];
    let mut weights = Vec::with_capacity(frame.len() - start);
    for t in start..frame.len() - 1 {
        let state = build_state(frame, t, &ps.weights, window)?;
        let action = policy.decide(&state)?;
        if action.len() != ps.weights.len() || !is_on_simplex(&action) {
            return Err(MetricsError::InvalidAction { policy: policy.name().to_string() }.into());
        }
        let y = price_relatives(frame, t + 1)?;
        ps = step(&ps, &action, &y, rcfg)?.0;
        weights.push(WeightRow { timestamp: frame.timestamps[t], weights: action });
        timestamps.push(frame.timestamps[t + 1]);
        values.push(ps.value);
    }
    let equity = EquityCurve::new(timestamps, values)?;
    Ok(BacktestReport {
        strategy: policy.name().to_string(),
        fapv: fapv(&equity.values),
        sharpe: sharpe(&periodic_returns(&equity.values), risk_free).ok(),
        mdd: mdd(&equity.values),
        equity,
        weights,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub mdd: f64,
    pub fapv: f64,
    pub sharpe: Option<f64>,
}

/// Structured comparison, columns in the order MDD, fAPV, Sharpe.
pub fn comparison_rows(reports: &[BacktestReport]) -> Vec<ComparisonRow> {
    reports
        .iter()
        .map(|r| ComparisonRow { strategy: r.strategy.clone(), mdd: r.mdd, fapv: r.fapv, sharpe: r.sharpe })
        .collect()
}

pub fn comparison_text(rows: &[ComparisonRow]) -> String {
    let name_width = rows.iter().map(|r| r.strategy.len()).max().unwrap_or(0).max("strategy".len());
    let mut out = format!("{:<name_width$}  {:>10}  {:>10}  {:>10}\n", "strategy", "MDD", "fAPV", "Sharpe");
    for r in rows {
        let sharpe = r.sharpe.map_or_else(|| "n/a".to_string(), |s| format!("{s:.6}"));
        let _ = writeln!(out, "{:<name_width$}  {:>10.6}  {:>10.6}  {:>10}", r.strategy, r.mdd, r.fapv, sharpe);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{align, AssetSeries, Candle};

    #[test]
    fn fapv_cases() {
        assert_eq!(fapv(&[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(fapv(&[1.0, 1.5, 3.0]), 3.0);
        assert_eq!(fapv(&[1.0, 0.5]), 0.5);
    }

    #[test]
    fn sharpe_cases() {
        assert_eq!(sharpe(&[0.1, -0.1, 0.1, -0.1], 0.0).unwrap(), 0.0);
        assert_eq!(sharpe(&[0.01, 0.01, 0.01], 0.0), Err(MetricsError::ZeroVariance));
        assert_eq!(sharpe(&[0.01], 0.0), Err(MetricsError::TooFewReturns(1)));
        let s = sharpe(&[0.02, 0.04], 0.0).unwrap();
        assert!((s - 0.03 / 0.0002f64.sqrt()).abs() < 1e-12);
        assert!((s - 2.1213).abs() < 1e-4);
    }

    #[test]
    fn mdd_cases() {
        assert_eq!(mdd(&[1.0, 1.1, 1.2]), 0.0);
        assert_eq!(mdd(&[1.0, 2.0, 1.0, 3.0]), 0.5);
        assert!((mdd(&[3.0, 1.0]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ucrp_weights() {
        assert_eq!(ucrp_policy(2).weights, vec![0.0, 0.5, 0.5]);
        assert_eq!(ucrp_policy(1).weights, vec![0.0, 1.0]);
        assert!(is_on_simplex(&ucrp_policy(7).weights));
    }

    fn frame(paths: &[(&str, Vec<f64>)]) -> MarketFrame {
        let series: Vec<AssetSeries> = paths
            .iter()
            .map(|(s, closes)| {
                let candles = closes
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| Candle { timestamp: i as i64 * 60, open: c, high: c, low: c, close: c, volume: 1.0 })
                    .collect();
                AssetSeries::new(*s, 60, candles).unwrap()
            })
            .collect();
        align(&series, 1).unwrap()
    }

    #[test]
    fn all_cash_backtest() {
        let f = frame(&[("A", vec![1.0, 2.0, 1.5, 3.0])]);
        let mut p = ConstantPolicy { name: "cash".into(), weights: vec![1.0, 0.0] };
        let r = backtest(&mut p, &f, &RewardConfig::default(), 0.0).unwrap();
        assert_eq!(r.equity.values, vec![1.0; 4]);
        assert_eq!((r.fapv, r.mdd, r.sharpe), (1.0, 0.0, None));
    }

    #[test]
    fn best_stock_selection_and_costs() {
        let f = frame(&[("B", vec![10.0, 12.0, 15.0]), ("A", vec![5.0, 7.0, 10.0])]);
        let mut p = best_stock_policy(&f);
        assert_eq!(p.weights, vec![0.0, 0.0, 1.0]);
        let free = backtest(&mut p, &f, &RewardConfig { commission: 0.0 }, 0.0).unwrap();
        assert!((free.fapv - 2.0).abs() < 1e-12);
        let costly = backtest(&mut p, &f, &RewardConfig { commission: 0.0025 }, 0.0).unwrap();
        assert!((costly.fapv - 2.0 * (1.0 - 0.0025)).abs() < 1e-12);
        let flat = frame(&[("Z", vec![1.0, 1.0]), ("Y", vec![2.0, 2.0])]);
        let p = best_stock_policy(&flat);
        assert_eq!(p.weights, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn off_simplex_action_is_rejected() {
        let f = frame(&[("A", vec![1.0, 2.0])]);
        let mut p = ConstantPolicy { name: "bad".into(), weights: vec![0.7, 0.7] };
        assert!(backtest(&mut p, &f, &RewardConfig::default(), 0.0).is_err());
    }

    #[test]
    fn table_layout() {
        let rows = vec![
            ComparisonRow { strategy: "sdp".into(), mdd: 0.1, fapv: 1.2, sharpe: Some(0.03) },
            ComparisonRow { strategy: "ucrp".into(), mdd: 0.0, fapv: 1.0, sharpe: None },
        ];
        let text = comparison_text(&rows);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("MDD"));
        assert!(text.contains("n/a"));
    }
}
