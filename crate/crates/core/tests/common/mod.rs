#![allow(dead_code)]

pub mod naive;
pub mod tape;

use std::path::PathBuf;

use rand::Rng;
use spikefolio::linalg::Matrix;
use spikefolio::market_data::{AssetSeries, Candle};
use spikefolio::seed::SeededRng;
use spikefolio::snn::{NetworkSpec, SdpNetwork};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Encoder ranges of the standard state layout.
pub fn state_ranges(spec: &NetworkSpec) -> Vec<(f64, f64)> {
    let mut r = vec![spec.price_range; 3 * spec.assets * spec.window];
    r.extend(std::iter::repeat_n(spec.weight_range, spec.assets + 1));
    r
}

pub fn tiny_spec(assets: usize, hidden: Vec<usize>, timesteps: usize) -> NetworkSpec {
    NetworkSpec { assets, neurons_per_dim: 3, hidden, timesteps, ..NetworkSpec::default() }
}

/// Network with weights large enough to keep neurons busy, plus random biases.
pub fn random_net(spec: &NetworkSpec, rng: &mut SeededRng) -> SdpNetwork {
    let mut net = SdpNetwork::init(spec, rng.gen()).unwrap();
    for layer in &mut net.layers {
        let (r, c) = layer.weights.shape();
        layer.weights = Matrix::from_fn(r, c, |_, _| rng.gen_range(-0.6..0.9));
        layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.2));
    }
    let (r, c) = net.decoder.weights.shape();
    net.decoder.weights = Matrix::from_fn(r, c, |_, _| rng.gen_range(-2.0..2.0));
    net.decoder.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    net
}

pub fn random_simplex(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-9f64..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

pub fn random_state(spec: &NetworkSpec, rng: &mut SeededRng) -> Vec<f64> {
    let mut s: Vec<f64> = (0..3 * spec.assets * spec.window).map(|_| rng.gen_range(0.85..1.15)).collect();
    s.extend(random_simplex(spec.assets + 1, rng));
    s
}

/// `max_{i <= j} (v_i - v_j) / v_i` by checking every pair.
pub fn brute_mdd(v: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..v.len() {
        for j in i..v.len() {
            worst = worst.max((v[i] - v[j]) / v[i]);
        }
    }
    worst
}

/// Two assets: `A` gains 1% every period, `B` loses 1%.
pub fn rising_falling(len: usize, period: i64) -> Vec<AssetSeries> {
    let make = |symbol: &str, rate: f64| {
        let candles = (0..len)
            .map(|i| {
                let open = 100.0 * rate.powi(i as i32);
                let close = open * rate;
                Candle {
                    timestamp: i as i64 * period,
                    open,
                    high: open.max(close),
                    low: open.min(close),
                    close,
                    volume: 1.0,
                }
            })
            .collect();
        AssetSeries::new(symbol, period, candles).unwrap()
    };
    vec![make("A", 1.01), make("B", 0.99)]
}
