//! Wall-clock inference benchmark for float and quantized networks.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::snn::Action;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: String,
    pub inferences: usize,
    pub inferences_per_sec: f64,
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub duration_secs: f64,
    pub timesteps: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times `infer` over `states` (cycled) until `budget` elapses or
/// `max_inferences` is reached. Each inference is timed individually.
pub fn bench_variant(
    variant: &str,
    states: &[Vec<f64>],
    budget: Duration,
    max_inferences: Option<usize>,
    mut infer: impl FnMut(&[f64]) -> Result<Action>,
) -> Result<BenchRow> {
    if states.is_empty() {
        return Err(Error::InsufficientSamples);
    }
    let cap = max_inferences.unwrap_or(usize::MAX);
    let mut samples = Vec::new();
    let started = Instant::now();
    while samples.len() < cap && started.elapsed() < budget {
        let state = &states[samples.len() % states.len()];
        let t0 = Instant::now();
        std::hint::black_box(infer(std::hint::black_box(state))?);
        samples.push(t0.elapsed().as_secs_f64() * 1e6);
    }
    if samples.is_empty() {
        return Err(Error::InsufficientSamples);
    }
    let total_us: f64 = samples.iter().sum();
    let n = samples.len();
    samples.sort_by(f64::total_cmp);
    Ok(BenchRow {
        variant: variant.to_string(),
        inferences: n,
        inferences_per_sec: n as f64 / (total_us * 1e-6).max(f64::MIN_POSITIVE),
        mean_us: total_us / n as f64,
        median_us: percentile(&samples, 0.5),
        p99_us: percentile(&samples, 0.99),
    })
}
