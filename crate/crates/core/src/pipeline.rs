//! The five CLI commands as library functions. Each writes its manifest
//! into the output directory before doing any work.
//!
//! Output layout under `out`:
//!
//! | command  | files |
//! |----------|-------|
//! | ingest   | `frame.csv`, `split.json` |
//! | train    | `checkpoint.json`, `checkpoints/step_<n>.json`, `train_log.jsonl`, `loss_history.csv` |
//! | backtest | `backtest/<strategy>.json`, `backtest/<strategy>_equity.csv`, `backtest/<strategy>_weights.csv`, `comparison.json`, `comparison.txt` |
//! | quantize | `quantized.json`, `divergence.json` |
//! | bench    | `bench.json` |

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bench::{bench_variant, BenchReport};
use crate::checkpoint::{write_text, Checkpoint, QuantizedCheckpoint};
use crate::config::{RunConfig, CACHE_ENV};
use crate::manifest::RunManifest;
use crate::market_data::fetch::{FetchConfig, HttpTransport, RemoteFetcher};
use crate::market_data::{align, build_state, load_csv, select_universe, split, AssetSeries, MarketFrame, StateVector};
use crate::metrics::{backtest, best_stock_policy, comparison_rows, comparison_text, ucrp_policy, BacktestReport, Policy, SdpPolicy};
use crate::portfolio::train;
use crate::quantizer::{compare, infer_quantized, quantize_network, DivergenceReport};
use crate::seed::component_rng;
use crate::snn::{infer, EncodingMode, SdpNetwork};
use crate::stbp::OptimizerState;
use crate::{Error, Result};

pub const FRAME_FILE: &str = "frame.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const QUANTIZED_FILE: &str = "quantized.json";
pub const STRATEGIES: [&str; 3] = ["sdp", "ucrp", "best_stock"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub symbols: Vec<String>,
    pub period: i64,
    pub total_len: usize,
    pub train_len: usize,
    pub backtest_len: usize,
    pub boundary_timestamp: i64,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializes") + "\n"
}

fn cache_root(cfg: &RunConfig, out: &Path) -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|d| !d.is_empty()) {
        return PathBuf::from(dir);
    }
    cfg.data.fetch.as_ref().and_then(|f| f.cache_dir.clone()).unwrap_or_else(|| out.join("cache"))
}

fn gather_series(cfg: &RunConfig, out: &Path) -> Result<Vec<AssetSeries>> {
    let mut series = Vec::new();
    for path in &cfg.data.csv {
        if !path.exists() {
            return Err(Error::FileNotFound(path.display().to_string()));
        }
        series.push(load_csv(path, cfg.data.period)?);
    }
    if let Some(fetch) = &cfg.data.fetch {
        let fetcher = RemoteFetcher::new(
            FetchConfig {
                url_template: fetch.url_template.clone(),
                fields: fetch.fields.clone(),
                min_delay: Duration::from_millis(fetch.min_delay_ms),
                cache_root: cache_root(cfg, out),
            },
            HttpTransport::default(),
        );
        for pair in &fetch.pairs {
            series.push(fetcher.fetch_remote(pair, cfg.data.period, fetch.start, fetch.end)?);
        }
    }
    Ok(series)
}

/// Loads every configured series, keeps the top-volume universe, aligns it and splits.
pub fn ingest_frame(cfg: &RunConfig, out: &Path) -> Result<(MarketFrame, SplitInfo)> {
    let candidates = gather_series(cfg, out)?;
    let k = match cfg.data.universe {
        0 => candidates.len(),
        k => k,
    };
    let lookback = match cfg.data.lookback {
        0 => candidates.iter().map(AssetSeries::len).min().unwrap_or(0),
        n => n,
    };
    let chosen = select_universe(&candidates, k, lookback)?;
    let mut kept: Vec<AssetSeries> = candidates.into_iter().filter(|s| chosen.contains(&s.symbol)).collect();
    kept.sort_by(|a, b| a.symbol.cmp(&b.symbol));
    let frame = align(&kept, cfg.data.min_aligned)?;
    let parts = split(&frame, cfg.data.split_ratio)?;
    let info = SplitInfo {
        symbols: frame.symbols.clone(),
        period: frame.period,
        total_len: frame.len(),
        train_len: parts.train.len(),
        backtest_len: parts.backtest.len(),
        boundary_timestamp: parts.boundary_timestamp,
    };
    Ok((frame, info))
}

pub fn cmd_ingest(cfg: &RunConfig, out: &Path) -> Result<SplitInfo> {
    RunManifest::new("ingest", cfg, &cfg.data.csv)?.write(out)?;
    let (frame, info) = ingest_frame(cfg, out)?;
    let mut csv = Vec::new();
    frame.write_csv(&mut csv).map_err(|e| Error::io(&out.join(FRAME_FILE), e))?;
    write_text(&out.join(FRAME_FILE), std::str::from_utf8(&csv).expect("csv is utf-8"))?;
    write_text(&out.join(SPLIT_FILE), &to_json(&info))?;
    Ok(info)
}

/// Reads the ingested frame and returns its (train, back-test) halves.
pub fn load_split(cfg: &RunConfig, out: &Path) -> Result<(MarketFrame, MarketFrame)> {
    let path = out.join(FRAME_FILE);
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let frame = MarketFrame::read_csv(std::io::BufReader::new(file), cfg.data.period)?;
    let parts = split(&frame, cfg.data.split_ratio)?;
    Ok((parts.train, parts.backtest))
}

fn checkpoint_path(out: &Path, given: Option<&Path>) -> PathBuf {
    given.map_or_else(|| out.join(CHECKPOINT_FILE), Path::to_path_buf)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Checkpoint> {
    RunManifest::new("train", cfg, &[out.join(FRAME_FILE)])?.write(out)?;
    let (train_frame, _) = load_split(cfg, out)?;
    let net = SdpNetwork::init(&cfg.network.spec(train_frame.num_assets()), cfg.network_seed())?;
    let opt = OptimizerState::for_network(cfg.training.optimizer, cfg.training.learning_rate, &net);
    let every = cfg.training.checkpoint_every;
    let mut log = String::new();
    let outcome = train(&net, &train_frame, &cfg.train_config(), &cfg.reward_config(), &opt, &cfg.surrogate()?, |p, net, opt| {
        log.push_str(&serde_json::to_string(p).expect("progress serializes"));
        log.push('\n');
        if every > 0 && p.step % every == 0 {
            let path = out.join("checkpoints").join(format!("step_{}.json", p.step));
            Checkpoint::new(net.clone(), Some(opt.clone()), p.step).save(&path)?;
        }
        Ok(())
    })?;
    write_text(&out.join("train_log.jsonl"), &log)?;
    let mut history = String::from("step,loss\n");
    for (i, r) in outcome.history.iter().enumerate() {
        history.push_str(&format!("{},{}\n", i + 1, -r));
    }
    write_text(&out.join("loss_history.csv"), &history)?;
    let ckpt = Checkpoint::new(outcome.network, Some(outcome.optimizer), outcome.history.len());
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    Ok(ckpt)
}

pub fn parse_strategies(list: &str) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if !STRATEGIES.contains(&name) {
            return Err(Error::Config(format!("unknown strategy `{name}`, expected one of {}", STRATEGIES.join(", "))));
        }
        if !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
    }
    if names.is_empty() {
        return Err(Error::Config("no strategies requested".into()));
    }
    Ok(names)
}

pub fn cmd_backtest(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>, strategies: &[String]) -> Result<Vec<BacktestReport>> {
    let ckpt_path = checkpoint_path(out, checkpoint);
    let wants_sdp = strategies.iter().any(|s| s == "sdp");
    let mut inputs = vec![out.join(FRAME_FILE)];
    if wants_sdp {
        inputs.push(ckpt_path.clone());
    }
    RunManifest::new("backtest", cfg, &inputs)?.write(out)?;
    let (_, test_frame) = load_split(cfg, out)?;
    let net = if wants_sdp { Some(Checkpoint::load(&ckpt_path)?.network) } else { None };
    let rcfg = cfg.reward_config();
    let mut reports = Vec::new();
    for name in strategies {
        let report = match name.as_str() {
            "sdp" => backtest(&mut SdpPolicy::new(net.as_ref().expect("loaded above")), &test_frame, &rcfg, cfg.reward.risk_free)?,
            "ucrp" => backtest(&mut ucrp_policy(test_frame.num_assets()), &test_frame, &rcfg, cfg.reward.risk_free)?,
            "best_stock" => backtest(&mut best_stock_policy(&test_frame), &test_frame, &rcfg, cfg.reward.risk_free)?,
            other => return Err(Error::Config(format!("unknown strategy `{other}`"))),
        };
        let dir = out.join("backtest");
        write_text(&dir.join(format!("{name}.json")), &report.to_json())?;
        write_text(&dir.join(format!("{name}_equity.csv")), &report.equity_csv())?;
        write_text(&dir.join(format!("{name}_weights.csv")), &report.weights_csv())?;
        reports.push(report);
    }
    let rows = comparison_rows(&reports);
    write_text(&out.join("comparison.json"), &to_json(&rows))?;
    write_text(&out.join("comparison.txt"), &comparison_text(&rows))?;
    Ok(reports)
}

/// Wraps a policy and keeps every state it is asked about.
struct Recording<'a, P: Policy> {
    inner: &'a mut P,
    states: Vec<Vec<f64>>,
}

impl<P: Policy> Policy for Recording<'_, P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn window(&self) -> usize {
        self.inner.window()
    }

    fn decide(&mut self, state: &StateVector) -> Result<Vec<f64>> {
        self.states.push(state.0.clone());
        self.inner.decide(state)
    }
}

/// States the float policy visits while trading the back-test segment.
pub fn backtest_states(net: &SdpNetwork, frame: &MarketFrame, cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let mut policy = SdpPolicy::new(net);
    let mut rec = Recording { inner: &mut policy, states: Vec::new() };
    backtest(&mut rec, frame, &cfg.reward_config(), cfg.reward.risk_free)?;
    Ok(rec.states)
}

pub fn cmd_quantize(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<DivergenceReport> {
    let ckpt_path = checkpoint_path(out, checkpoint);
    RunManifest::new("quantize", cfg, &[out.join(FRAME_FILE), ckpt_path.clone()])?.write(out)?;
    let net = Checkpoint::load(&ckpt_path)?.network;
    let qnet = quantize_network(&net, cfg.quantize.w_max)?;
    let (_, test_frame) = load_split(cfg, out)?;
    let states = backtest_states(&net, &test_frame, cfg)?;
    let report = compare(&net, &qnet, &states)?;
    QuantizedCheckpoint::new(qnet).save(&out.join(QUANTIZED_FILE))?;
    write_text(&out.join("divergence.json"), &to_json(&report))?;
    Ok(report)
}

/// Fixed states for timing: every back-test decision point with uniform prior weights.
pub fn bench_states(net: &SdpNetwork, frame: &MarketFrame) -> Result<Vec<Vec<f64>>> {
    let m = frame.num_assets();
    let prior = vec![1.0 / (m + 1) as f64; m + 1];
    let window = net.window.max(1);
    (window - 1..frame.len())
        .map(|t| Ok(build_state(frame, t, &prior, window)?.0))
        .collect()
}

/// Times float and quantized inference, each for `duration`, on one thread.
pub fn cmd_bench(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>, duration: Duration) -> Result<BenchReport> {
    let ckpt_path = checkpoint_path(out, checkpoint);
    RunManifest::new("bench", cfg, &[out.join(FRAME_FILE), ckpt_path.clone()])?.write(out)?;
    let net = Checkpoint::load(&ckpt_path)?.network;
    let qnet = quantize_network(&net, cfg.quantize.w_max)?;
    let (_, test_frame) = load_split(cfg, out)?;
    let states = bench_states(&net, &test_frame)?;
    let report = bench_network(&net, &qnet, &states, duration, None)?;
    write_text(&out.join("bench.json"), &report.to_json())?;
    Ok(report)
}

pub fn bench_network(
    net: &SdpNetwork,
    qnet: &crate::quantizer::QuantizedNetwork,
    states: &[Vec<f64>],
    duration: Duration,
    max_inferences: Option<usize>,
) -> Result<BenchReport> {
    let probabilistic = net.coder.mode == EncodingMode::Probabilistic;
    let mut rng = component_rng(net.seed, "bench-encoder");
    let float = bench_variant("float", states, duration, max_inferences, |s| {
        infer(net, s, if probabilistic { Some(&mut rng) } else { None }).map_err(Error::from)
    })?;
    let quantized = bench_variant("quantized", states, duration, max_inferences, |s| {
        infer_quantized(qnet, s, Some(&mut rng)).map_err(Error::from)
    })?;
    Ok(BenchReport { duration_secs: duration.as_secs_f64(), timesteps: net.timesteps, rows: vec![float, quantized] })
}
