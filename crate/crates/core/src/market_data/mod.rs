//! OHLCV ingestion, validation and alignment, plus the state and
//! price-relative vectors the policy consumes.
//!
//! CSV is the canonical on-disk format (`timestamp,open,high,low,close,volume`).
//! Remote candles are normalized into the same format by [`fetch`].

pub mod fetch;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::simplex::is_on_simplex;

pub const CSV_HEADER: &str = "timestamp,open,high,low,close,volume";

/// Default half-hour candle period in seconds.
pub const DEFAULT_PERIOD: i64 = 1800;

/// Default minimum number of shared timestamps accepted by [`align`].
pub const DEFAULT_MIN_ALIGNED: usize = 100;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("timestamps not strictly increasing at row {line} ({prev} then {next})")]
    NonMonotonicTimestamps { line: usize, prev: i64, next: i64 },
    #[error("gap at row {line}: stride {stride}s but period is {period}s")]
    GapDetected { line: usize, stride: i64, period: i64 },
    #[error("invalid candle at row {line}: {reason}")]
    InvalidCandle { line: usize, reason: String },
    #[error("aligned intersection has {found} timestamps, need at least {required}")]
    EmptyIntersection { found: usize, required: usize },
    #[error("period mismatch: {symbol} has {found}s, expected {expected}s")]
    PeriodMismatch { symbol: String, expected: i64, found: i64 },
    #[error("no series given")]
    NoSeries,
    #[error("insufficient history: {reason}")]
    InsufficientHistory { reason: String },
    #[error("index {index} out of range for frame of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("weight vector has length {found}, expected {expected}")]
    WeightDimensionMismatch { expected: usize, found: usize },
    #[error("previous weights are not on the simplex")]
    NotOnSimplex,
    #[error("frame of length {len} too short (minimum {min})")]
    TooShort { len: usize, min: usize },
    #[error("split ratio {0} outside (0, 1)")]
    InvalidRatio(f64),
    #[error("http error: {0}")]
    HttpError(String),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("rate limited by remote endpoint")]
    RateLimited,
}

pub type Result<T, E = MarketDataError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Candle {
    /// Checks price positivity and the low/open/close/high ordering.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and strictly positive".into());
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err("volume must be finite and non-negative".into());
        }
        if self.low > self.high {
            return Err(format!("low {} > high {}", self.low, self.high));
        }
        for (name, p) in [("open", self.open), ("close", self.close)] {
            if p < self.low || p > self.high {
                return Err(format!("{name} {p} outside [{}, {}]", self.low, self.high));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetSeries {
    pub symbol: String,
    pub period: i64,
    pub candles: Vec<Candle>,
}

impl AssetSeries {
    /// Validates candles and the constant-stride timestamp grid.
    pub fn new(symbol: impl Into<String>, period: i64, candles: Vec<Candle>) -> Result<Self> {
        for (i, c) in candles.iter().enumerate() {
            c.validate()
                .map_err(|reason| MarketDataError::InvalidCandle { line: i + 2, reason })?;
        }
        for (i, pair) in candles.windows(2).enumerate() {
            let (prev, next) = (pair[0].timestamp, pair[1].timestamp);
            if next <= prev {
                return Err(MarketDataError::NonMonotonicTimestamps { line: i + 3, prev, next });
            }
            if next - prev != period {
                return Err(MarketDataError::GapDetected { line: i + 3, stride: next - prev, period });
            }
        }
        Ok(Self { symbol: symbol.into(), period, candles })
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for c in &self.candles {
            writeln!(out, "{},{},{},{},{},{}", c.timestamp, c.open, c.high, c.low, c.close, c.volume)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let io = |source| MarketDataError::Io { path: path.display().to_string(), source };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = File::create(path).map_err(io)?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(io)
    }
}

/// Parses CSV candles from any reader. Rows must already be in timestamp order.
pub fn parse_csv<R: Read>(reader: R, symbol: &str, period: i64) -> Result<AssetSeries> {
    let reader = BufReader::new(reader);
    let mut candles = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| MarketDataError::Io { path: symbol.to_string(), source })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            if header.join(",") != CSV_HEADER {
                return Err(MarketDataError::MalformedRow {
                    line: line_no,
                    reason: format!("expected header `{CSV_HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        candles.push(parse_row(line, line_no)?);
    }
    AssetSeries::new(symbol, period, candles)
}

fn parse_row(line: &str, line_no: usize) -> Result<Candle> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(MarketDataError::MalformedRow {
            line: line_no,
            reason: format!("expected 6 fields, found {}", fields.len()),
        });
    }
    let bad = |what: &str, raw: &str| MarketDataError::MalformedRow {
        line: line_no,
        reason: format!("cannot parse {what} `{raw}`"),
    };
    let timestamp = fields[0].parse::<i64>().map_err(|_| bad("timestamp", fields[0]))?;
    let mut nums = [0.0; 5];
    for (i, name) in ["open", "high", "low", "close", "volume"].iter().enumerate() {
        nums[i] = fields[i + 1].parse::<f64>().map_err(|_| bad(name, fields[i + 1]))?;
    }
    Ok(Candle { timestamp, open: nums[0], high: nums[1], low: nums[2], close: nums[3], volume: nums[4] })
}

/// Loads one asset from CSV; the symbol is the file stem.
pub fn load_csv(path: &Path, period: i64) -> Result<AssetSeries> {
    let file = File::open(path)
        .map_err(|source| MarketDataError::Io { path: path.display().to_string(), source })?;
    let symbol = path.file_stem().and_then(|s| s.to_str()).unwrap_or("asset").to_string();
    parse_csv(file, &symbol, period)
}

/// Time-aligned OHLCV table: one row per asset, one column per shared timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketFrame {
    pub symbols: Vec<String>,
    pub period: i64,
    pub timestamps: Vec<i64>,
    pub opens: Matrix,
    pub highs: Matrix,
    pub lows: Matrix,
    pub closes: Matrix,
    pub volumes: Matrix,
}

impl MarketFrame {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num_assets(&self) -> usize {
        self.symbols.len()
    }

    pub fn candle(&self, asset: usize, t: usize) -> Candle {
        Candle {
            timestamp: self.timestamps[t],
            open: self.opens.get(asset, t),
            high: self.highs.get(asset, t),
            low: self.lows.get(asset, t),
            close: self.closes.get(asset, t),
            volume: self.volumes.get(asset, t),
        }
    }

    /// Columns `[start, end)` as a new frame.
    pub fn slice(&self, start: usize, end: usize) -> MarketFrame {
        MarketFrame {
            symbols: self.symbols.clone(),
            period: self.period,
            timestamps: self.timestamps[start..end].to_vec(),
            opens: self.opens.columns(start, end),
            highs: self.highs.columns(start, end),
            lows: self.lows.columns(start, end),
            closes: self.closes.columns(start, end),
            volumes: self.volumes.columns(start, end),
        }
    }

    /// Concatenates two frames over the same assets along time.
    pub fn concat(&self, other: &MarketFrame) -> MarketFrame {
        let join = |a: &Matrix, b: &Matrix| {
            Matrix::from_fn(a.rows(), a.cols() + b.cols(), |r, c| {
                if c < a.cols() { a.get(r, c) } else { b.get(r, c - a.cols()) }
            })
        };
        let mut timestamps = self.timestamps.clone();
        timestamps.extend_from_slice(&other.timestamps);
        MarketFrame {
            symbols: self.symbols.clone(),
            period: self.period,
            timestamps,
            opens: join(&self.opens, &other.opens),
            highs: join(&self.highs, &other.highs),
            lows: join(&self.lows, &other.lows),
            closes: join(&self.closes, &other.closes),
            volumes: join(&self.volumes, &other.volumes),
        }
    }

    /// Splits the frame back into one series per asset.
    pub fn to_series(&self) -> Vec<AssetSeries> {
        (0..self.num_assets())
            .map(|a| AssetSeries {
                symbol: self.symbols[a].clone(),
                period: self.period,
                candles: (0..self.len()).map(|t| self.candle(a, t)).collect(),
            })
            .collect()
    }

    /// Long-format CSV: `timestamp,symbol,open,high,low,close,volume`, one row per asset per timestamp.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "timestamp,symbol,open,high,low,close,volume")?;
        for t in 0..self.len() {
            for a in 0..self.num_assets() {
                let c = self.candle(a, t);
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    c.timestamp, self.symbols[a], c.open, c.high, c.low, c.close, c.volume
                )?;
            }
        }
        Ok(())
    }

    /// Reads the long format written by [`MarketFrame::write_csv`].
    pub fn read_csv<R: Read>(reader: R, period: i64) -> Result<MarketFrame> {
        let reader = BufReader::new(reader);
        let mut symbols: Vec<String> = Vec::new();
        let mut per_symbol: Vec<Vec<Candle>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| MarketDataError::Io { path: "frame".into(), source })?;
            if line_no == 1 || line.trim().is_empty() {
                continue;
            }
            let (ts, rest) = line.split_once(',').ok_or_else(|| MarketDataError::MalformedRow {
                line: line_no,
                reason: "missing symbol column".into(),
            })?;
            let (symbol, values) = rest.split_once(',').ok_or_else(|| MarketDataError::MalformedRow {
                line: line_no,
                reason: "missing price columns".into(),
            })?;
            let candle = parse_row(&format!("{ts},{values}"), line_no)?;
            let slot = match symbols.iter().position(|s| s == symbol) {
                Some(i) => i,
                None => {
                    symbols.push(symbol.to_string());
                    per_symbol.push(Vec::new());
                    symbols.len() - 1
                }
            };
            per_symbol[slot].push(candle);
        }
        let series = symbols
            .into_iter()
            .zip(per_symbol)
            .map(|(s, c)| AssetSeries::new(s, period, c))
            .collect::<Result<Vec<_>>>()?;
        align(&series, 1)
    }
}

/// Restricts all series to their shared timestamps (no forward fill).
pub fn align(series: &[AssetSeries], min_len: usize) -> Result<MarketFrame> {
    let first = series.first().ok_or(MarketDataError::NoSeries)?;
    for s in series {
        if s.period != first.period {
            return Err(MarketDataError::PeriodMismatch {
                symbol: s.symbol.clone(),
                expected: first.period,
                found: s.period,
            });
        }
    }
    let mut shared: BTreeSet<i64> = first.candles.iter().map(|c| c.timestamp).collect();
    for s in &series[1..] {
        let other: BTreeSet<i64> = s.candles.iter().map(|c| c.timestamp).collect();
        shared = shared.intersection(&other).copied().collect();
    }
    if shared.len() < min_len.max(1) {
        return Err(MarketDataError::EmptyIntersection { found: shared.len(), required: min_len.max(1) });
    }
    let timestamps: Vec<i64> = shared.into_iter().collect();
    let m = series.len();
    let n = timestamps.len();
    let mut opens = Matrix::zeros(m, n);
    let mut highs = Matrix::zeros(m, n);
    let mut lows = Matrix::zeros(m, n);
    let mut closes = Matrix::zeros(m, n);
    let mut volumes = Matrix::zeros(m, n);
    for (a, s) in series.iter().enumerate() {
        let mut col = 0;
        for c in &s.candles {
            if col < n && c.timestamp == timestamps[col] {
                opens.set(a, col, c.open);
                highs.set(a, col, c.high);
                lows.set(a, col, c.low);
                closes.set(a, col, c.close);
                volumes.set(a, col, c.volume);
                col += 1;
            }
        }
    }
    Ok(MarketFrame {
        symbols: series.iter().map(|s| s.symbol.clone()).collect(),
        period: first.period,
        timestamps,
        opens,
        highs,
        lows,
        closes,
        volumes,
    })
}

/// The `k` symbols with the largest summed volume over the final `lookback`
/// candles, ordered by volume (descending) then symbol.
pub fn select_universe(candidates: &[AssetSeries], k: usize, lookback: usize) -> Result<Vec<String>> {
    if k > candidates.len() {
        return Err(MarketDataError::InsufficientHistory {
            reason: format!("requested {k} assets from {} candidates", candidates.len()),
        });
    }
    let mut ranked = Vec::with_capacity(candidates.len());
    for s in candidates {
        if lookback > s.len() {
            return Err(MarketDataError::InsufficientHistory {
                reason: format!("{} has {} candles, lookback is {lookback}", s.symbol, s.len()),
            });
        }
        let total: f64 = s.candles[s.len() - lookback..].iter().map(|c| c.volume).sum();
        ranked.push((total, s.symbol.clone()));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(k).map(|(_, s)| s).collect())
}

/// Price relative vector `y_t`; cash first and fixed at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceRelativeVector(pub Vec<f64>);

impl PriceRelativeVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn price_relatives(frame: &MarketFrame, t: usize) -> Result<PriceRelativeVector> {
    if t == 0 || t >= frame.len() {
        return Err(MarketDataError::IndexOutOfRange { index: t, len: frame.len() });
    }
    let mut y = Vec::with_capacity(frame.num_assets() + 1);
    y.push(1.0);
    for a in 0..frame.num_assets() {
        y.push(frame.closes.get(a, t) / frame.closes.get(a, t - 1));
    }
    Ok(PriceRelativeVector(y))
}

/// Policy input: per-candle ratios (close/open, high/open, low/open) for each
/// asset over the lookback window, oldest candle first, followed by the
/// previous weights (cash first).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
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

/// Dimension of a state vector for `assets` assets and a `window`-candle lookback.
pub fn state_dim(assets: usize, window: usize) -> usize {
    3 * assets * window + assets + 1
}

pub fn build_state(
    frame: &MarketFrame,
    t: usize,
    prev_weights: &[f64],
    window: usize,
) -> Result<StateVector> {
    let m = frame.num_assets();
    let window = window.max(1);
    if t >= frame.len() || t + 1 < window {
        return Err(MarketDataError::IndexOutOfRange { index: t, len: frame.len() });
    }
    if prev_weights.len() != m + 1 {
        return Err(MarketDataError::WeightDimensionMismatch { expected: m + 1, found: prev_weights.len() });
    }
    if !is_on_simplex(prev_weights) {
        return Err(MarketDataError::NotOnSimplex);
    }
    let mut values = Vec::with_capacity(state_dim(m, window));
    for tau in (t + 1 - window)..=t {
        for source in [&frame.closes, &frame.highs, &frame.lows] {
            for a in 0..m {
                values.push(source.get(a, tau) / frame.opens.get(a, tau));
            }
        }
    }
    values.extend_from_slice(prev_weights);
    Ok(StateVector(values))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: MarketFrame,
    pub backtest: MarketFrame,
    /// First timestamp of the back-test segment.
    pub boundary_timestamp: i64,
}

pub const MIN_SPLIT_LEN: usize = 10;

/// First `floor(ratio * len)` columns train, the rest back-test.
pub fn split(frame: &MarketFrame, ratio: f64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(MarketDataError::InvalidRatio(ratio));
    }
    let n = frame.len();
    if n < MIN_SPLIT_LEN {
        return Err(MarketDataError::TooShort { len: n, min: MIN_SPLIT_LEN });
    }
    let cut = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
    Ok(DatasetSplit {
        train: frame.slice(0, cut),
        backtest: frame.slice(cut, n),
        boundary_timestamp: frame.timestamps[cut],
    })
}
