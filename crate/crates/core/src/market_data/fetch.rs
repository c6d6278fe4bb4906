//! Remote candlestick download with an on-disk CSV cache and a
//! minimum inter-request delay.
//!
//! Responses are JSON arrays of records. Field names are configurable;
//! the defaults match the Poloniex `returnChartData` layout.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{load_csv, parse_csv, AssetSeries, MarketDataError, Result, CSV_HEADER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldNames {
    pub timestamp: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
}

impl Default for FieldNames {
    fn default() -> Self {
        Self {
            timestamp: "date".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FetchConfig {
    /// URL with `{pair}`, `{period}`, `{start}` and `{end}` placeholders.
    pub url_template: String,
    pub fields: FieldNames,
    pub min_delay: Duration,
    pub cache_root: PathBuf,
}

/// Something that can GET a URL and return the body.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<String>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self { agent: config.into() }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<String> {
        match self.agent.get(url).call() {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| MarketDataError::HttpError(e.to_string())),
            Err(ureq::Error::StatusCode(429)) => Err(MarketDataError::RateLimited),
            Err(e) => Err(MarketDataError::HttpError(e.to_string())),
        }
    }
}

pub fn cache_path(root: &Path, pair: &str, period: i64, start: i64, end: i64) -> PathBuf {
    root.join(pair).join(period.to_string()).join(format!("{start}-{end}.csv"))
}

pub fn render_url(template: &str, pair: &str, period: i64, start: i64, end: i64) -> String {
    template
        .replace("{pair}", pair)
        .replace("{period}", &period.to_string())
        .replace("{start}", &start.to_string())
        .replace("{end}", &end.to_string())
}

fn number(record: &Value, field: &str, index: usize) -> Result<String> {
    match record.get(field) {
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(Value::String(s)) if s.trim().parse::<f64>().is_ok() => Ok(s.trim().to_string()),
        Some(other) => Err(MarketDataError::ParseError(format!("record {index}: field `{field}` is not numeric: {other}"))),
        None => Err(MarketDataError::ParseError(format!("record {index}: missing field `{field}`"))),
    }
}

/// Converts a JSON array of candle records into canonical CSV text.
pub fn records_to_csv(body: &str, fields: &FieldNames) -> Result<String> {
    let parsed: Value = serde_json::from_str(body).map_err(|e| MarketDataError::ParseError(e.to_string()))?;
    let records = parsed
        .as_array()
        .ok_or_else(|| MarketDataError::ParseError("response is not a JSON array".into()))?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for (i, r) in records.iter().enumerate() {
        let ts = number(r, &fields.timestamp, i)?;
        let ts = ts
            .parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0)
            .map(|v| v as i64)
            .ok_or_else(|| MarketDataError::ParseError(format!("record {i}: non-integer timestamp {ts}")))?;
        let cols = [&fields.open, &fields.high, &fields.low, &fields.close, &fields.volume]
            .iter()
            .map(|f| number(r, f, i))
            .collect::<Result<Vec<_>>>()?;
        csv.push_str(&format!("{ts},{}\n", cols.join(",")));
    }
    Ok(csv)
}

pub struct RemoteFetcher<T: Transport> {
    config: FetchConfig,
    transport: T,
    last_request: Mutex<Option<Instant>>,
}

impl<T: Transport> RemoteFetcher<T> {
    pub fn new(config: FetchConfig, transport: T) -> Self {
        Self { config, transport, last_request: Mutex::new(None) }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Returns the cached series when present, otherwise downloads, validates
    /// and caches it. Requests through one fetcher are serialized and spaced
    /// by at least `min_delay`.
    pub fn fetch_remote(&self, pair: &str, period: i64, start: i64, end: i64) -> Result<AssetSeries> {
        let path = cache_path(&self.config.cache_root, pair, period, start, end);
        if path.exists() {
            let mut series = load_csv(&path, period)?;
            series.symbol = pair.to_string();
            return Ok(series);
        }
        let url = render_url(&self.config.url_template, pair, period, start, end);
        let body = {
            let mut last = self.last_request.lock().unwrap_or_else(|p| p.into_inner());
            if let Some(prev) = *last {
                let elapsed = prev.elapsed();
                if elapsed < self.config.min_delay {
                    std::thread::sleep(self.config.min_delay - elapsed);
                }
            }
            let body = self.transport.get(&url);
            *last = Some(Instant::now());
            body?
        };
        let csv = records_to_csv(&body, &self.config.fields)?;
        let series = parse_csv(csv.as_bytes(), pair, period)?;
        series.save_csv(&path)?;
        Ok(series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Canned {
        body: String,
        calls: AtomicUsize,
    }

    impl Transport for Canned {
        fn get(&self, _url: &str) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.body.clone())
        }
    }

    fn records(start: i64, n: usize, period: i64) -> String {
        let rows: Vec<String> = (0..n)
            .map(|i| {
                format!(
                    r#"{{"date":{},"open":1.0,"high":"1.2","low":0.9,"close":1.1,"volume":5}}"#,
                    start + i as i64 * period
                )
            })
            .collect();
        format!("[{}]", rows.join(","))
    }

    fn config(root: &Path) -> FetchConfig {
        FetchConfig {
            url_template: "http://example.invalid/chart?pair={pair}&period={period}&start={start}&end={end}".into(),
            fields: FieldNames::default(),
            min_delay: Duration::from_millis(0),
            cache_root: root.to_path_buf(),
        }
    }

    #[test]
    fn thirty_days_half_hourly_and_cache_hit() {
        let dir = tempfile::tempdir().unwrap();
        let start = 1_600_000_200;
        let n = 30 * 48;
        let fetcher =
            RemoteFetcher::new(config(dir.path()), Canned { body: records(start, n, 1800), calls: AtomicUsize::new(0) });
        let end = start + (n as i64 - 1) * 1800;
        let s = fetcher.fetch_remote("BTC_ETH", 1800, start, end).unwrap();
        assert_eq!(s.len(), 1440);
        assert!(cache_path(dir.path(), "BTC_ETH", 1800, start, end).exists());
        let again = fetcher.fetch_remote("BTC_ETH", 1800, start, end).unwrap();
        assert_eq!(again, s);
        assert_eq!(fetcher.transport().calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn malformed_record_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"[{"date":0,"open":"x","high":1,"low":1,"close":1,"volume":1}]"#.to_string();
        let fetcher = RemoteFetcher::new(config(dir.path()), Canned { body, calls: AtomicUsize::new(0) });
        assert!(matches!(fetcher.fetch_remote("P", 1800, 0, 0), Err(MarketDataError::ParseError(_))));
        let missing = r#"[{"date":0,"open":1,"high":1,"low":1,"close":1}]"#;
        assert!(matches!(records_to_csv(missing, &FieldNames::default()), Err(MarketDataError::ParseError(_))));
        assert!(matches!(records_to_csv("{}", &FieldNames::default()), Err(MarketDataError::ParseError(_))));
    }

    #[test]
    fn url_placeholders() {
        assert_eq!(render_url("{pair}/{period}/{start}/{end}", "A_B", 300, 1, 2), "A_B/300/1/2");
    }
}
