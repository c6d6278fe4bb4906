use thiserror::Error;

use crate::market_data::MarketDataError;
use crate::metrics::MetricsError;
use crate::portfolio::PortfolioError;
use crate::quantizer::QuantizeError;
use crate::snn::SnnError;
use crate::stbp::StbpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error(transparent)]
    Stbp(#[from] StbpError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("benchmark completed no inferences within the requested duration")]
    InsufficientSamples,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn variant_name<T: std::fmt::Debug>(value: &T) -> String {
    let text = format!("{value:?}");
    text.split(|c: char| !c.is_alphanumeric() && c != '_').next().unwrap_or("Unknown").to_string()
}

impl Error {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.display().to_string())
        } else {
            Error::Io { path: path.display().to_string(), source }
        }
    }

    /// Name of the innermost error variant, e.g. `HttpError` or `AllZeroWeights`.
    pub fn kind(&self) -> String {
        match self {
            Error::MarketData(e) => variant_name(e),
            Error::Snn(e) => variant_name(e),
            Error::Stbp(StbpError::Snn(e)) => variant_name(e),
            Error::Stbp(e) => variant_name(e),
            Error::Portfolio(PortfolioError::MarketData(e)) => variant_name(e),
            Error::Portfolio(PortfolioError::Snn(e)) => variant_name(e),
            Error::Portfolio(PortfolioError::Stbp(e)) => variant_name(e),
            Error::Portfolio(e) => variant_name(e),
            Error::Metrics(e) => variant_name(e),
            Error::Quantize(QuantizeError::Snn(e)) => variant_name(e),
            Error::Quantize(e) => variant_name(e),
            other => variant_name(other),
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::FileNotFound(_) => 3,
            Error::Io { .. } => 4,
            Error::MarketData(MarketDataError::HttpError(_) | MarketDataError::RateLimited)
            | Error::Portfolio(PortfolioError::MarketData(MarketDataError::HttpError(_))) => 5,
            Error::MarketData(MarketDataError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 3,
            Error::MarketData(_) => 6,
            Error::Checkpoint(_) => 7,
            Error::Quantize(_) => 8,
            Error::InsufficientSamples => 9,
            _ => 10,
        }
    }

    /// Single-line JSON diagnostic.
    pub fn diagnostic(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }
}
