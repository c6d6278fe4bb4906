//! TOML run configuration. Every field has a default; hyperparameters
//! default to the published SDP training values.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! csv = ["data/BTC.csv", "data/ETH.csv"]
//! period = 1800
//! universe = 11
//!
//! [network]
//! hidden = [128, 128]
//! timesteps = 5
//!
//! [training]
//! steps = 2000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::market_data::fetch::FieldNames;
use crate::market_data::{DEFAULT_MIN_ALIGNED, DEFAULT_PERIOD};
use crate::portfolio::{RewardConfig, TrainConfig};
use crate::quantizer::DEFAULT_W_MAX;
use crate::snn::{EncodingMode, NetworkSpec};
use crate::stbp::{SurrogateParams, UpdateRule};
use crate::{Error, Result};

/// Environment variable overriding the remote-data cache root.
pub const CACHE_ENV: &str = "SPIKEFOLIO_CACHE_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchSection {
    pub url_template: String,
    pub pairs: Vec<String>,
    pub start: i64,
    pub end: i64,
    pub min_delay_ms: u64,
    pub cache_dir: Option<PathBuf>,
    pub fields: FieldNames,
}

impl Default for FetchSection {
    fn default() -> Self {
        Self {
            url_template: "https://poloniex.com/public?command=returnChartData&currencyPair={pair}&start={start}&end={end}&period={period}".into(),
            pairs: Vec::new(),
            start: 0,
            end: 0,
            min_delay_ms: 1000,
            cache_dir: None,
            fields: FieldNames::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Per-asset CSV files; symbol = file stem. Relative paths resolve against the config file.
    pub csv: Vec<PathBuf>,
    pub fetch: Option<FetchSection>,
    pub period: i64,
    /// Number of assets kept by volume ranking; 0 keeps all.
    pub universe: usize,
    /// Candles used for the volume ranking; 0 uses the whole shortest series.
    pub lookback: usize,
    pub min_aligned: usize,
    pub split_ratio: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            csv: Vec::new(),
            fetch: None,
            period: DEFAULT_PERIOD,
            universe: 11,
            lookback: 0,
            min_aligned: DEFAULT_MIN_ALIGNED,
            split_ratio: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub neurons_per_dim: usize,
    pub hidden: Vec<usize>,
    pub timesteps: usize,
    pub window: usize,
    pub v_th: f64,
    pub d_c: f64,
    pub d_v: f64,
    pub eps_enc: f64,
    pub price_range: [f64; 2],
    pub weight_range: [f64; 2],
    pub encoding: EncodingMode,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let spec = NetworkSpec::default();
        Self {
            neurons_per_dim: spec.neurons_per_dim,
            hidden: spec.hidden,
            timesteps: spec.timesteps,
            window: spec.window,
            v_th: spec.v_th,
            d_c: spec.d_c,
            d_v: spec.d_v,
            eps_enc: spec.eps_enc,
            price_range: [spec.price_range.0, spec.price_range.1],
            weight_range: [spec.weight_range.0, spec.weight_range.1],
            encoding: spec.mode,
        }
    }
}

impl NetworkSection {
    pub fn spec(&self, assets: usize) -> NetworkSpec {
        NetworkSpec {
            assets,
            window: self.window,
            neurons_per_dim: self.neurons_per_dim,
            hidden: self.hidden.clone(),
            timesteps: self.timesteps,
            v_th: self.v_th,
            d_c: self.d_c,
            d_v: self.d_v,
            eps_enc: self.eps_enc,
            price_range: (self.price_range[0], self.price_range[1]),
            weight_range: (self.weight_range[0], self.weight_range[1]),
            mode: self.encoding,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub episode_length: usize,
    pub optimizer: UpdateRule,
    pub clip_norm: f64,
    pub checkpoint_every: usize,
    pub surrogate_amplitude: f64,
    pub surrogate_window: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = SurrogateParams::default();
        Self {
            learning_rate: 1e-4,
            batch_size: t.batch_size,
            steps: t.steps,
            episode_length: t.episode_length,
            optimizer: UpdateRule::Adam,
            clip_norm: t.clip_norm,
            checkpoint_every: 500,
            surrogate_amplitude: s.amplitude,
            surrogate_window: s.window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub commission: f64,
    pub risk_free: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self { commission: RewardConfig::default().commission, risk_free: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizeSection {
    pub w_max: i32,
}

impl Default for QuantizeSection {
    fn default() -> Self {
        Self { w_max: DEFAULT_W_MAX }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every component derives a named sub-seed from it.
    pub seed: u64,
    pub data: DataSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub reward: RewardSection,
    pub quantize: QuantizeSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Loads a TOML config, or the config snapshot embedded in a run manifest
    /// (`.json`). Relative data paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let manifest: crate::manifest::RunManifest =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            manifest.config
        } else {
            Self::from_toml(&text)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes data paths absolute, resolving relative ones against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        let base = base.as_path();
        for p in &mut self.data.csv {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(fetch) = &mut self.data.fetch {
            if let Some(dir) = &mut fetch.cache_dir {
                if dir.is_relative() {
                    *dir = base.join(&*dir);
                }
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.training.batch_size,
            steps: self.training.steps,
            seed: crate::seed::sub_seed(self.seed, "training"),
            episode_length: self.training.episode_length,
            clip_norm: self.training.clip_norm,
        }
    }

    pub fn network_seed(&self) -> u64 {
        crate::seed::sub_seed(self.seed, "network")
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig { commission: self.reward.commission }
    }

    pub fn surrogate(&self) -> Result<SurrogateParams> {
        SurrogateParams::new(self.training.surrogate_amplitude, self.training.surrogate_window)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let d = &self.data;
        if d.period <= 0 {
            return bad(format!("data.period must be positive, got {}", d.period));
        }
        if !(d.split_ratio > 0.0 && d.split_ratio < 1.0) {
            return bad(format!("data.split_ratio {} outside (0, 1)", d.split_ratio));
        }
        let n = &self.network;
        if n.neurons_per_dim == 0 || n.timesteps == 0 || n.window == 0 {
            return bad("network.neurons_per_dim, timesteps and window must be at least 1".into());
        }
        if n.hidden.is_empty() || n.hidden.contains(&0) {
            return bad("network.hidden needs at least one non-empty layer".into());
        }
        if !(n.v_th > 0.0) || !(0.0..=1.0).contains(&n.d_c) || !(0.0..=1.0).contains(&n.d_v) {
            return bad("network.v_th must be positive and decays within [0, 1]".into());
        }
        if !(0.0..1.0).contains(&n.eps_enc) {
            return bad("network.eps_enc must be in [0, 1)".into());
        }
        if !(n.price_range[1] > n.price_range[0]) || !(n.weight_range[1] > n.weight_range[0]) {
            return bad("network ranges must be increasing".into());
        }
        let t = &self.training;
        if !(t.learning_rate >= 0.0) {
            return bad("training.learning_rate must be non-negative".into());
        }
        self.train_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.surrogate()?;
        self.reward_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.quantize.w_max < 1 {
            return bad("quantize.w_max must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!((c.network.v_th, c.network.d_c, c.network.d_v), (0.5, 0.5, 0.8));
        assert_eq!((c.training.surrogate_amplitude, c.training.surrogate_window), (9.0, 0.4));
        assert_eq!(c.network.hidden, vec![128, 128]);
        assert_eq!(c.training.batch_size, 128);
        assert_eq!(c.training.learning_rate, 1e-4);
        assert_eq!(c.network.timesteps, 5);
        assert_eq!(c.quantize.w_max, 127);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn dump_and_reload_is_identical() {
        let mut c = RunConfig::default();
        c.data.fetch = Some(FetchSection::default());
        c.seed = 99;
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn validation_errors() {
        assert!(RunConfig::from_toml("[training]\nbatch_size = 0\n").is_err());
        assert!(RunConfig::from_toml("[reward]\ncommission = 0.2\n").is_err());
        assert!(RunConfig::from_toml("[network]\nhidden = []\n").is_err());
        assert!(RunConfig::from_toml("[network]\nbogus = 1\n").is_err());
    }
}
