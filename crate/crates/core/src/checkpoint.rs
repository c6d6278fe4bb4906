//! Versioned JSON checkpoints for float and quantized networks.
//!
//! Floats are written in shortest round-trip form, so save then load is exact.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::quantizer::QuantizedNetwork;
use crate::snn::SdpNetwork;
use crate::stbp::OptimizerState;
use crate::{Error, Result};

pub const NETWORK_FORMAT: &str = "spikefolio/sdp-network";
pub const QUANTIZED_FORMAT: &str = "spikefolio/sdp-quantized";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Number of optimizer updates applied so far.
    pub step: usize,
    pub network: SdpNetwork,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedCheckpoint {
    pub format: String,
    pub version: u32,
    pub network: QuantizedNetwork,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("checkpoint serializes") + "\n"
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Checkpoint(format!("format `{format}`, expected `{expected}`")));
    }
    if version != SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!("unsupported schema version {version}")));
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(network: SdpNetwork, optimizer: Option<OptimizerState>, step: usize) -> Self {
        Self { format: NETWORK_FORMAT.into(), version: SCHEMA_VERSION, step, network, optimizer }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ck.check()?;
        Ok(ck)
    }

    fn check(&self) -> Result<()> {
        check_header(&self.format, self.version, NETWORK_FORMAT)?;
        self.network.validate()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = read_json(path)?;
        ck.check()?;
        Ok(ck)
    }
}

impl QuantizedCheckpoint {
    pub fn new(network: QuantizedNetwork) -> Self {
        Self { format: QUANTIZED_FORMAT.into(), version: SCHEMA_VERSION, network }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = read_json(path)?;
        check_header(&ck.format, ck.version, QUANTIZED_FORMAT)?;
        ck.network.validate()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::NetworkSpec;
    use crate::stbp::UpdateRule;

    #[test]
    fn exact_round_trip_with_optimizer() {
        let net = SdpNetwork::init(&NetworkSpec { assets: 2, hidden: vec![8, 4], ..NetworkSpec::default() }, 17).unwrap();
        let mut opt = OptimizerState::for_network(UpdateRule::Adam, 1e-4, &net);
        opt.first_moment.iter_mut().enumerate().for_each(|(i, m)| *m = (i as f64).sin() * 1e-7);
        let ck = Checkpoint::new(net, Some(opt), 3);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json(), ck.to_json());
    }

    #[test]
    fn rejects_wrong_format_and_missing_file() {
        let net = SdpNetwork::init(&NetworkSpec { assets: 1, hidden: vec![2], ..NetworkSpec::default() }, 1).unwrap();
        let mut ck = Checkpoint::new(net, None, 0);
        ck.version = 99;
        assert!(matches!(Checkpoint::from_json(&ck.to_json()), Err(Error::Checkpoint(_))));
        assert!(matches!(Checkpoint::load(Path::new("/nonexistent/ck.json")), Err(Error::FileNotFound(_))));
    }
}
