//! JSON checkpoints holding the network config and named parameter arrays.
//! Floats are written in shortest round-trip form, so save then load is exact.

use std::path::Path;

use mmdm_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::params::ParamStore;
use super::{NetworkError, Result};

const FORMAT: &str = "mmdm-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    model: String,
    config: NetworkConfig,
    #[serde(default)]
    meta: serde_json::Map<String, serde_json::Value>,
    params: Vec<ParamRecord>,
}

/// A model kind tag, its config, free-form metadata and the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: String,
    pub config: NetworkConfig,
    pub meta: serde_json::Map<String, serde_json::Value>,
    pub params: ParamStore,
}

pub fn write_checkpoint(c: &Checkpoint) -> Result<String> {
    let container = Container {
        format: FORMAT.into(),
        version: VERSION,
        model: c.model.clone(),
        config: c.config.clone(),
        meta: c.meta.clone(),
        params: c
            .params
            .iter()
            .map(|(name, t)| ParamRecord {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&container).map_err(|e| NetworkError::Checkpoint(e.to_string()))
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let c: Container = serde_json::from_str(text).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    if c.format != FORMAT {
        return Err(NetworkError::Checkpoint(format!("unexpected format `{}`", c.format)));
    }
    if c.version != VERSION {
        return Err(NetworkError::Checkpoint(format!("unsupported version {}", c.version)));
    }
    let mut params = ParamStore::new();
    for p in c.params {
        let t = Tensor::new(p.shape, p.data).map_err(|e| NetworkError::Checkpoint(format!("{}: {e}", p.name)))?;
        params.insert(p.name, t);
    }
    Ok(Checkpoint {
        model: c.model,
        config: c.config,
        meta: c.meta,
        params,
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_checkpoint(c)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Mmdm;

    #[test]
    fn round_trip_is_exact() {
        let m = Mmdm::new(NetworkConfig::tiny(16, 1, 3)).unwrap();
        let c = Checkpoint {
            model: "mmdm".into(),
            config: m.cfg.clone(),
            meta: Default::default(),
            params: m.params.clone(),
        };
        let back = parse_checkpoint(&write_checkpoint(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        for ((_, a), (_, b)) in back.params.iter().zip(c.params.iter()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_other_formats() {
        assert!(parse_checkpoint("{}").is_err());
        assert!(parse_checkpoint("not json").is_err());
    }
}
