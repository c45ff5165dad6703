use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MetricError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    Percent,
    Millimeter,
    MillimeterPerFrame2,
    Dimensionless,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Self::Percent => "%",
            Self::Millimeter => "mm",
            Self::MillimeterPerFrame2 => "mm/frame^2",
            Self::Dimensionless => "1",
        }
    }

    fn from_symbol(s: &str) -> Option<Self> {
        [Self::Percent, Self::Millimeter, Self::MillimeterPerFrame2, Self::Dimensionless]
            .into_iter()
            .find(|u| u.symbol() == s)
    }

    /// Unit of a metric by its base name (`mpjpe`, `mpjpe.before`, ...).
    pub fn for_metric(name: &str) -> Unit {
        match name.split('.').next().unwrap_or(name) {
            "pcp" | "precision" | "recall" | "delta" => Self::Percent,
            "mpjpe" => Self::Millimeter,
            "accel" => Self::MillimeterPerFrame2,
            _ => Self::Dimensionless,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub unit: Unit,
}

/// Named metric values with run metadata. Entries are kept sorted by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub metrics: BTreeMap<String, Metric>,
}

/// Hex SHA-256 of a configuration text.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl MetricReport {
    pub fn new(seed: Option<u64>, config_hash: Option<String>) -> Self {
        Self {
            seed,
            config_hash,
            metrics: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: f64, unit: Unit) -> Result<()> {
        let ok = match unit {
            Unit::Percent => value >= 0.0 && (value <= 100.0 || name.starts_with("delta")),
            Unit::Millimeter | Unit::MillimeterPerFrame2 => value >= 0.0,
            Unit::Dimensionless => value.is_finite(),
        };
        if !ok {
            return Err(MetricError::OutOfRange {
                name: name.to_string(),
                value,
            });
        }
        self.metrics.insert(name.to_string(), Metric { value, unit });
        Ok(())
    }

    /// Inserts with the unit implied by the name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        self.insert(name, value, Unit::for_metric(name))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }

    /// `name value unit` lines after `#` metadata lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed {seed}");
        }
        if let Some(h) = &self.config_hash {
            let _ = writeln!(s, "# config {h}");
        }
        for (name, m) in &self.metrics {
            let _ = writeln!(s, "{name} {:?} {}", m.value, m.unit.symbol());
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut r = Self::default();
        for (i, line) in text.lines().enumerate() {
            let err = |why: &str| MetricError::Format(format!("line {}: {why}", i + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                [] => {}
                ["#", "seed", v] => r.seed = Some(v.parse().map_err(|_| err("bad seed"))?),
                ["#", "config", h] => r.config_hash = Some(h.to_string()),
                [name, value, unit] => {
                    let value: f64 = value.parse().map_err(|_| err("bad value"))?;
                    let unit = Unit::from_symbol(unit).ok_or_else(|| err("unknown unit"))?;
                    r.insert(name, value, unit)?;
                }
                _ => return Err(err("expected `name value unit`")),
            }
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| MetricError::Format(e.to_string()))
    }
}
