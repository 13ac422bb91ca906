use std::path::PathBuf;

use rjpoisson::posterior::{DEFAULT_HEIGHT_BANDWIDTH, DEFAULT_LOCATION_BANDWIDTH};
use rjpoisson::rjmcmc::{ChainConfig, PriorConfig};
use rjpoisson::validation::{PipelineConfig, ReplicationConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bandwidths {
    pub location: f64,
    pub height: f64,
}

impl Default for Bandwidths {
    fn default() -> Self {
        Self {
            location: DEFAULT_LOCATION_BANDWIDTH,
            height: DEFAULT_HEIGHT_BANDWIDTH,
        }
    }
}

/// Every setting of every subcommand. Unset paths default to files inside
/// the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Daily `date,value` CSV.
    pub input: Option<PathBuf>,
    /// Exceedance table read by `fit`, `test` and `validate`.
    pub events: Option<PathBuf>,
    /// Ensemble table read by `validate`.
    pub ensemble: Option<PathBuf>,
    /// Change-points for `test`; unset means the point estimate of the last fit.
    pub changepoints: Option<Vec<f64>>,
    pub quantile: f64,
    pub m0: usize,
    pub half_window: usize,
    pub include_trend: bool,
    pub prior: PriorConfig,
    pub chain: ChainConfig,
    pub bandwidths: Bandwidths,
    pub replication: ReplicationConfig,
    pub max_iterations: usize,
    pub stability_days: f64,
    pub runs_level: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            input: None,
            events: None,
            ensemble: None,
            changepoints: None,
            quantile: p.quantile,
            m0: p.m0,
            half_window: p.half_window,
            include_trend: p.include_trend,
            prior: p.prior,
            chain: p.chain,
            bandwidths: Bandwidths::default(),
            replication: p.replication,
            max_iterations: p.max_iterations,
            stability_days: p.stability_days,
            runs_level: p.runs_level,
        }
    }
}

impl RunConfig {
    /// Layers `overrides` (`dotted.key=value`) over `base`, a JSON document.
    /// Values parse as JSON where possible and as strings otherwise.
    pub fn load(base: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc = match base {
            Some(text) => serde_json::from_str(text).map_err(|e| CliError::Data(format!("config: {e}")))?,
            None => serde_json::to_value(RunConfig::default()).expect("default config serialises"),
        };
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Data(format!("--set expects key=value, got '{item}'")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(|e| CliError::Data(format!("config: {e}")))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            quantile: self.quantile,
            m0: self.m0,
            half_window: self.half_window,
            include_trend: self.include_trend,
            prior: self.prior,
            chain: self.chain,
            location_bandwidth: self.bandwidths.location,
            height_bandwidth: self.bandwidths.height,
            replication: self.replication,
            max_iterations: self.max_iterations,
            stability_days: self.stability_days,
            runs_level: self.runs_level,
        }
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Data(format!("empty segment in key '{key}'")));
        }
        let map = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => {
                return Err(CliError::Data(format!(
                    "'{key}': '{}' is not a table",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}
