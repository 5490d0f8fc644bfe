//! `key = value` configuration files. Any CLI flag may also be supplied this
//! way; explicit flags override file values. Unknown keys are an error so
//! typos surface immediately.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::liveness::{TimeoutPolicy, MILLIS};
use crate::quorum::Variant;
use crate::sim::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("bad value for `{key}`: `{value}`")]
    BadValue { key: String, value: String },
}

const KNOWN_KEYS: &[&str] = &[
    // Engine.
    "quorum_variant",
    "max_batch_bytes",
    "pending_bound",
    "round_timeout_ms",
    "election_timeout_ms",
    "backoff_factor",
    "backoff_cap",
    // Transport selection and simulator.
    "transport",
    "link_latency_us",
    "serialization_us",
    "loss_prob",
    "loopback_fastpath",
    "seed",
    // Real transport.
    "bind",
    "peers",
    // Harness flags.
    "experiment",
    "algorithm",
    "replicas",
    "rate",
    "duration",
    "out",
];

/// A parsed configuration: a flat string map with typed getters.
#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse_str(text: &str) -> Result<Config, ConfigError> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Malformed { line });
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        Config::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Overlay: values in `over` win.
    pub fn merged_with(&self, over: &Config) -> Config {
        let mut values = self.values.clone();
        values.extend(over.values.clone());
        Config { values }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KNOWN_KEYS.contains(&key), "unknown config key {key}");
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.clone(),
            }),
        }
    }

    pub fn quorum_variant(&self) -> Result<Option<Variant>, ConfigError> {
        match self.values.get("quorum_variant") {
            None => Ok(None),
            Some(v) => Variant::parse(v).map(Some).ok_or_else(|| ConfigError::BadValue {
                key: "quorum_variant".into(),
                value: v.clone(),
            }),
        }
    }

    /// Apply timing keys onto a policy.
    pub fn apply_policy(&self, policy: &mut TimeoutPolicy) -> Result<(), ConfigError> {
        if let Some(ms) = self.get_parsed::<u64>("round_timeout_ms")? {
            *policy = TimeoutPolicy { round_timeout: ms * MILLIS, ..*policy };
        }
        if let Some(ms) = self.get_parsed::<u64>("election_timeout_ms")? {
            policy.election_timeout = ms * MILLIS;
        }
        if let Some(f) = self.get_parsed::<u32>("backoff_factor")? {
            policy.backoff_factor = f;
        }
        if let Some(cap) = self.get_parsed::<u64>("backoff_cap")? {
            policy.backoff_cap = cap * policy.round_timeout;
        }
        Ok(())
    }

    /// Apply simulator keys onto a sim config.
    pub fn apply_sim(&self, sim: &mut SimConfig) -> Result<(), ConfigError> {
        if let Some(us) = self.get_parsed::<u64>("link_latency_us")? {
            sim.link_latency = us * 1_000;
        }
        if let Some(us) = self.get_parsed::<u64>("serialization_us")? {
            sim.ser_base = us * 1_000;
        }
        if let Some(p) = self.get_parsed::<f64>("loss_prob")? {
            sim.loss_prob = p;
        }
        if let Some(b) = self.get_parsed::<bool>("loopback_fastpath")? {
            sim.loopback_fastpath = b;
        }
        if let Some(s) = self.get_parsed::<u64>("seed")? {
            sim.seed = s;
        }
        Ok(())
    }
}
