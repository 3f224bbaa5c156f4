//! Shared constant values.
//!
//! Every tunable constant lives in a flat `key=value` store so that plant
//! physics, controller gains and protocol limits can be overridden from a
//! scenario or config file without touching the modules that use them.
//! An assembly resolves the store once and hands the same instance to every
//! builder, so all modules of one system see identical values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing config key `{0}`")]
    MissingKey(String),
    #[error("config key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("config key `{key}`: {reason}")]
    OutOfRange { key: String, reason: String },
    #[error("line {line}: expected `key=value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("reading config: {0}")]
    Io(String),
}

/// Default values, one entry per known key.
pub const DEFAULTS: &[(&str, &str)] = &[
    // timing
    ("timing.cycle_ms", "100"),
    ("timing.sub_ms", "10"),
    // main controller
    ("fsm.n", "5"),
    // wheel plant
    ("plant.kv", "12.5"),
    ("plant.tau", "0.5"),
    ("plant.r", "0.5"),
    ("plant.max_tension", "24"),
    ("plant.pulses_per_rev", "24"),
    // steering plant
    ("plant.slew", "60"),
    ("plant.steer_limit", "30"),
    // sensors
    ("sensor.current_limit", "5000"),
    ("sensor.ring", "64"),
    // wheel controller
    ("wheel.kp", "0.08"),
    ("wheel.ki", "0.2"),
    ("wheel.output_limit", "24"),
    ("wheel.current_kp", "0.002"),
    ("wheel.current_ki", "0.02"),
    // steering controller
    ("steer.deadband", "0.5"),
    // RC receiver
    ("rc.min_width_us", "900"),
    ("rc.max_width_us", "2100"),
    ("rc.stale_ms", "100"),
    // PC serial link
    ("serial.sync_threshold", "3"),
    ("serial.tx_backlog", "64"),
];

/// Flat key/value settings with typed accessors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    entries: BTreeMap<String, String>,
}

impl Settings {
    /// An empty store; every lookup fails with [`ConfigError::MissingKey`].
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_defaults() -> Self {
        let entries = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Self { entries }
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::empty();
        out.merge_text(text)?;
        Ok(out)
    }

    /// Overlays `key=value` lines from `text` onto this store.
    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (key, value) in parse_lines(text)? {
            self.entries.insert(key, value);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        let mut cfg = Self::with_defaults();
        cfg.merge_text(&text)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let value = self.raw(key).ok_or_else(|| ConfigError::MissingKey(key.to_string()))?;
        value.trim().parse().map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        })
    }

    /// Reads a strictly positive finite float.
    pub fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.get(key)?;
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(ConfigError::OutOfRange {
                key: key.to_string(),
                reason: format!("must be > 0, got {v}"),
            })
        }
    }

    /// Reads a finite float that may be zero or negative.
    pub fn finite(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.get(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError::OutOfRange {
                key: key.to_string(),
                reason: "must be finite".into(),
            })
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Splits `key=value` text into pairs, preserving order and duplicates.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                text: line.to_string(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                text: line.to_string(),
            });
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}
