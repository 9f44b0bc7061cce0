//! Run configuration files.
//!
//! ```text
//! # shared settings
//! schema = schema.txt
//! annotations = gold.csv
//! k = 5
//!
//! [model ViT-B/32]
//! predictions = runs/vit_b32.csv
//! k = 3
//! ```
//!
//! Keys before the first section are global. Each `[model NAME]` section
//! holds per-model overrides. Command-line flags win over both.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub global: BTreeMap<String, String>,
    /// Sections in file order.
    pub models: Vec<(String, BTreeMap<String, String>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

const KNOWN_KEYS: &[&str] = &[
    "schema",
    "embeddings",
    "annotations",
    "predictions",
    "queries",
    "split_train",
    "split_test",
    "trips",
    "k",
    "index",
    "max_degree",
    "beam",
    "out",
    "seed",
    "aggregation",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut section: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| ConfigError {
                line: line_no,
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header".into()))?;
                let name = inner
                    .trim()
                    .strip_prefix("model")
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| err(format!("expected `[model NAME]`, got `[{inner}]`")))?;
                if cfg.models.iter().any(|(n, _)| n == name) {
                    return Err(err(format!("model `{name}` defined twice")));
                }
                cfg.models.push((name.to_string(), BTreeMap::new()));
                section = Some(cfg.models.len() - 1);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key `{key}`")));
            }
            let table = match section {
                Some(s) => &mut cfg.models[s].1,
                None => &mut cfg.global,
            };
            if table
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.global.get(key).map(String::as_str)
    }

    /// Model-section value, falling back to the global one.
    pub fn model_get(&self, model: &str, key: &str) -> Option<&str> {
        self.models
            .iter()
            .find(|(n, _)| n == model)
            .and_then(|(_, t)| t.get(key))
            .map(String::as_str)
            .or_else(|| self.get(key))
    }
}
