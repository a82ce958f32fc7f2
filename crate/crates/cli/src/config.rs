//! Flat `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the GP
//! setting names (`population_size`, `seed`, ...) plus the run settings
//! listed in [`RUN_KEYS`]. Later occurrences of a key override earlier ones.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use symreg_core::GPConfig;

pub const RUN_KEYS: &[&str] = &[
    "endpoint",
    "cache",
    "checkpoint",
    "checkpoint_every",
    "output",
    "channel",
    "samples",
    "threads",
    "constopt",
    "constopt_iterations",
    "config_timeout",
    "experiment_timeout",
    "trajectories",
    "parallel",
];

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected key=value, got `{line}`", i + 1));
            };
            let key = key.trim();
            if !GPConfig::KEYS.contains(&key) && !RUN_KEYS.contains(&key) {
                return Err(format!("line {}: unknown key `{key}`", i + 1));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parsed value of `key`, if present.
    pub fn value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| format!("config file: bad value `{v}` for {key}")))
            .transpose()
    }

    /// GP settings in key order.
    pub fn gp_settings(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .filter(|(k, _)| GPConfig::KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let c = ConfigFile::parse("# run\npopulation_size = 80\n\nseed=3\nendpoint=localhost:5555\nseed=4\n").unwrap();
        assert_eq!(
            c.gp_settings(),
            vec![
                ("population_size".to_string(), "80".to_string()),
                ("seed".to_string(), "4".to_string())
            ]
        );
        assert_eq!(c.get("endpoint"), Some("localhost:5555"));
        assert_eq!(c.value::<usize>("population_size").unwrap(), Some(80));
        assert!(c.value::<usize>("endpoint").is_err());

        assert!(ConfigFile::parse("nonsense").is_err());
        assert!(ConfigFile::parse("colour=blue").is_err());
    }
}
