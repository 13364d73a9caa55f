//! One `key = value` file shared by all commands. Keys are long flag names;
//! a flag given on the command line always wins over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Result};

pub const KNOWN_KEYS: &[&str] = &[
    // paths
    "data",
    "labels",
    "out",
    "model",
    "trace",
    "detector",
    "predictor",
    "scenario",
    "validation",
    // synthesis
    "days",
    "events",
    "archetype",
    // labeling
    "kernel-half-width",
    "kernel-passes",
    // training
    "n-hid",
    "eras",
    "epochs-per-era",
    "epochs",
    "batch-size",
    "seed",
    "lr",
    "decay",
    "all-days",
    "sweep",
    "shift",
    "min-run",
    "target-source",
    "horizon",
    // road
    "sensors",
    "day",
    "at",
    "rho-max-light",
    "rho-max-heavy",
    "v-light",
    "v-heavy",
    "dx",
    "dt",
    "cfl",
    "warm-up",
    "approach",
    "regime",
    "snapshot-every",
    "inflow",
    "errors",
    "start-minutes",
    "resolution",
    "forecast",
    "reference",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| invalid(format!("config line {}: expected key = value", i + 1)))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(invalid(format!("config line {}: unknown key {key:?}", i + 1)));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(invalid(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The flag if given, else the file entry, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| invalid(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.pick(flag, key)?.ok_or_else(|| invalid(format!("--{key} is required (flag or config key)")))
    }

    /// Boolean switch: set by the flag or by a truthy config entry.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.values.get(key).map(String::as_str) {
            None | Some("false") | Some("0") => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some(other) => Err(invalid(format!("config key {key}: expected true or false, found {other:?}"))),
        }
    }
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|s| s.trim().parse().map_err(|_| invalid(format!("{what}: cannot parse {s:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_entries() {
        let cfg = Config::parse("# preset\nn-hid = 30\nseed=4 # trailing\n").unwrap();
        assert_eq!(cfg.pick_or(None, "n-hid", 1usize).unwrap(), 30);
        assert_eq!(cfg.pick_or(Some(12usize), "n-hid", 1).unwrap(), 12);
        assert_eq!(cfg.pick_or(None, "eras", 10usize).unwrap(), 10);
        assert_eq!(cfg.pick::<u64>(None, "seed").unwrap(), Some(4));
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(Config::parse("n-hid 30").is_err());
        assert!(Config::parse("colour = red").is_err());
        assert!(Config::parse("seed = 1\nseed = 2").is_err());
        let cfg = Config::parse("n-hid = lots").unwrap();
        assert!(cfg.pick::<usize>(None, "n-hid").is_err());
    }

    #[test]
    fn switches_and_lists() {
        let cfg = Config::parse("all-days = true").unwrap();
        assert!(cfg.switch(false, "all-days").unwrap());
        assert!(!Config::default().switch(false, "all-days").unwrap());
        assert_eq!(parse_list::<usize>("15, 30,60", "sweep").unwrap(), vec![15, 30, 60]);
        assert!(parse_list::<usize>("15,x", "sweep").is_err());
    }
}
