//! Flat `key = value` scenario files.
//!
//! Keys are the long command-line flag names without the leading dashes
//! (`phones = 500`, `cost-connect = 0.6`). Blank lines and lines starting
//! with `#` are ignored. Command-line flags override file values.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Result, SimError};

pub const KNOWN_KEYS: &[&str] = &[
    "protocol",
    "phones",
    "hours",
    "range",
    "speed",
    "width",
    "height",
    "msg-period-min",
    "msgs-per-period",
    "seed",
    "seeds",
    "theta",
    "cost-connect",
    "cost-beacon",
    "cost-send",
    "cost-receive",
    "cost-relay",
    "cost-idle",
    "battery-mean",
    "battery-sd",
    "dump-edges-every",
    "jobs",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    values: BTreeMap<String, String>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimError::InvalidConfig(format!("scenario line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(SimError::InvalidConfig(format!(
                    "scenario line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Scenario { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| SimError::InvalidConfig(format!("scenario key `{key}`: cannot parse `{v}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_comments() {
        let s = Scenario::parse("# demo\nphones = 300\n\ncost-connect=0.75\nprotocol = sos\n").unwrap();
        assert_eq!(s.get::<usize>("phones").unwrap(), Some(300));
        assert_eq!(s.get::<f64>("cost-connect").unwrap(), Some(0.75));
        assert_eq!(s.get::<String>("protocol").unwrap().as_deref(), Some("sos"));
        assert_eq!(s.get::<u64>("seed").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(Scenario::parse("colour = red").is_err());
        assert!(Scenario::parse("phones 300").is_err());
        let s = Scenario::parse("phones = many").unwrap();
        assert!(s.get::<usize>("phones").is_err());
    }
}
