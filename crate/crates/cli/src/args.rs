//! Hand-rolled flag parsing.
//!
//! Flags are `--name value` pairs except for a fixed set of boolean
//! switches. Values from `--config <file>` are merged first, command line
//! flags override them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use tracereg::error::{Error, Result};

use crate::config::RunConfig;

/// Switches that take no value.
const BOOLEAN_FLAGS: &[&str] = &["full-scale", "quiet", "fit", "no-accel", "no-restart", "help"];

/// Flags that belong to the `[global]` config section.
const GLOBAL_KEYS: &[&str] = &["seed", "out", "threads", "full-scale", "quiet"];

#[derive(Debug, Clone, Default)]
pub struct Params {
    pub command: String,
    values: BTreeMap<String, String>,
    flags: BTreeSet<String>,
}

impl Params {
    /// Parse raw arguments for `command`, folding in `--config` if present.
    pub fn parse(command: &str, args: &[String]) -> Result<Params> {
        let mut values = BTreeMap::new();
        let mut flags = BTreeSet::new();
        let mut iter = args.iter().peekable();
        while let Some(arg) = iter.next() {
            let name = arg.strip_prefix("--").ok_or_else(|| {
                Error::InvalidInput(format!("expected a --flag, got `{arg}`"))
            })?;
            if BOOLEAN_FLAGS.contains(&name) {
                flags.insert(name.to_string());
            } else {
                let value = iter.next().ok_or_else(|| {
                    Error::InvalidInput(format!("flag --{name} expects a value"))
                })?;
                values.insert(name.to_string(), value.clone());
            }
        }
        let mut params = Params {
            command: command.to_string(),
            values: BTreeMap::new(),
            flags: BTreeSet::new(),
        };
        if let Some(path) = values.get("config") {
            let cfg = RunConfig::load(&PathBuf::from(path), command)?;
            for flag in cfg.global_flags.iter().chain(cfg.section_flags.iter()) {
                params.flags.insert(flag.clone());
            }
            for (k, v) in cfg.global.iter().chain(cfg.section.iter()) {
                params.values.insert(k.clone(), v.clone());
            }
        }
        params.values.extend(values);
        params.flags.extend(flags);
        Ok(params)
    }

    /// The resolved configuration, for manifests.
    pub fn to_config(&self) -> RunConfig {
        let mut cfg = RunConfig {
            command: self.command.clone(),
            ..RunConfig::default()
        };
        for (k, v) in &self.values {
            if k == "config" {
                continue;
            }
            if GLOBAL_KEYS.contains(&k.as_str()) {
                cfg.global.insert(k.clone(), v.clone());
            } else {
                cfg.section.insert(k.clone(), v.clone());
            }
        }
        for f in &self.flags {
            if GLOBAL_KEYS.contains(&f.as_str()) {
                cfg.global_flags.insert(f.clone());
            } else {
                cfg.section_flags.insert(f.clone());
            }
        }
        cfg
    }

    /// Reject any key outside the command's vocabulary (global flags are
    /// always allowed).
    pub fn validate_keys(&self, allowed: &[&str]) -> Result<()> {
        let known = |k: &str| {
            k == "config" || k == "help" || GLOBAL_KEYS.contains(&k) || allowed.contains(&k)
        };
        for key in self.values.keys().chain(self.flags.iter()) {
            if !known(key) {
                return Err(Error::InvalidInput(format!(
                    "unknown flag --{key} for `{}`",
                    self.command
                )));
            }
        }
        Ok(())
    }

    pub fn flag(&self, name: &str) -> bool {
        self.flags.contains(name)
    }

    pub fn opt_str(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    pub fn str_or(&self, name: &str, default: &str) -> String {
        self.opt_str(name).unwrap_or(default).to_string()
    }

    pub fn require_str(&self, name: &str) -> Result<&str> {
        self.opt_str(name)
            .ok_or_else(|| Error::InvalidInput(format!("missing required flag --{name}")))
    }

    fn parse_value<T: std::str::FromStr>(&self, name: &str, raw: &str) -> Result<T> {
        raw.parse::<T>().map_err(|_| {
            Error::InvalidInput(format!("flag --{name}: cannot parse `{raw}`"))
        })
    }

    pub fn opt_u64(&self, name: &str) -> Result<Option<u64>> {
        self.opt_str(name)
            .map(|raw| self.parse_value(name, raw))
            .transpose()
    }

    pub fn u64_or(&self, name: &str, default: u64) -> Result<u64> {
        Ok(self.opt_u64(name)?.unwrap_or(default))
    }

    pub fn opt_usize(&self, name: &str) -> Result<Option<usize>> {
        self.opt_str(name)
            .map(|raw| self.parse_value(name, raw))
            .transpose()
    }

    pub fn usize_or(&self, name: &str, default: usize) -> Result<usize> {
        Ok(self.opt_usize(name)?.unwrap_or(default))
    }

    pub fn require_usize(&self, name: &str) -> Result<usize> {
        self.opt_usize(name)?
            .ok_or_else(|| Error::InvalidInput(format!("missing required flag --{name}")))
    }

    pub fn opt_f64(&self, name: &str) -> Result<Option<f64>> {
        self.opt_str(name)
            .map(|raw| self.parse_value(name, raw))
            .transpose()
    }

    pub fn f64_or(&self, name: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(name)?.unwrap_or(default))
    }

    pub fn list_f64(&self, name: &str) -> Result<Option<Vec<f64>>> {
        self.opt_str(name)
            .map(|raw| {
                raw.split(',')
                    .map(|s| self.parse_value::<f64>(name, s.trim()))
                    .collect()
            })
            .transpose()
    }

    pub fn list_f64_or(&self, name: &str, default: &[f64]) -> Result<Vec<f64>> {
        Ok(self.list_f64(name)?.unwrap_or_else(|| default.to_vec()))
    }

    pub fn list_usize(&self, name: &str) -> Result<Option<Vec<usize>>> {
        self.opt_str(name)
            .map(|raw| {
                raw.split(',')
                    .map(|s| self.parse_value::<usize>(name, s.trim()))
                    .collect()
            })
            .transpose()
    }

    pub fn list_usize_or(&self, name: &str, default: &[usize]) -> Result<Vec<usize>> {
        Ok(self.list_usize(name)?.unwrap_or_else(|| default.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn test_parse_values_and_flags() {
        let p = Params::parse(
            "compare",
            &args(&["--m", "20", "--quiet", "--sigma", "0.1"]),
        )
        .unwrap();
        assert_eq!(p.require_usize("m").unwrap(), 20);
        assert!(p.flag("quiet"));
        assert_eq!(p.f64_or("sigma", 1.0).unwrap(), 0.1);
        assert_eq!(p.usize_or("reps", 25).unwrap(), 25);
    }

    #[test]
    fn test_parse_rejects_bad_input() {
        assert!(Params::parse("x", &args(&["m", "20"])).is_err());
        assert!(Params::parse("x", &args(&["--m"])).is_err());
        let p = Params::parse("x", &args(&["--m", "abc"])).unwrap();
        assert!(p.require_usize("m").is_err());
        let p = Params::parse("x", &args(&[])).unwrap();
        let err = p.require_str("ensemble").unwrap_err().to_string();
        assert!(err.contains("--ensemble"), "{err}");
    }

    #[test]
    fn test_lists() {
        let p = Params::parse("x", &args(&["--grid", "0.16, 0.5,1.1"])).unwrap();
        assert_eq!(p.list_f64("grid").unwrap().unwrap(), vec![0.16, 0.5, 1.1]);
        let p = Params::parse("x", &args(&[])).unwrap();
        assert_eq!(p.list_usize_or("r", &[1, 3]).unwrap(), vec![1, 3]);
    }
}
