//! Flat key-value configuration and run manifests.
//!
//! A config file holds `key = value` lines grouped into `[section]` headers,
//! one section per subcommand plus `[global]`. The same format doubles as
//! the run manifest: every run writes `run.manifest` with a `[provenance]`
//! section (version, command, wall time) followed by the fully resolved
//! configuration, so re-running `tracereg <command> --config run.manifest`
//! reproduces the outputs byte for byte. Parsers ignore `[provenance]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use tracereg::error::{Error, Result};

/// Resolved parameters for one run: string values plus boolean flags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub command: String,
    pub global: BTreeMap<String, String>,
    pub section: BTreeMap<String, String>,
    pub global_flags: BTreeSet<String>,
    pub section_flags: BTreeSet<String>,
}

impl RunConfig {
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[global]");
        for flag in &self.global_flags {
            let _ = writeln!(out, "{flag} = true");
        }
        for (k, v) in &self.global {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "[{}]", self.command);
        for flag in &self.section_flags {
            let _ = writeln!(out, "{flag} = true");
        }
        for (k, v) in &self.section {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Parse the textual form back; `command` selects which section feeds
    /// the subcommand parameters. Unknown sections are kept only if they
    /// match; `[provenance]` is always skipped.
    pub fn parse(text: &str, command: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            command: command.to_string(),
            ..RunConfig::default()
        };
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::InvalidInput(format!("config line {}: unterminated section", lineno + 1))
                })?;
                current = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!(
                    "config line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            match current.as_str() {
                "provenance" => {}
                "global" => {
                    if value == "true" {
                        cfg.global_flags.insert(key);
                    } else {
                        cfg.global.insert(key, value);
                    }
                }
                section if section == command => {
                    if value == "true" {
                        cfg.section_flags.insert(key);
                    } else {
                        cfg.section.insert(key, value);
                    }
                }
                _ => {}
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, command: &str) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, command)
    }
}

/// Render the manifest written next to every run's outputs.
pub fn manifest_text(cfg: &RunConfig, version: &str, wall_time_secs: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[provenance]");
    let _ = writeln!(out, "artifact-version = {version}");
    let _ = writeln!(out, "command = {}", cfg.command);
    let _ = writeln!(out, "wall-time-secs = {wall_time_secs:.3}");
    out.push_str(&cfg.serialize());
    out
}
