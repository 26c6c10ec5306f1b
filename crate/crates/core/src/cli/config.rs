//! Resolved run configuration: defaults, then a TOML file, then flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::data::{IngestConfig, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_KS;
use crate::stratify::{GainConfig, THRESHOLD_GRID};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Threshold used to tag evaluation strata; the training threshold when unset.
    pub eval_threshold: Option<u32>,
    pub grid: Vec<u32>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            eval_threshold: None,
            grid: THRESHOLD_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ingest: IngestConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub gain: GainConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Flag,
}

/// Builds a [`RunConfig`] and remembers where each leaf value came from.
#[derive(Clone, Debug)]
pub struct ConfigBuilder {
    table: Table,
    provenance: BTreeMap<String, Source>,
}

fn leaves(prefix: &str, t: &Table, out: &mut Vec<String>) {
    for (k, v) in t {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(inner) => leaves(&key, inner, out),
            _ => out.push(key),
        }
    }
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(a)), Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

impl ConfigBuilder {
    pub fn new() -> Result<Self> {
        let table =
            Table::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        let mut keys = Vec::new();
        leaves("", &table, &mut keys);
        let provenance = keys.into_iter().map(|k| (k, Source::Default)).collect();
        Ok(Self { table, provenance })
    }

    pub fn file(mut self, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: Table = text.parse().map_err(|e: toml::de::Error| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut keys = Vec::new();
        leaves("", &parsed, &mut keys);
        merge(&mut self.table, parsed);
        for k in keys {
            self.provenance.insert(k, Source::File);
        }
        // Reject unknown keys and bad types early, naming the file.
        self.resolve()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(self)
    }

    /// Sets `section.key` from a command-line flag.
    pub fn flag(&mut self, section: &str, key: &str, value: impl Into<Value>) {
        let sec = self
            .table
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        if let Value::Table(t) = sec {
            t.insert(key.to_string(), value.into());
        }
        self.provenance
            .insert(format!("{section}.{key}"), Source::Flag);
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        Value::Table(self.table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn provenance(&self) -> &BTreeMap<String, Source> {
        &self.provenance
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flag_beats_file_beats_default() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[train]\nlr = 0.5\nepochs = 3\n").unwrap();
        let mut b = ConfigBuilder::new().unwrap().file(f.path()).unwrap();
        b.flag("train", "epochs", 9i64);
        let cfg = b.resolve().unwrap();
        assert_eq!(cfg.train.lr, 0.5);
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        let p = b.provenance();
        assert_eq!(p["train.lr"], Source::File);
        assert_eq!(p["train.epochs"], Source::Flag);
        assert_eq!(p["train.batch_size"], Source::Default);
    }

    #[test]
    fn unknown_section_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[nonsense]\nx = 1\n").unwrap();
        assert!(matches!(
            ConfigBuilder::new().unwrap().file(f.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn archived_config_round_trips() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
