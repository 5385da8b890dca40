//! Run configuration: a TOML file, then `--set key=value` overrides.

use std::path::{Path, PathBuf};

use dirlearn::networks::ModelConfig;
use dirlearn::training::{Stage1Config, Stage2Config};
use dirlearn::Error;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Drives every random draw: initialisation and both stages.
    pub seed: u64,
    /// Corpus directory written by `synth-data` (or any folder with a manifest).
    pub data: String,
    pub out_dir: String,
    /// Required by stage 2.
    pub stage1_checkpoint: String,
    pub model: ModelConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: "data/toy".into(),
            out_dir: "runs/default".into(),
            stage1_checkpoint: String::new(),
            model: ModelConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
        }
    }
}

pub const RESOLVED_FILE: &str = "resolved.toml";

fn schema() -> Table {
    match Value::try_from(RunConfig::default()).expect("default config serialises") {
        Value::Table(t) => t,
        _ => unreachable!("config is a table"),
    }
}

/// Rejects keys that the configuration does not define.
fn check_keys(given: &Table, known: &Table, prefix: &str) -> Result<(), Error> {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (known.get(k), v) {
            (None, _) => return Err(Error::UnknownKey(path)),
            (Some(Value::Table(kt)), Value::Table(vt)) => check_keys(vt, kt, &path)?,
            _ => {}
        }
    }
    Ok(())
}

/// Parses a `--set` value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), Error> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("`{key}`: `{p}` is not a section"))),
        };
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self, Error> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if let Some(s) = seed {
            table.insert("seed".into(), Value::Integer(s as i64));
        }
        check_keys(&table, &schema(), "")?;
        let mut cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.model.init_seed = cfg.seed;
        cfg.stage1.seed = cfg.seed;
        cfg.stage2.seed = cfg.seed;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out_dir)
    }

    pub fn write_resolved(&self, dir: &Path, file: &str) -> Result<PathBuf, Error> {
        let path = dir.join(file);
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = RunConfig::load(
            None,
            &["stage1.max_epochs=3".into(), "model.encoder.base_width=8".into(), "data=some/dir".into()],
            Some(5),
        )
        .unwrap();
        assert_eq!(cfg.stage1.max_epochs, 3);
        assert_eq!(cfg.model.encoder.base_width, 8);
        assert_eq!(cfg.data, "some/dir");
        assert_eq!((cfg.seed, cfg.stage1.seed, cfg.model.init_seed), (5, 5, 5));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(None, &["stage1.max_epoch=3".into()], None).unwrap_err();
        assert_eq!(err.kind(), "key");
    }

    #[test]
    fn resolved_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::load(None, &["stage2.task=\"classification\"".into()], Some(2)).unwrap();
        let path = cfg.write_resolved(dir.path(), RESOLVED_FILE).unwrap();
        let back = RunConfig::load(Some(&path), &[], None).unwrap();
        assert_eq!(back, cfg);
    }
}
