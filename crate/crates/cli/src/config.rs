//! Run configuration: defaults, then a flat dotted-key JSON file, then flags.

use std::path::{Path, PathBuf};

use mat_core::data::{CsvOptions, Imputation};
use mat_core::train::TrainConfig;
use mat_core::{MatError, ModelConfig, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "MAT_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationMode {
    #[default]
    FillForward,
    Strict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Label written into metric rows; defaults to the file stem.
    pub name: Option<String>,
    pub split: [f64; 3],
    pub time_column: Option<String>,
    pub imputation: ImputationMode,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            name: None,
            split: [0.7, 0.1, 0.2],
            time_column: None,
            imputation: ImputationMode::FillForward,
        }
    }
}

impl DataConfig {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            time_column: self.time_column.clone(),
            imputation: match self.imputation {
                ImputationMode::FillForward => Imputation::FillForward,
                ImputationMode::Strict => Imputation::Strict,
            },
            ..CsvOptions::default()
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .as_deref()
                .and_then(Path::file_stem)
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            out: PathBuf::from("runs/latest"),
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn unflatten(flat: &Map<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(p) = parts.next() {
            if parts.peek().is_none() {
                node.insert(p.to_string(), v.clone());
            } else {
                node = node
                    .entry(p.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("dotted keys nest objects");
            }
        }
    }
    Value::Object(root)
}

/// Flat `dotted.key → value` view of a configuration.
pub fn to_flat(cfg: &RunConfig) -> Map<String, Value> {
    let mut out = Map::new();
    flatten("", &serde_json::to_value(cfg).expect("config serialises"), &mut out);
    out
}

/// Layers flat overrides onto `base`; every key must already exist.
pub fn apply_overrides(base: &RunConfig, overrides: &Map<String, Value>, source: &str) -> Result<RunConfig> {
    let mut flat = to_flat(base);
    for (k, v) in overrides {
        if !flat.contains_key(k) {
            return Err(MatError::Config(format!("unknown configuration key {k:?} in {source}")));
        }
        flat.insert(k.clone(), v.clone());
    }
    serde_json::from_value(unflatten(&flat)).map_err(|e| MatError::Config(format!("{source}: {e}")))
}

pub fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| MatError::Config(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| MatError::Config(format!("{}: {e}", path.display())))?;
    match v {
        Value::Object(m) => {
            let mut flat = Map::new();
            flatten("", &Value::Object(m), &mut flat);
            Ok(flat)
        }
        _ => Err(MatError::Config(format!("{}: top level must be an object", path.display()))),
    }
}

/// Defaults ← config file ← flags, with `MAT_SEED` filling in when neither
/// the file nor the flags name a seed.
pub fn resolve(file: Option<&Path>, flags: &Map<String, Value>, env_seed: Option<&str>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let file_keys = match file {
        Some(p) => read_config_file(p)?,
        None => Map::new(),
    };
    let seeded = |m: &Map<String, Value>| m.contains_key("model.seed") || m.contains_key("train.seed");
    if !seeded(&file_keys) && !seeded(flags) {
        if let Some(s) = env_seed {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| MatError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
            cfg.model.seed = seed;
            cfg.train.seed = seed;
        }
    }
    cfg = apply_overrides(&cfg, &file_keys, "config file")?;
    cfg = apply_overrides(&cfg, flags, "command line")?;
    cfg.model.validate()?;
    cfg.train.validate()?;
    Ok(cfg)
}

pub fn write_echo(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let flat = to_flat(cfg);
    let text = serde_json::to_string_pretty(&Value::Object(flat)).expect("config serialises") + "\n";
    let path = dir.join("config.json");
    std::fs::write(&path, text).map_err(|e| MatError::Io { path, source: e })
}
