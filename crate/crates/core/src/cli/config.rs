use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datasets::{load_dataset, make_toy_dataset, GzslDataset};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::training::{config_hash, TrainConfig};

/// JSON schema every run config is checked against before deserialization.
pub const RUN_CONFIG_SCHEMA: &str = include_str!("../../schema/run_config.schema.json");

/// Parameters of the synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySpec {
    pub seed: u64,
    pub c_seen: usize,
    pub c_unseen: usize,
    pub dx: usize,
    pub a_dim: usize,
    pub n_per_class: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            seed: 0,
            c_seen: 8,
            c_unseen: 4,
            dx: 16,
            a_dim: 8,
            n_per_class: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Directory in the portable dataset layout.
    Path(PathBuf),
    Toy(ToySpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<GzslDataset> {
        match self {
            DatasetSource::Path(p) => load_dataset(p),
            DatasetSource::Toy(t) => {
                make_toy_dataset(t.seed, t.c_seen, t.c_unseen, t.dx, t.a_dim, t.n_per_class)
            }
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    /// Per-dimension min-max scaling fitted on the training rows.
    #[serde(default)]
    pub minmax_scale: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn toy(spec: ToySpec) -> Self {
        RunConfig {
            dataset: DatasetSource::Toy(spec),
            minmax_scale: false,
            output_dir: default_output_dir(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.eval.validate()
    }

    pub fn load_dataset(&self) -> Result<GzslDataset> {
        let ds = self.dataset.load()?;
        Ok(if self.minmax_scale {
            ds.minmax_scaled()
        } else {
            ds
        })
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// Runs the schema check on the serialized form, then the value checks.
    pub fn from_value(value: Value) -> Result<Self> {
        check_schema(&value)?;
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn schema() -> Value {
    serde_json::from_str(RUN_CONFIG_SCHEMA).expect("bundled schema is valid JSON")
}

/// Every schema violation in `value`, one per line, prefixed by its JSON pointer.
pub fn check_schema(value: &Value) -> Result<()> {
    let validator = jsonschema::validator_for(&schema()).expect("bundled schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| {
            let at = e.instance_path().to_string();
            format!("{}: {e}", if at.is_empty() { "/" } else { &at })
        })
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "config does not match schema:\n  {}",
            errors.join("\n  ")
        )))
    }
}

/// Parses `path.to.key=value`. The value is read as JSON when it parses and
/// as a plain string otherwise.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::Config(format!(
            "override key `{key}` has an empty segment"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

/// Sets `path` inside `root`, creating intermediate objects.
pub fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut node = root;
    for (i, key) in path.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not an object", path[..i].join("."))))?;
        if i + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        node = obj
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Reads a config file, resolves a relative dataset path against the file's
/// directory and applies `--set` overrides in order.
pub fn read_config_value(path: &Path, overrides: &[String]) -> Result<Value> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: malformed JSON: {e}", path.display())))?;
    if let Some(p) = value.pointer_mut("/dataset/path") {
        if let Some(s) = p.as_str() {
            let rel = PathBuf::from(s);
            if rel.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                *p = Value::String(base.join(rel).to_string_lossy().into_owned());
            }
        }
    }
    for spec in overrides {
        let (keys, v) = parse_override(spec)?;
        apply_override(&mut value, &keys, v)?;
    }
    Ok(value)
}
