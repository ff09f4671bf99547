//! JSON run configuration: file loading, dotted-key `--set` overrides, and
//! the dataset reference that every command resolves through.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{
    generate_synthetic, load_fer2013_csv, load_image_directory, LabeledDataset, SynthSpec, Usage,
};
use crate::error::{Error, Result};
use crate::eval::CbirConfig;
use crate::train::RunConfig;

/// Where samples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetRef {
    /// Procedurally generated glyph classes; fully determined by the spec.
    Synthetic { spec: SynthSpec },
    /// A FER2013-format CSV restricted to one usage split.
    Fer2013Csv { path: PathBuf, usage: Usage },
    /// A directory of per-class subdirectories of pixmap files.
    Directory { path: PathBuf },
}

impl Default for DatasetRef {
    fn default() -> Self {
        DatasetRef::Synthetic {
            spec: SynthSpec::default(),
        }
    }
}

impl DatasetRef {
    pub fn load(&self) -> Result<LabeledDataset> {
        match self {
            DatasetRef::Synthetic { spec } => Ok(generate_synthetic(spec)),
            DatasetRef::Fer2013Csv { path, usage } => load_fer2013_csv(path, *usage),
            DatasetRef::Directory { path } => load_image_directory(path),
        }
    }
}

/// Top-level configuration shared by the train/eval/retrieval/k-fold
/// commands. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub dataset: DatasetRef,
    pub run: RunConfig,
    pub cbir: CbirConfig,
}

/// Read a JSON config file, or start from `{}` when no file is given.
pub fn load_config_value(path: Option<&Path>) -> Result<Value> {
    match path {
        None => Ok(Value::Object(Default::default())),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: invalid JSON: {e}", p.display())))
        }
    }
}

/// Apply one `key.path=value` override. The value is parsed as JSON; bare
/// words that are not valid JSON are treated as strings.
pub fn apply_override(root: &mut Value, setting: &str) -> Result<()> {
    let (key, raw) = setting.split_once('=').ok_or_else(|| {
        Error::Config(format!("override `{setting}` must look like key.path=value"))
    })?;
    if key.is_empty() {
        return Err(Error::Config(format!("override `{setting}` has an empty key")));
    }
    let value: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));

    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(Error::Config(format!(
                "override `{key}`: `{part}` is not an object"
            )));
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(map) => {
            map.insert(parts[parts.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(Error::Config(format!(
            "override `{key}`: parent is not an object"
        ))),
    }
}

pub fn apply_overrides(root: &mut Value, settings: &[String]) -> Result<()> {
    for s in settings {
        apply_override(root, s)?;
    }
    Ok(())
}

/// Deserialize a config type out of the merged JSON value, mapping serde
/// errors (including unknown keys) to config errors.
pub fn from_value<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

/// Load file + overrides into `T` in one step.
pub fn resolve<T: DeserializeOwned>(path: Option<&Path>, settings: &[String]) -> Result<T> {
    let mut value = load_config_value(path)?;
    apply_overrides(&mut value, settings)?;
    from_value(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_value_yields_defaults() {
        let cfg: AppConfig = from_value(Value::Object(Default::default())).unwrap();
        assert!(matches!(cfg.dataset, DatasetRef::Synthetic { .. }));
        assert_eq!(cfg.run.seed, 0);
    }

    #[test]
    fn dotted_override_reaches_nested_field() {
        let mut v = Value::Object(Default::default());
        apply_override(&mut v, "run.seed=42").unwrap();
        apply_override(&mut v, "run.multires.p_max=0.5").unwrap();
        let cfg: AppConfig = from_value(v).unwrap();
        assert_eq!(cfg.run.seed, 42);
        assert_eq!(cfg.run.multires.p_max, 0.5);
    }

    #[test]
    fn string_values_pass_through() {
        let mut v = Value::Object(Default::default());
        apply_override(&mut v, "dataset.kind=directory").unwrap();
        apply_override(&mut v, "dataset.path=/tmp/does-not-matter").unwrap();
        let cfg: AppConfig = from_value(v).unwrap();
        assert!(matches!(cfg.dataset, DatasetRef::Directory { .. }));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut v = Value::Object(Default::default());
        apply_override(&mut v, "run.learning_rate=0.1").unwrap();
        let err = from_value::<AppConfig>(v).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn malformed_override_errors() {
        let mut v = Value::Object(Default::default());
        assert!(apply_override(&mut v, "no-equals-sign").is_err());
        assert!(apply_override(&mut v, "=5").is_err());
    }

    #[test]
    fn override_through_scalar_errors() {
        let mut v = Value::Object(Default::default());
        apply_override(&mut v, "run.seed=3").unwrap();
        assert!(apply_override(&mut v, "run.seed.deeper=1").is_err());
    }

    #[test]
    fn later_override_wins() {
        let mut v = Value::Object(Default::default());
        apply_overrides(
            &mut v,
            &["run.seed=1".to_string(), "run.seed=2".to_string()],
        )
        .unwrap();
        let cfg: AppConfig = from_value(v).unwrap();
        assert_eq!(cfg.run.seed, 2);
    }

    #[test]
    fn file_and_overrides_merge() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"run": {"seed": 9, "batch_size": 4}}"#).unwrap();
        let cfg: AppConfig =
            resolve(Some(&p), &["run.seed=11".to_string()]).unwrap();
        assert_eq!(cfg.run.seed, 11);
        assert_eq!(cfg.run.batch_size, 4);
    }

    #[test]
    fn invalid_json_file_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, "{not json").unwrap();
        assert!(load_config_value(Some(&p)).is_err());
    }
}
