//! Run configuration files and flag/config merging.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const RUN_SCHEMA: &str = "volcast_run_v1";

/// On-disk run document. `meta.json` files have this shape, so any persisted
/// run can be replayed with `--config <run>/meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub command: String,
    #[serde(default)]
    pub args: Value,
    /// Informational; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.schema != RUN_SCHEMA {
            bail!("config schema `{}` is not supported, expected `{RUN_SCHEMA}`", cfg.schema);
        }
        Ok(cfg)
    }

    pub fn new(command: &str, args: &impl Serialize, provenance: Value) -> anyhow::Result<Self> {
        Ok(RunConfig {
            schema: RUN_SCHEMA.into(),
            command: command.into(),
            args: serde_json::to_value(args)?,
            provenance: Some(provenance),
        })
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

/// Recursively copies every non-null value of `over` onto `base`.
fn overlay(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) if !o.is_null() => *b = o,
        _ => {}
    }
}

/// Flags win over the config document; unknown config keys are rejected by
/// the target type.
pub fn resolve<T: Serialize + DeserializeOwned>(command: &str, flags: &T, config: Option<&RunConfig>) -> anyhow::Result<T> {
    let mut merged = Value::Object(Map::new());
    if let Some(cfg) = config {
        if cfg.command != command {
            bail!("config is for `{}`, not `{command}`", cfg.command);
        }
        if !cfg.args.is_null() {
            merged = cfg.args.clone();
        }
    }
    overlay(&mut merged, serde_json::to_value(flags)?);
    serde_json::from_value(merged).context("invalid configuration")
}

pub fn require<T>(value: Option<T>, name: &str) -> anyhow::Result<T> {
    value.with_context(|| format!("missing required option --{}", name.replace('_', "-")))
}

pub fn existing(path: Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    let p = require(path, name)?;
    if !p.exists() {
        bail!("{} does not exist: {}", name.replace('_', "-"), p.display());
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct A {
        x: Option<u32>,
        y: Option<String>,
        inner: B,
    }

    #[derive(Debug, Serialize, Deserialize, PartialEq, Default)]
    #[serde(deny_unknown_fields)]
    struct B {
        z: Option<f64>,
        w: Option<f64>,
    }

    fn cfg(args: Value) -> RunConfig {
        RunConfig {
            schema: RUN_SCHEMA.into(),
            command: "c".into(),
            args,
            provenance: None,
        }
    }

    #[test]
    fn flags_override_config() {
        let flags = A {
            x: Some(3),
            y: None,
            inner: B { z: Some(1.0), w: None },
        };
        let c = cfg(json!({"x": 1, "y": "kept", "inner": {"w": 2.0, "z": 5.0}}));
        let got = resolve("c", &flags, Some(&c)).unwrap();
        assert_eq!(
            got,
            A {
                x: Some(3),
                y: Some("kept".into()),
                inner: B { z: Some(1.0), w: Some(2.0) }
            }
        );
    }

    #[test]
    fn unknown_keys_and_wrong_command_rejected() {
        let flags = A {
            x: None,
            y: None,
            inner: B::default(),
        };
        assert!(resolve("c", &flags, Some(&cfg(json!({"bogus": 1})))).is_err());
        assert!(resolve("c", &flags, Some(&cfg(json!({"inner": {"bogus": 1}})))).is_err());
        assert!(resolve("other", &flags, Some(&cfg(json!({})))).is_err());
    }
}
