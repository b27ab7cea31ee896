//! Flat JSON config files. Keys match flag names; case, `_` and `-` are
//! interchangeable, so `gmres_tol`, `gmres-tol` and `GMRES_TOL` are the same key.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;

const ALIASES: &[(&str, &str)] = &[("horizon", "t"), ("l", "dimer-length")];

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, Value>,
}

fn normalize(key: &str) -> String {
    let k = key.trim().to_ascii_lowercase().replace('_', "-");
    ALIASES
        .iter()
        .find(|(from, _)| *from == k)
        .map_or(k, |(_, to)| to.to_string())
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let Value::Object(map) = serde_json::from_str(text)? else {
            bail!("config must be a flat JSON object");
        };
        let mut values = BTreeMap::new();
        for (k, v) in map {
            if v.is_object() {
                bail!("config key `{k}` holds a nested object");
            }
            values.insert(normalize(&k), v);
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(&normalize(key))
    }

    pub fn string(&self, key: &str) -> Option<String> {
        match self.get(key)? {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            v => Some(v.to_string()),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(Value::String(s)) => Ok(Some(
                s.parse().with_context(|| format!("config key `{key}`"))?,
            )),
            Some(v) => bail!("config key `{key}` must be a number, got {v}"),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => match n.as_u64() {
                Some(v) => Ok(Some(v as usize)),
                None => bail!("config key `{key}` must be a non-negative integer, got {n}"),
            },
            Some(Value::String(s)) => Ok(Some(
                s.parse().with_context(|| format!("config key `{key}`"))?,
            )),
            Some(v) => bail!("config key `{key}` must be an integer, got {v}"),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(v) => bail!("config key `{key}` must be a boolean, got {v}"),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_f64()
                        .with_context(|| format!("config key `{key}` holds {v}"))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::Number(n)) => Ok(n.as_f64().map(|v| vec![v])),
            Some(v) => bail!("config key `{key}` must be a list of numbers, got {v}"),
        }
    }
}
