//! Layered run configuration: a JSON file, then command-line flags on top.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// JSON object assembled from the config file and the flags.
#[derive(Debug, Default)]
pub struct Layers {
    root: Map<String, Value>,
}

impl Layers {
    pub fn from_file(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        match read_json(path)? {
            Value::Object(root) => Ok(Self { root }),
            _ => Err(CliError::Usage(format!("{}: config must be a JSON object", path.display()))),
        }
    }

    /// Sets the dotted `key` when `v` is present.
    pub fn put<T: Serialize>(&mut self, key: &str, v: Option<T>) {
        if let Some(v) = v {
            let v = serde_json::to_value(v).expect("flag values serialize");
            self.set(key, v);
        }
    }

    /// Sets `key` when `v` is non-empty.
    pub fn put_list<T: Serialize>(&mut self, key: &str, v: &[T]) {
        if !v.is_empty() {
            self.put(key, Some(v));
        }
    }

    pub fn set(&mut self, key: &str, v: Value) {
        let mut parts = key.split('.').peekable();
        let mut node = &mut self.root;
        while let Some(p) = parts.next() {
            if parts.peek().is_none() {
                node.insert(p.to_string(), v);
                return;
            }
            let child = node.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
            if !child.is_object() {
                *child = Value::Object(Map::new());
            }
            node = child.as_object_mut().expect("just made an object");
        }
    }

    /// Removes and returns a top-level key.
    pub fn take(&mut self, key: &str) -> Option<Value> {
        self.root.remove(key)
    }

    /// Replaces a string value at `key` by the JSON document it names, so a
    /// config can point at a separate manifold file.
    pub fn inline_file(&mut self, key: &str, base: Option<&Path>) -> Result<(), CliError> {
        if let Some(Value::String(p)) = self.root.get(key) {
            let mut path = PathBuf::from(p);
            if path.is_relative() {
                if let Some(dir) = base.and_then(Path::parent) {
                    path = dir.join(path);
                }
            }
            let v = read_json(&path)?;
            self.root.insert(key.to_string(), v);
        }
        Ok(())
    }

    /// Loads a JSON file as the base of `key`; keys already set win.
    pub fn base_from_file(&mut self, key: &str, path: Option<&Path>) -> Result<(), CliError> {
        let Some(path) = path else {
            return Ok(());
        };
        let mut v = read_json(path)?;
        if let (Value::Object(base), Some(Value::Object(cur))) = (&mut v, self.root.get(key)) {
            for (k, val) in cur {
                base.insert(k.clone(), val.clone());
            }
        }
        self.root.insert(key.to_string(), v);
        Ok(())
    }

    pub fn finish<T: DeserializeOwned>(self, what: &str) -> Result<T, CliError> {
        serde_json::from_value(Value::Object(self.root)).map_err(|e| CliError::Usage(format!("invalid {what} configuration: {e}")))
    }
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_nested_keys() {
        let mut l = Layers::default();
        l.set("manifold.kind", Value::from("circle"));
        l.set("manifold.D", Value::from(3));
        l.put("manifold.D", Some(8));
        l.put::<f64>("epsilon", None);
        l.put_list::<f64>("sigmas", &[]);
        let v = Value::Object(l.root);
        assert_eq!(v["manifold"]["D"], Value::from(8));
        assert_eq!(v["manifold"]["kind"], Value::from("circle"));
        assert!(v.get("epsilon").is_none() && v.get("sigmas").is_none());
    }
}
