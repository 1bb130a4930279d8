//! Flat `key = value` documents with `include` support.
//!
//! Used for environment specs, experiment configs and run manifests. Lines
//! starting with `#` are comments. `include = other.conf` splices another
//! document in place (paths resolve relative to the including file); later
//! assignments override earlier ones. Consumers `take` the keys they know and
//! call [`KvDoc::finish`], which rejects anything left over.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Default)]
pub struct KvDoc {
    entries: BTreeMap<String, (String, String)>,
    origin: String,
}

impl KvDoc {
    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let mut doc = KvDoc {
            entries: BTreeMap::new(),
            origin: origin.to_string(),
        };
        doc.absorb(text, origin, None, &mut BTreeSet::new())?;
        Ok(doc)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut doc = KvDoc {
            entries: BTreeMap::new(),
            origin: path.display().to_string(),
        };
        let mut seen = BTreeSet::new();
        doc.absorb_file(path, &mut seen)?;
        Ok(doc)
    }

    fn absorb_file(&mut self, path: &Path, seen: &mut BTreeSet<PathBuf>) -> Result<()> {
        let canonical = path
            .canonicalize()
            .map_err(|e| CoreError::Config(format!("cannot open {}: {e}", path.display())))?;
        if !seen.insert(canonical.clone()) {
            return Err(CoreError::Config(format!(
                "include cycle through {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(&canonical)
            .map_err(|e| CoreError::Config(format!("cannot read {}: {e}", path.display())))?;
        let dir = canonical.parent().map(Path::to_path_buf);
        self.absorb(&text, &path.display().to_string(), dir.as_deref(), seen)?;
        seen.remove(&canonical);
        Ok(())
    }

    fn absorb(
        &mut self,
        text: &str,
        origin: &str,
        dir: Option<&Path>,
        seen: &mut BTreeSet<PathBuf>,
    ) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let location = format!("{origin}:{}", lineno + 1);
            let (key, value) = line.split_once('=').ok_or_else(|| CoreError::Parse {
                location: location.clone(),
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(CoreError::Parse {
                    location,
                    message: "empty key".into(),
                });
            }
            if key == "include" {
                let target = match dir {
                    Some(d) => d.join(value),
                    None => PathBuf::from(value),
                };
                self.absorb_file(&target, seen)?;
                continue;
            }
            self.entries
                .insert(key.to_string(), (value.to_string(), location));
        }
        Ok(())
    }

    pub fn insert(&mut self, key: &str, value: impl Display) {
        self.entries
            .insert(key.to_string(), (value.to_string(), "override".to_string()));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    /// Removes and parses a key, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, location)) => value.parse::<T>().map(Some).map_err(|e| CoreError::Parse {
                location,
                message: format!("bad value `{value}` for `{key}`: {e}"),
            }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.take(key)?.ok_or_else(|| {
            CoreError::Config(format!("missing required key `{key}` in {}", self.origin))
        })
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, location)) => value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|item| {
                    item.parse::<T>().map_err(|e| CoreError::Parse {
                        location: location.clone(),
                        message: format!("bad list item `{item}` for `{key}`: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Keys starting with `prefix`, removed from the document.
    pub fn take_prefixed(&mut self, prefix: &str) -> BTreeMap<String, String> {
        let keys: Vec<String> = self
            .entries
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect();
        keys.into_iter()
            .filter_map(|k| {
                let (v, _) = self.entries.remove(&k)?;
                Some((k[prefix.len()..].to_string(), v))
            })
            .collect()
    }

    /// Errors if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        if let Some((key, (_, location))) = self.entries.into_iter().next() {
            return Err(CoreError::Parse {
                location,
                message: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

/// Renders ordered key-value pairs back into document text.
pub fn render(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}
