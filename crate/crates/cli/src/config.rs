//! Loading a typed config from a file, `--set` overrides and the canonical
//! echo that every output is keyed by.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// A config after overrides, with its canonical text and digest.
pub struct Effective<T> {
    pub config: T,
    pub text: String,
    pub hash: String,
}

/// The file at `path`, or the serialized defaults.
pub fn base_text<T: Serialize>(path: Option<&Path>, default: &T) -> Result<(String, String)> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok((p.display().to_string(), text))
        }
        None => Ok(("defaults".to_string(), toml::to_string(default)?)),
    }
}

/// Parses `text` after applying `sets`. `origin` names the source in
/// error messages.
pub fn resolve<T>((origin, text): (String, String), sets: &[String]) -> Result<Effective<T>>
where
    T: Serialize + DeserializeOwned,
{
    let config: T = if sets.is_empty() {
        toml::from_str(&text).map_err(|e| anyhow!("{origin}: {e}"))?
    } else {
        let mut doc = Value::Table(toml::from_str(&text).map_err(|e| anyhow!("{origin}: {e}"))?);
        for s in sets {
            apply(&mut doc, s).with_context(|| format!("--set {s}"))?;
        }
        let merged = toml::to_string(&doc)?;
        toml::from_str(&merged).map_err(|e| anyhow!("{origin} with overrides: {e}"))?
    };
    let text = toml::to_string(&config)?;
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    Ok(Effective { config, text, hash })
}

/// The value of an override: any TOML value, else a bare string.
fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// `a.b.c=value`; numeric segments index arrays. Missing tables are created
/// and left for the typed parse to accept or reject.
pub fn apply(doc: &mut Value, set: &str) -> Result<()> {
    let (key, raw) = set.split_once('=').ok_or_else(|| anyhow!("expected key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("empty key segment in `{key}`");
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = doc;
    for seg in parents {
        node = step(node, seg)?;
    }
    let slot = match node {
        Value::Table(t) => t.entry(last.to_string()).or_insert(Value::Boolean(false)),
        Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| anyhow!("`{last}` is not an array index"))?;
            let len = a.len();
            a.get_mut(i).ok_or_else(|| anyhow!("index {i} out of range (length {len})"))?
        }
        _ => bail!("`{key}` does not name a table entry"),
    };
    let raw = raw.trim();
    // Labels such as 1_10 would otherwise read as integers.
    *slot = match slot {
        Value::String(_) => Value::String(raw.trim_matches('"').to_string()),
        _ => parse_value(raw),
    };
    Ok(())
}

fn step<'a>(node: &'a mut Value, seg: &str) -> Result<&'a mut Value> {
    match node {
        Value::Table(t) => Ok(t.entry(seg.to_string()).or_insert_with(|| Value::Table(Table::new()))),
        Value::Array(a) => {
            let i: usize = seg.parse().map_err(|_| anyhow!("`{seg}` is not an array index"))?;
            let len = a.len();
            a.get_mut(i).ok_or_else(|| anyhow!("index {i} out of range (length {len})"))
        }
        _ => bail!("`{seg}` is not a table or array"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Value {
        Value::Table(toml::from_str(text).unwrap())
    }

    #[test]
    fn nested_and_indexed_keys() {
        let mut d = doc("levels = [\"0_00\", \"1_11\"]\n[run]\nsamples = 3\n[[fields]]\nintensity = 1.0\n");
        apply(&mut d, "run.samples=7").unwrap();
        apply(&mut d, "fields.0.intensity = 2.5").unwrap();
        apply(&mut d, "levels.1=1_10").unwrap();
        apply(&mut d, "run.phi=1").unwrap();
        assert_eq!(d["run"]["samples"].as_integer(), Some(7));
        assert_eq!(d["fields"][0]["intensity"].as_float(), Some(2.5));
        assert_eq!(d["levels"][1].as_str(), Some("1_10"));
        assert_eq!(d["run"]["phi"].as_integer(), Some(1));
    }

    #[test]
    fn bad_overrides() {
        let mut d = doc("levels = [\"0_00\"]\n");
        assert!(apply(&mut d, "levels").is_err());
        assert!(apply(&mut d, "levels.3=1_01").is_err());
        assert!(apply(&mut d, "levels.x=1_01").is_err());
        assert!(apply(&mut d, "a..b=1").is_err());
    }

    #[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Small {
        name: String,
        n: i32,
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = || ("test".to_string(), "name = \"a\"\nn = 1\n".to_string());
        let e: Effective<Small> = resolve(base(), &["n=4".into(), "name=b".into()]).unwrap();
        assert_eq!(e.config, Small { name: "b".into(), n: 4 });
        assert!(resolve::<Small>(base(), &["m=4".into()]).is_err());
        let again: Effective<Small> = resolve(("echo".into(), e.text.clone()), &[]).unwrap();
        assert_eq!(again.hash, e.hash);
    }
}
