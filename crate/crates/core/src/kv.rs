//! Flat `key = value` text: report serialization and parameter files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::config::Tolerances;
use crate::error::{KdsError, Result};

/// Flattens any serializable value into dotted `key = value` lines, in
/// field order. Arrays use numeric path segments.
pub fn to_kv<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| KdsError::Parse(e.to_string()))?;
    let mut out = String::new();
    flatten_into(&v, String::new(), &mut out);
    Ok(out)
}

fn flatten_into(v: &Value, prefix: String, out: &mut String) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten_into(child, join(k), out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten_into(child, join(&i.to_string()), out);
            }
        }
        Value::String(s) => {
            let _ = writeln!(out, "{prefix} = {s}");
        }
        Value::Null => {
            let _ = writeln!(out, "{prefix} = nan");
        }
        other => {
            let _ = writeln!(out, "{prefix} = {other}");
        }
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// duplicate keys are rejected.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(KdsError::Parse(format!("line {}: expected 'key = value', got '{line}'", n + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(KdsError::Parse(format!("line {}: empty key or value", n + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(KdsError::Parse(format!("line {}: duplicate key '{k}'", n + 1)));
        }
    }
    Ok(map)
}

/// Contents of a parameter file: the triple plus optional tolerance keys.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamFile {
    pub lambda: Option<f64>,
    pub mass: Option<f64>,
    pub spin: Option<f64>,
    pub seed: Option<u64>,
    pub root_tol: Option<f64>,
    pub identity_tol: Option<f64>,
    pub char_tol: Option<f64>,
    pub flow_tol: Option<f64>,
    pub pole_margin: Option<f64>,
    pub grid: Option<usize>,
    pub profile_grid: Option<usize>,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| KdsError::Parse(format!("invalid value '{v}' for '{key}'")))
}

impl ParamFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pf = ParamFile::default();
        for (k, v) in parse_kv(text)? {
            match k.as_str() {
                "lambda" => pf.lambda = Some(num(&k, &v)?),
                "mass" => pf.mass = Some(num(&k, &v)?),
                "spin" => pf.spin = Some(num(&k, &v)?),
                "seed" => pf.seed = Some(num(&k, &v)?),
                "root_tol" => pf.root_tol = Some(num(&k, &v)?),
                "identity_tol" => pf.identity_tol = Some(num(&k, &v)?),
                "char_tol" => pf.char_tol = Some(num(&k, &v)?),
                "flow_tol" | "tol" => pf.flow_tol = Some(num(&k, &v)?),
                "pole_margin" => pf.pole_margin = Some(num(&k, &v)?),
                "grid" => pf.grid = Some(num(&k, &v)?),
                "profile_grid" => pf.profile_grid = Some(num(&k, &v)?),
                other => return Err(KdsError::Parse(format!("unknown key '{other}'"))),
            }
        }
        Ok(pf)
    }

    pub fn apply(&self, tol: &mut Tolerances) {
        if let Some(v) = self.root_tol {
            tol.root_tol = v;
        }
        if let Some(v) = self.identity_tol {
            tol.identity_tol = v;
        }
        if let Some(v) = self.char_tol {
            tol.char_tol = v;
        }
        if let Some(v) = self.flow_tol {
            tol.flow_tol = v;
        }
        if let Some(v) = self.pole_margin {
            tol.pole_margin = v;
        }
        if let Some(v) = self.grid {
            tol.grid = v;
        }
        if let Some(v) = self.profile_grid {
            tol.profile_grid = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Inner {
        x: f64,
        ok: bool,
    }

    #[derive(Serialize)]
    struct Outer {
        name: &'static str,
        inner: Inner,
        list: Vec<u32>,
        missing: Option<f64>,
    }

    #[test]
    fn flattening_is_ordered_and_dotted() {
        let s = to_kv(&Outer {
            name: "a",
            inner: Inner { x: 0.1, ok: true },
            list: vec![3, 4],
            missing: None,
        })
        .unwrap();
        assert_eq!(s, "name = a\ninner.x = 0.1\ninner.ok = true\nlist.0 = 3\nlist.1 = 4\nmissing = nan\n");
    }

    #[test]
    fn parameter_file_round_trip() {
        let pf = ParamFile::parse("# triple\nlambda = 0.02\nmass=1\nspin = 0.9 # high spin\nflow_tol = 1e-11\n").unwrap();
        assert_eq!(pf.lambda, Some(0.02));
        assert_eq!(pf.spin, Some(0.9));
        let mut t = Tolerances::default();
        pf.apply(&mut t);
        assert_eq!(t.flow_tol, 1e-11);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(ParamFile::parse("lambda 0.02").is_err());
        assert!(ParamFile::parse("lambda = x").is_err());
        assert!(ParamFile::parse("lambda = 1\nlambda = 2").is_err());
        assert!(ParamFile::parse("colour = red").is_err());
    }
}
