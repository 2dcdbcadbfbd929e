//! `key = value` settings: a config file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use mtikh::bundle::parse_key_values;
use mtikh::{Error, RegParams, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_text(&text))
    }

    /// Keys are normalized so `max_iter` and `max-iter` are the same key.
    pub fn from_text(text: &str) -> Self {
        let mut s = Self::default();
        for (k, v) in parse_key_values(text) {
            s.set(&k, v);
        }
        s
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize(key), value.into());
    }

    /// Overlay `value` when present.
    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v.to_string());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`"))),
        }
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key).map(|v| parse_list(key, v)).transpose()
    }

    /// Parameter pair written `a,b`.
    pub fn pair(&self, key: &str) -> Result<Option<RegParams>> {
        match self.list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => RegParams::new(v[0], v[1]).map(Some),
            Some(_) => Err(Error::Parse(format!("`{key}` needs two values a,b"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}` in `{key}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let mut s = Settings::from_text("seed = 3\neps = 5e-2, 5e-3\nmax_iter: 7");
        assert_eq!(s.get::<u64>("seed").unwrap(), Some(3));
        assert_eq!(s.get::<usize>("max-iter").unwrap(), Some(7));
        s.set_opt("seed", Some(9));
        s.set_opt::<u64>("cm", None);
        assert_eq!(s.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(s.list("eps").unwrap(), Some(vec![5e-2, 5e-3]));
        assert!(s.raw("cm").is_none());
    }

    #[test]
    fn pairs_are_checked() {
        let s = Settings::from_text("eta = 1e-3,2e-3\nbad = 1,2,3\nneg = -1,1");
        assert_eq!(s.pair("eta").unwrap().unwrap().as_array(), [1e-3, 2e-3]);
        assert!(s.pair("bad").is_err());
        assert!(s.pair("neg").is_err());
        assert!(s.get::<u64>("eta").is_err());
    }
}
