//! Flat `key = value` run configuration. Command-line flags override it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::failure::Failure;

pub const KEYS: &[&str] = &[
    "train",
    "test",
    "schema",
    "embeddings",
    "data",
    "out",
    "checkpoint",
    "min_count",
    "max_len",
    "clip",
    "variant",
    "lambda",
    "gamma",
    "regularize",
    "rho",
    "sigma_pos",
    "sigma_neg",
    "epsilon",
    "eta",
    "epochs",
    "seed",
    "batch",
    "lr",
    "p_keep",
    "shuffle",
    "validate",
    "word_dim",
    "pos_dim",
    "kernels",
    "window",
    "cutoffs",
    "trials",
];

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str, path: &Path) -> Result<Self, Failure> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Failure::usage(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    i + 1
                ))
            })?;
            let (k, v) = (k.trim().replace('-', "_"), v.trim());
            if !KEYS.contains(&k.as_str()) {
                return Err(Failure::usage(format!(
                    "{}:{}: unknown key {k}",
                    path.display(),
                    i + 1
                )));
            }
            if values.insert(k.clone(), v.to_string()).is_some() {
                return Err(Failure::usage(format!(
                    "{}:{}: duplicate key {k}",
                    path.display(),
                    i + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag when given, else the config value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Failure::usage(format!("config key {key} = {v}: {e}")))
            })
            .transpose()
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?.ok_or_else(|| {
            Failure::usage(format!("missing required setting `{key}` (flag or config)"))
        })
    }
}

/// `on`/`off` switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switch(pub bool);

impl FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" | "true" | "1" => Ok(Switch(true)),
            "off" | "false" | "0" => Ok(Switch(false)),
            other => Err(format!("expected on or off, got {other}")),
        }
    }
}

/// Comma-separated cut-offs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cutoffs(pub Vec<usize>);

impl FromStr for Cutoffs {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = s
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() || v.contains(&0) {
            return Err("cut-offs must be positive".into());
        }
        Ok(Cutoffs(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let c = ConfigFile::parse("epochs = 3 # short\nlr=0.1\n\n", Path::new("c")).unwrap();
        assert_eq!(c.pick::<usize>(None, "epochs").unwrap(), Some(3));
        assert_eq!(c.pick(Some(7usize), "epochs").unwrap(), Some(7));
        assert_eq!(c.pick_or::<f64>(None, "gamma", 1.0).unwrap(), 1.0);
        assert!(c.require::<u64>(None, "seed").is_err());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ConfigFile::parse("nonsense", Path::new("c")).is_err());
        assert!(ConfigFile::parse("colour = red", Path::new("c")).is_err());
        assert!(ConfigFile::parse("seed=1\nseed=2", Path::new("c")).is_err());
        let c = ConfigFile::parse("epochs = many", Path::new("c")).unwrap();
        assert!(c.pick::<usize>(None, "epochs").is_err());
    }

    #[test]
    fn switch_and_cutoffs() {
        assert_eq!("on".parse::<Switch>().unwrap(), Switch(true));
        assert!("maybe".parse::<Switch>().is_err());
        assert_eq!("10, 20".parse::<Cutoffs>().unwrap(), Cutoffs(vec![10, 20]));
        assert!("0".parse::<Cutoffs>().is_err());
    }
}
