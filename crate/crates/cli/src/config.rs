//! Optional TOML config file, the lowest-precedence source of settings
//! (flags > `NSIM_*` environment > config). Keys are the long flag names
//! with `_` or `-`, e.g. `seed = 42` or `noise-lat = "lat.csv"`.

use std::fs;
use std::str::FromStr;

use crate::failure::{CliResult, Failure};

#[derive(Debug, Default)]
pub struct Config {
    table: toml::Table,
    origin: String,
}

impl Config {
    pub fn load(path: Option<&str>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Failure::from(e).context(path))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Failure::validation(format!("{path}: {}", e.message())))?;
        Ok(Config {
            table,
            origin: path.to_string(),
        })
    }

    fn raw(&self, key: &str) -> Option<&toml::Value> {
        self.table
            .get(key)
            .or_else(|| self.table.get(&key.replace('_', "-")))
            .or_else(|| self.table.get(&key.replace('-', "_")))
    }

    /// Reads `key`, accepting TOML strings, integers, floats and booleans.
    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let text = match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            _ => return Err(Failure::usage(format!("{}: '{key}' must be a scalar", self.origin))),
        };
        text.parse()
            .map(Some)
            .map_err(|_| Failure::usage(format!("{}: bad value '{text}' for '{key}'", self.origin)))
    }

    /// `flag` if set (clap has already applied the environment), else the
    /// config value.
    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}
