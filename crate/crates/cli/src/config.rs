//! Experiment configuration: a flat TOML file whose keys are the market
//! parameter names, plus a few `run.*` keys, with `key=value` overrides
//! layered on top.
//!
//! ```toml
//! c_d = 10
//! s = 2.0
//! rho = 0.001
//! horizon = 1000
//! seed = 7
//! beta_range = [0.8, 1.2]
//! run.regret_mode = "sampled:10"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ismarket_core::simulation::{RegretMode, RunConfig};
use ismarket_core::MarketParams;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

/// Keys that must be present in the file or given as overrides.
pub const REQUIRED: [&str; 3] = ["c_d", "s", "rho"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub record_contracts: bool,
    pub regret_mode: RegretMode,
    pub snapshot_interval: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { record_contracts: false, regret_mode: RegretMode::Off, snapshot_interval: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: MarketParams,
    pub run: RunOptions,
}

impl ExperimentConfig {
    pub fn run_config(&self, params: MarketParams) -> RunConfig {
        RunConfig {
            params,
            record_contracts: self.run.record_contracts,
            regret_mode: self.run.regret_mode,
            snapshot_interval: self.run.snapshot_interval,
        }
    }
}

pub fn load(path: &Path, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, overrides).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| CliError::config(e.to_string().trim_end().to_string()))?;
    let mut flat = BTreeMap::new();
    flatten("", table, &mut flat);
    for o in overrides {
        let (key, value) = parse_override(o)?;
        flat.insert(key, value);
    }
    for key in REQUIRED {
        if !flat.contains_key(key) {
            return Err(CliError::config(format!("missing required field `{key}`")));
        }
    }

    let mut run = RunOptions::default();
    let mut market = BTreeMap::new();
    for (key, value) in flat {
        match key.strip_prefix("run.") {
            Some("record_contracts") => run.record_contracts = expect_bool(&key, &value)?,
            Some("snapshot_interval") => run.snapshot_interval = expect_count(&key, &value)?,
            Some("regret_mode") => run.regret_mode = parse_regret_mode(&value)?,
            Some(_) => return Err(CliError::config(format!("unknown field `{key}`"))),
            None => {
                market.insert(key, value);
            }
        }
    }
    let params = apply(&MarketParams::default(), market)?;
    Ok(ExperimentConfig { params, run })
}

/// Copy of `base` with the given fields replaced, validated.
pub fn apply(base: &MarketParams, fields: impl IntoIterator<Item = (String, Value)>) -> CliResult<MarketParams> {
    let mut table = Table::try_from(base).map_err(|e| CliError::Run(e.to_string()))?;
    for (key, value) in fields {
        if !table.contains_key(&key) {
            return Err(CliError::config(format!("unknown field `{key}`")));
        }
        table.insert(key, value);
    }
    let params: MarketParams = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))?;
    params.validate()?;
    Ok(params)
}

/// Sets one numeric field, converting to an integer for integer-typed fields.
pub fn apply_numeric(base: &MarketParams, key: &str, v: f64) -> CliResult<MarketParams> {
    let table = Table::try_from(base).map_err(|e| CliError::Run(e.to_string()))?;
    let value = match table.get(key) {
        Some(Value::Integer(_)) if v.fract() == 0.0 && v >= 0.0 => Value::Integer(v as i64),
        Some(Value::Integer(_)) => return Err(CliError::config(format!("field `{key}` takes whole numbers, got {v}"))),
        Some(Value::Float(_)) => Value::Float(v),
        Some(_) => return Err(CliError::config(format!("field `{key}` cannot be swept"))),
        None => return Err(CliError::config(format!("unknown field `{key}`"))),
    };
    apply(base, [(key.to_string(), value)])
}

fn flatten(prefix: &str, table: Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

/// `key=value`, where the value is read as a TOML value and falls back to a
/// bare string.
pub fn parse_override(s: &str) -> CliResult<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{s}` is not of the form key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

fn expect_bool(key: &str, v: &Value) -> CliResult<bool> {
    v.as_bool().ok_or_else(|| CliError::config(format!("field `{key}` must be true or false")))
}

fn expect_count(key: &str, v: &Value) -> CliResult<usize> {
    v.as_integer()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| CliError::config(format!("field `{key}` must be a non-negative integer")))
}

/// `"off"`, `"every_step"` or `"sampled:N"`.
pub fn parse_regret_mode(v: &Value) -> CliResult<RegretMode> {
    let bad = || CliError::config("field `run.regret_mode` must be \"off\", \"every_step\" or \"sampled:N\" with N >= 1");
    let s = v.as_str().ok_or_else(bad)?;
    match s {
        "off" => Ok(RegretMode::Off),
        "every_step" => Ok(RegretMode::EveryStep),
        _ => {
            let n: usize = s.strip_prefix("sampled:").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
            if n == 0 {
                return Err(bad());
            }
            Ok(RegretMode::Sampled(n))
        }
    }
}

/// Comma-separated list of numbers, as used by `--grid` and `--levels`.
pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::config(format!("`{x}` is not a number"))))
        .collect()
}
