//! Run configuration: a TOML file layered over the scenario defaults, then
//! command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use digeco::experiments::ScenarioConfig;
use toml::{Table, Value};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_RUNS: usize = 100;
pub const OUTPUT_ENV: &str = "SIM_OUTPUT_DIR";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub seed: u64,
    pub n_runs: usize,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub sim: ScenarioConfig,
}

/// The file's contents before they are merged.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub origin: String,
    pub table: Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let table: Table = text.parse().map_err(|e| err(format!("{}: {e}", path.display())))?;
        Ok(Self { origin: path.display().to_string(), table })
    }

    pub fn scenario(&self) -> Result<Option<String>> {
        match self.table.get("scenario") {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(err(format!("{}: key 'scenario' must be a string", self.origin))),
        }
    }
}

/// Values given on the command line; `None` leaves the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_runs: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    /// `dotted.key=value`, the value in TOML syntax (bare words are strings).
    pub set: Vec<String>,
}

fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_set(item: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = item.split_once('=').ok_or_else(|| err(format!("--set {item}: expected key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(err(format!("--set {item}: empty key segment")));
    }
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    Ok((path, value))
}

fn insert_path(table: &mut Table, path: &[String], value: Value) {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        if !entry.is_table() {
            *entry = Value::Table(Table::new());
        }
        t = entry.as_table_mut().expect("just made a table");
    }
    t.insert(last.clone(), value);
}

fn take<T: serde::de::DeserializeOwned>(table: &mut Table, key: &str, origin: &str) -> Result<Option<T>> {
    match table.remove(key) {
        None => Ok(None),
        Some(v) => v.try_into().map(Some).map_err(|e| err(format!("{origin}: key '{key}': {e}"))),
    }
}

/// Scenario defaults, then the file, then `--set`, then the flags.
pub fn resolve(scenario: &str, file: Option<&ConfigFile>, ov: &Overrides) -> Result<RunConfig> {
    let defaults = ScenarioConfig::for_scenario(scenario).map_err(|e| err(e.to_string()))?;
    let mut table = match Value::try_from(&defaults) {
        Ok(Value::Table(t)) => t,
        _ => return Err(err("internal: defaults do not serialize to a table")),
    };
    let origin = file.map_or_else(|| "command line".to_string(), |f| f.origin.clone());
    let mut top = file.map(|f| f.table.clone()).unwrap_or_default();
    for item in &ov.set {
        let (path, value) = parse_set(item)?;
        insert_path(&mut top, &path, value);
    }
    if let Some(s) = take::<String>(&mut top, "scenario", &origin)? {
        if s != scenario {
            return Err(err(format!("{origin}: key 'scenario' is '{s}' but the command is '{scenario}'")));
        }
    }
    let seed = take(&mut top, "seed", &origin)?;
    let n_runs = take(&mut top, "n_runs", &origin)?;
    let output_dir = take(&mut top, "output_dir", &origin)?;
    let workers = take(&mut top, "workers", &origin)?;
    merge(&mut table, top);
    let sim: ScenarioConfig = serde_path_to_error::deserialize(Value::Table(table))
        .map_err(|e| err(format!("{origin}: key '{}': {}", e.path(), e.inner())))?;
    sim.validate().map_err(|e| err(format!("{origin}: {e}")))?;
    let cfg = RunConfig {
        scenario: scenario.to_string(),
        seed: ov.seed.or(seed).unwrap_or(DEFAULT_SEED),
        n_runs: ov.n_runs.or(n_runs).unwrap_or(DEFAULT_RUNS),
        output_dir: ov.output_dir.clone().or(output_dir),
        workers: ov.workers.or(workers),
        sim,
    };
    if cfg.n_runs == 0 {
        return Err(err(format!("{origin}: key 'n_runs' must be positive")));
    }
    if cfg.workers == Some(0) {
        return Err(err(format!("{origin}: key 'workers' must be positive")));
    }
    Ok(cfg)
}

/// Flag, then file, then `SIM_OUTPUT_DIR`, then `sim-output`.
pub fn output_root(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sim-output"))
}
