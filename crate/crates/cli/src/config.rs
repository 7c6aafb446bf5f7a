use std::path::{Path, PathBuf};

use lazyfolio::backtest::BacktestConfig;
use lazyfolio::market_data::CsvSchema;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Input files and their column layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub gold: PathBuf,
    pub btc: PathBuf,
    pub gold_date_column: String,
    pub gold_price_column: String,
    pub btc_date_column: String,
    pub btc_price_column: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            gold: PathBuf::from("data/gold.csv"),
            btc: PathBuf::from("data/btc.csv"),
            gold_date_column: "Date".into(),
            gold_price_column: "USD (PM)".into(),
            btc_date_column: "Date".into(),
            btc_price_column: "Value".into(),
        }
    }
}

impl DataConfig {
    pub fn gold_schema(&self) -> CsvSchema {
        CsvSchema::new(&self.gold_date_column, &self.gold_price_column)
    }

    pub fn btc_schema(&self) -> CsvSchema {
        CsvSchema::new(&self.btc_date_column, &self.btc_price_column)
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub backtest: BacktestConfig,
}

/// A parsed config file, remembering whether it set the seed.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub seed_set: bool,
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let Some(path) = path else {
        return Ok(LoadedConfig {
            config: RunConfig::default(),
            seed_set: false,
        });
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<LoadedConfig, String> {
    let raw: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let seed_set = raw
        .get("backtest")
        .and_then(|b| b.as_table())
        .is_some_and(|b| b.contains_key("seed"));
    let config: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    Ok(LoadedConfig { config, seed_set })
}

/// Seed precedence: flag, then config file, then `LAZYFOLIO_SEED`, then the
/// built-in default.
pub fn resolve_seed(flag: Option<u64>, loaded: &LoadedConfig) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if loaded.seed_set {
        return Ok(loaded.config.backtest.seed);
    }
    match std::env::var("LAZYFOLIO_SEED") {
        Ok(raw) => raw.trim().parse().map_err(|_| {
            CliError::Config(format!("LAZYFOLIO_SEED={raw:?} is not an unsigned integer"))
        }),
        Err(_) => Ok(loaded.config.backtest.seed),
    }
}
