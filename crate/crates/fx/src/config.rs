//! Run configuration: a flat TOML file layered over defaults, with
//! command-line flags layered over both.

use std::fs;
use std::path::{Path, PathBuf};

use fx_core::dataset::{FeatureConfig, MissingLevels, ScalingKind, DEFAULT_HORIZON};
use fx_core::divergence::DivergenceMode;
use fx_core::eval::{GridSettings, HyperGrid};
use fx_core::ingest::Regime;
use fx_core::net::LstmConfig;
use fx_core::sim::StrategyConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::provenance::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run directory; every output goes below it.
    pub out_dir: PathBuf,
    /// Daily OHLC file; defaults to `<out_dir>/data/prices.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_file: Option<PathBuf>,
    /// Directory of macro release files; defaults to `<out_dir>/data/macro`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_dir: Option<PathBuf>,
    pub seed: u64,

    pub synth_days: usize,
    pub synth_regime: Regime,

    pub models: Vec<u8>,
    pub epochs: Vec<usize>,
    pub layers: Vec<usize>,
    pub back_days: Vec<usize>,
    pub hidden_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub l1_penalty: f64,

    pub label_horizon: usize,
    pub split_fraction: f64,
    pub scaling: ScalingKind,
    pub missing_levels: MissingLevels,
    pub divergence_mode: DivergenceMode,

    pub long_threshold: f64,
    pub short_threshold: f64,
    pub hold_days: usize,
    pub spread_pips: f64,
    pub pip_size: f64,
    pub commission: f64,
    /// Trailing window for signal normalisation; 0 normalises over the whole
    /// scored window.
    pub normalization_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lstm = LstmConfig::default();
        let grid = HyperGrid::default();
        let strategy = StrategyConfig::default();
        Self {
            out_dir: PathBuf::from("run"),
            price_file: None,
            macro_dir: None,
            seed: 0,
            synth_days: 2000,
            synth_regime: Regime::RandomWalk,
            models: (0..=9).collect(),
            epochs: grid.epochs,
            layers: grid.layers,
            back_days: grid.back_days,
            hidden_size: lstm.hidden_size,
            dropout: lstm.dropout,
            learning_rate: lstm.learning_rate,
            momentum: lstm.momentum,
            batch_size: lstm.batch_size,
            l1_penalty: lstm.l1_penalty,
            label_horizon: DEFAULT_HORIZON,
            split_fraction: 0.8,
            scaling: ScalingKind::MinMax,
            missing_levels: MissingLevels::FillClose,
            divergence_mode: DivergenceMode::Independent,
            long_threshold: strategy.long_threshold,
            short_threshold: strategy.short_threshold,
            hold_days: strategy.horizon,
            spread_pips: strategy.spread_pips,
            pip_size: strategy.pip_size,
            commission: strategy.commission,
            normalization_window: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if let Some(m) = self.models.iter().find(|&&m| m > 9) {
            return bad(format!("unknown model {m}; models are 0-9"));
        }
        if self.models.is_empty() {
            return bad("no models selected".into());
        }
        self.grid().validate()?;
        self.lstm_base().validate()?;
        self.strategy().validate()?;
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction {} not in (0, 1)", self.split_fraction));
        }
        if self.label_horizon == 0 {
            return bad("label_horizon must be positive".into());
        }
        if self.normalization_window == 1 {
            return bad("normalization_window must be 0 (whole window) or at least 2".into());
        }
        Ok(())
    }

    pub fn price_path(&self) -> PathBuf {
        self.price_file
            .clone()
            .unwrap_or_else(|| self.out_dir.join("data").join("prices.csv"))
    }

    pub fn macro_path(&self) -> PathBuf {
        self.macro_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("data").join("macro"))
    }

    pub fn grid(&self) -> HyperGrid {
        HyperGrid {
            epochs: self.epochs.clone(),
            layers: self.layers.clone(),
            back_days: self.back_days.clone(),
        }
    }

    /// Network settings shared by every cell (the grid fills in the rest).
    pub fn lstm_base(&self) -> LstmConfig {
        LstmConfig {
            layers: self.layers.first().copied().unwrap_or(1),
            hidden_size: self.hidden_size,
            back_days: self.back_days.first().copied().unwrap_or(20),
            epochs: self.epochs.first().copied().unwrap_or(20),
            dropout: self.dropout,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            l1_penalty: self.l1_penalty,
            seed: self.seed,
        }
    }

    pub fn grid_settings(&self, jobs: Option<usize>) -> GridSettings {
        GridSettings {
            grid: self.grid(),
            base: self.lstm_base(),
            master_seed: self.seed,
            split_fraction: self.split_fraction,
            scaling: self.scaling,
            jobs,
            store_preamble: Vec::new(),
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            divergence_mode: self.divergence_mode,
            ..FeatureConfig::default()
        }
    }

    pub fn strategy(&self) -> StrategyConfig {
        StrategyConfig {
            long_threshold: self.long_threshold,
            short_threshold: self.short_threshold,
            horizon: self.hold_days,
            spread_pips: self.spread_pips,
            pip_size: self.pip_size,
            commission: self.commission,
            ..StrategyConfig::default()
        }
    }

    /// Hash of every setting except locations, so identical runs in different
    /// directories share it.
    pub fn fingerprint(&self) -> String {
        let anonymous = RunConfig {
            out_dir: PathBuf::new(),
            price_file: None,
            macro_dir: None,
            ..self.clone()
        };
        sha256_hex(anonymous.to_toml().as_bytes())
    }
}
