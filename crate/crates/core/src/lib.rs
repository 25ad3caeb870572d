//! Daily EUR/USD forecasting pipeline.
//!
//! Price and macro inputs are loaded and calendar-aligned ([`ingest`]), turned
//! into technical and fundamental feature columns ([`indicators`], [`levels`],
//! [`divergence`]), labeled with a forward directional index and windowed into
//! per-model datasets ([`dataset`]), and fed to a from-scratch stacked LSTM
//! classifier ([`net`]). [`eval`] scores and grid-searches configurations and
//! [`sim`] replays the resulting probabilities as fixed-horizon and dynamic
//! trading strategies with spread costs.

pub mod dataset;
pub mod divergence;
pub mod eval;
pub mod indicators;
pub mod ingest;
pub mod levels;
pub mod net;
pub mod sim;

pub use dataset::{FeatureFrame, FeatureGroup, FeatureTable, ModelSpec, WindowedDataset};
pub use indicators::{IndicatorColumn, IndicatorParams};
pub use ingest::{Candle, MacroSeries, PriceSeries, Region, Regime};
pub use net::{LstmConfig, LstmNetwork, TrainReport};
pub use sim::{SimulationReport, StrategyConfig, Trade};
