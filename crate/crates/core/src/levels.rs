//! Clustered support/resistance levels and Fibonacci retracement levels.
//!
//! Both use the `lookback` trading days strictly before the evaluated day, so a
//! day's levels never depend on its own bar. Levels equal to the close count
//! as resistance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::IndicatorColumn;
use crate::ingest::PriceSeries;

#[derive(Debug, Error, PartialEq)]
pub enum LevelsError {
    #[error("grouper input is not sorted ascending at position {0}")]
    Unsorted(usize),
    #[error("grouper tolerance must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("invalid level config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrouperConfig {
    /// Relative tolerance; the grouping gap is `alpha * close`.
    pub alpha: f64,
    pub lookback: usize,
    pub window: usize,
}

impl Default for GrouperConfig {
    fn default() -> Self {
        Self {
            alpha: 0.04,
            lookback: 200,
            window: 20,
        }
    }
}

impl GrouperConfig {
    pub fn validate(&self) -> Result<(), LevelsError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(LevelsError::Config(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if self.window == 0 || self.lookback != 10 * self.window {
            return Err(LevelsError::Config(format!(
                "lookback {} must equal 10 x window {}",
                self.lookback, self.window
            )));
        }
        Ok(())
    }
}

/// Two nearest levels on each side of the close; any slot may be absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub support2: Option<f64>,
    pub support1: Option<f64>,
    pub resistance1: Option<f64>,
    pub resistance2: Option<f64>,
}

impl LevelEntry {
    /// Picks the two largest levels strictly below `close` and the two smallest
    /// levels at or above it.
    pub fn around(levels: &[f64], close: f64) -> Self {
        let mut below: Vec<f64> = levels.iter().copied().filter(|&x| x < close).collect();
        let mut above: Vec<f64> = levels.iter().copied().filter(|&x| x >= close).collect();
        below.sort_by(|a, b| b.total_cmp(a));
        below.dedup();
        above.sort_by(f64::total_cmp);
        above.dedup();
        Self {
            support1: below.first().copied(),
            support2: below.get(1).copied(),
            resistance1: above.first().copied(),
            resistance2: above.get(1).copied(),
        }
    }

    pub fn supports(&self) -> impl Iterator<Item = f64> {
        [self.support1, self.support2].into_iter().flatten()
    }

    pub fn resistances(&self) -> impl Iterator<Item = f64> {
        [self.resistance1, self.resistance2].into_iter().flatten()
    }
}

/// Splits an ascending list into maximal runs whose consecutive gaps are below
/// `delta`. Chaining is transitive: a group may span more than `delta` overall.
pub fn grouper(sorted_values: &[f64], delta: f64) -> Result<Vec<Vec<f64>>, LevelsError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(LevelsError::BadDelta(delta));
    }
    if let Some(i) = sorted_values.windows(2).position(|w| w[1] < w[0]) {
        return Err(LevelsError::Unsorted(i + 1));
    }
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &x in sorted_values {
        match groups.last_mut() {
            Some(g) if x - g[g.len() - 1] < delta => g.push(x),
            _ => groups.push(vec![x]),
        }
    }
    Ok(groups)
}

/// Window extrema (max high, max close, min low, min close) of the ten
/// windows preceding `day`, sorted ascending.
fn window_extrema(series: &PriceSeries, day: usize, cfg: &GrouperConfig) -> Vec<f64> {
    let candles = &series.candles()[day - cfg.lookback..day];
    let mut out = Vec::with_capacity(4 * cfg.lookback / cfg.window);
    for w in candles.chunks(cfg.window) {
        let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&crate::ingest::Candle) -> f64| {
            w.iter().map(g).fold(init, f)
        };
        out.push(fold(f64::max, f64::NEG_INFINITY, |c| c.high));
        out.push(fold(f64::max, f64::NEG_INFINITY, |c| c.close));
        out.push(fold(f64::min, f64::INFINITY, |c| c.low));
        out.push(fold(f64::min, f64::INFINITY, |c| c.close));
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Cluster means for `day`, ascending.
pub fn cluster_levels(series: &PriceSeries, day: usize, cfg: &GrouperConfig) -> Option<Vec<f64>> {
    if day < cfg.lookback || day >= series.len() {
        return None;
    }
    let extrema = window_extrema(series, day, cfg);
    let delta = cfg.alpha * series.candles()[day].close;
    let groups = grouper(&extrema, delta).expect("extrema are sorted and delta > 0");
    Some(
        groups
            .iter()
            .map(|g| g.iter().sum::<f64>() / g.len() as f64)
            .collect(),
    )
}

/// Support/resistance entry for one day; `None` without `lookback` days of history.
pub fn support_resistance(
    series: &PriceSeries,
    day: usize,
    cfg: &GrouperConfig,
) -> Option<LevelEntry> {
    let means = cluster_levels(series, day, cfg)?;
    Some(LevelEntry::around(&means, series.candles()[day].close))
}

pub const FIB_RETRACEMENTS: [f64; 5] = [0.236, 0.382, 0.5, 0.618, 0.786];
pub const FIB_EXTENSIONS: [f64; 2] = [1.272, 1.618];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FibConfig {
    pub lookback: usize,
    /// Include the window low (0%) and high (100%) as levels.
    pub include_bounds: bool,
}

impl Default for FibConfig {
    fn default() -> Self {
        Self {
            lookback: 200,
            include_bounds: true,
        }
    }
}

pub fn fib_ratios(include_bounds: bool) -> Vec<f64> {
    let mut r = Vec::with_capacity(9);
    if include_bounds {
        r.push(0.0);
    }
    r.extend(FIB_RETRACEMENTS);
    if include_bounds {
        r.push(1.0);
    }
    r.extend(FIB_EXTENSIONS);
    r
}

/// Levels `low + r * (high - low)` for a given range, anchored at the low.
pub fn fib_price_levels(high: f64, low: f64, include_bounds: bool) -> Vec<f64> {
    fib_ratios(include_bounds)
        .into_iter()
        .map(|r| low + r * (high - low))
        .collect()
}

/// Fibonacci entry for one day from the high/low of the preceding window.
/// `None` with insufficient history or a flat window.
pub fn fibonacci_levels(series: &PriceSeries, day: usize, cfg: &FibConfig) -> Option<LevelEntry> {
    if cfg.lookback == 0 || day < cfg.lookback || day >= series.len() {
        return None;
    }
    let window = &series.candles()[day - cfg.lookback..day];
    let high = window.iter().map(|c| c.high).fold(f64::NEG_INFINITY, f64::max);
    let low = window.iter().map(|c| c.low).fold(f64::INFINITY, f64::min);
    if high == low {
        return None;
    }
    let levels = fib_price_levels(high, low, cfg.include_bounds);
    Some(LevelEntry::around(&levels, series.candles()[day].close))
}

fn entries_to_columns(prefix: &str, entries: &[Option<LevelEntry>]) -> Vec<IndicatorColumn> {
    let pick = |f: fn(&LevelEntry) -> Option<f64>| -> Vec<Option<f64>> {
        entries.iter().map(|e| e.as_ref().and_then(f)).collect()
    };
    vec![
        IndicatorColumn::new(format!("{prefix}_R1"), pick(|e| e.resistance1)),
        IndicatorColumn::new(format!("{prefix}_R2"), pick(|e| e.resistance2)),
        IndicatorColumn::new(format!("{prefix}_S1"), pick(|e| e.support1)),
        IndicatorColumn::new(format!("{prefix}_S2"), pick(|e| e.support2)),
    ]
}

/// Per-day support/resistance columns `SR_R1, SR_R2, SR_S1, SR_S2`.
pub fn support_resistance_columns(series: &PriceSeries, cfg: &GrouperConfig) -> Vec<IndicatorColumn> {
    let entries: Vec<_> = (0..series.len())
        .map(|d| support_resistance(series, d, cfg))
        .collect();
    entries_to_columns("SR", &entries)
}

/// Per-day Fibonacci columns `FIB_R1, FIB_R2, FIB_S1, FIB_S2`.
pub fn fibonacci_columns(series: &PriceSeries, cfg: &FibConfig) -> Vec<IndicatorColumn> {
    let entries: Vec<_> = (0..series.len())
        .map(|d| fibonacci_levels(series, d, cfg))
        .collect();
    entries_to_columns("FIB", &entries)
}
