//! Convergence/divergence states between price and the squeeze indicator.
//!
//! For each day the last `window` days of closes and indicator values are
//! scanned for their two most recent peaks and troughs. The sign of the product
//! of the price and indicator trend-line slopes gives `+1` (convergence),
//! `-1` (divergence) or `0` (undefined or flat).

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::IndicatorColumn;
use crate::ingest::PriceSeries;

pub const DEFAULT_WINDOW: usize = 40;

#[derive(Debug, Error, PartialEq)]
pub enum DivergenceError {
    #[error("price and indicator windows differ in length ({price} vs {indicator})")]
    Misaligned { price: usize, indicator: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Peak,
    Trough,
}

/// How indicator extrema are paired with price extrema.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceMode {
    /// Indicator peaks/troughs are detected on the indicator itself.
    #[default]
    Independent,
    /// Indicator values are read at the price extremum dates.
    PriceAnchored,
}

impl FromStr for DivergenceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independent" => Ok(Self::Independent),
            "price_anchored" => Ok(Self::PriceAnchored),
            other => Err(format!("unknown divergence mode {other:?}")),
        }
    }
}

/// An `(index, value)` point within a window.
pub type Extremum = (usize, f64);

/// The two most recent strict local extrema, most recent last. A point is a
/// peak when it is strictly greater than both neighbours; plateaus never count.
pub fn find_local_extrema(values: &[f64], kind: ExtremumKind) -> Option<[Extremum; 2]> {
    let mut found: Vec<Extremum> = Vec::with_capacity(2);
    for i in (1..values.len().saturating_sub(1)).rev() {
        let (l, x, r) = (values[i - 1], values[i], values[i + 1]);
        let hit = match kind {
            ExtremumKind::Peak => x > l && x > r,
            ExtremumKind::Trough => x < l && x < r,
        };
        if hit {
            found.push((i, x));
            if found.len() == 2 {
                return Some([found[1], found[0]]);
            }
        }
    }
    None
}

fn slope(a: Extremum, b: Extremum) -> Option<f64> {
    (a.0 != b.0).then(|| (b.1 - a.1) / (b.0 as f64 - a.0 as f64))
}

fn sign_of_product(a: Option<f64>, b: Option<f64>) -> i8 {
    match (a, b) {
        (Some(a), Some(b)) => {
            let p = a * b;
            if p > 0.0 {
                1
            } else if p < 0.0 {
                -1
            } else {
                0
            }
        }
        _ => 0,
    }
}

fn side_state(
    price: &[f64],
    indicator: &[f64],
    kind: ExtremumKind,
    mode: DivergenceMode,
) -> i8 {
    let Some([p1, p2]) = find_local_extrema(price, kind) else {
        return 0;
    };
    let ind = match mode {
        DivergenceMode::Independent => find_local_extrema(indicator, kind),
        DivergenceMode::PriceAnchored => Some([(p1.0, indicator[p1.0]), (p2.0, indicator[p2.0])]),
    };
    let Some([i1, i2]) = ind else {
        return 0;
    };
    sign_of_product(slope(p1, p2), slope(i1, i2))
}

/// `(s_high, s_low)` for one pair of aligned windows.
pub fn divergence_state(
    price_window: &[f64],
    indicator_window: &[f64],
    mode: DivergenceMode,
) -> Result<(i8, i8), DivergenceError> {
    if price_window.len() != indicator_window.len() {
        return Err(DivergenceError::Misaligned {
            price: price_window.len(),
            indicator: indicator_window.len(),
        });
    }
    Ok((
        side_state(price_window, indicator_window, ExtremumKind::Peak, mode),
        side_state(price_window, indicator_window, ExtremumKind::Trough, mode),
    ))
}

/// Per-day `S_high` and `S_low` columns. A day is defined once the trailing
/// `window` days (inclusive) all carry an indicator value.
pub fn divergence_columns(
    series: &PriceSeries,
    indicator: &IndicatorColumn,
    window: usize,
    mode: DivergenceMode,
) -> Vec<IndicatorColumn> {
    let closes = series.closes();
    let len = closes.len();
    let mut high = vec![None; len];
    let mut low = vec![None; len];
    let start = indicator.first_defined();
    for t in 0..len {
        if window == 0 || t + 1 < window || t + 1 - window < start {
            continue;
        }
        let range = t + 1 - window..=t;
        let ind: Option<Vec<f64>> = indicator.values[range.clone()].iter().copied().collect();
        let Some(ind) = ind else {
            continue;
        };
        let (h, l) = divergence_state(&closes[range], &ind, mode)
            .expect("windows share the same range");
        high[t] = Some(f64::from(h));
        low[t] = Some(f64::from(l));
    }
    vec![
        IndicatorColumn::new("S_high", high),
        IndicatorColumn::new("S_low", low),
    ]
}
