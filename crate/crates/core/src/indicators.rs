//! Rolling technical indicators and oscillators over daily OHLC data.
//!
//! Every function returns one column per output line with one optional value
//! per day; values are `None` during the warm-up prefix. Formulas follow the
//! printed definitions literally, including the non-textbook ones:
//!
//! - RSI uses plain means of gains and losses (no Wilder smoothing).
//! - DX is `|DI+ - DI-| / |DI+ + DI-|` on raw high/low differences, without
//!   true-range normalisation or the x100 factor.
//! - Williams %R is `(HH - C) / (HH - LL) * 100` (0 at the top of the range).
//! - Squeeze is `(SMA_n - SMA_m) / (SMA_p * q)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PriceSeries;

#[derive(Debug, Error, PartialEq)]
pub enum IndicatorError {
    #[error("invalid indicator parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorColumn {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl IndicatorColumn {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    /// Index of the first defined value, or `len()` when none is defined.
    pub fn first_defined(&self) -> usize {
        self.values
            .iter()
            .position(Option::is_some)
            .unwrap_or(self.values.len())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BollingerParams {
    pub n: usize,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IchimokuParams {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacdParams {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdjParams {
    pub k_window: usize,
    pub d_smooth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeParams {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: f64,
}

/// Window sizes for every indicator. `Default` gives the standard values
/// used throughout the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorParams {
    pub sma_windows: Vec<usize>,
    pub ema_windows: Vec<usize>,
    pub bb: BollingerParams,
    pub ichimoku: IchimokuParams,
    pub rsi_windows: Vec<usize>,
    pub macd: MacdParams,
    pub adx_n: usize,
    pub willr_n: usize,
    pub atr_n: usize,
    pub kdj: KdjParams,
    pub sqz: SqueezeParams,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            sma_windows: vec![20, 55],
            ema_windows: vec![20, 55, 200],
            bb: BollingerParams { n: 20, k: 2.0 },
            ichimoku: IchimokuParams { n: 9, m: 26, p: 52 },
            rsi_windows: vec![6, 12, 14, 24],
            macd: MacdParams { n: 12, m: 26, p: 9 },
            adx_n: 14,
            willr_n: 14,
            atr_n: 14,
            kdj: KdjParams {
                k_window: 14,
                d_smooth: 3,
            },
            sqz: SqueezeParams {
                n: 20,
                m: 50,
                p: 200,
                q: 2.0,
            },
        }
    }
}

impl IndicatorParams {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        let bad = |m: &str| Err(IndicatorError::InvalidParam(m.to_string()));
        let windows = self
            .sma_windows
            .iter()
            .chain(&self.ema_windows)
            .chain(&self.rsi_windows)
            .chain([
                &self.ichimoku.n,
                &self.ichimoku.m,
                &self.ichimoku.p,
                &self.macd.n,
                &self.macd.p,
                &self.adx_n,
                &self.willr_n,
                &self.atr_n,
                &self.kdj.k_window,
                &self.kdj.d_smooth,
                &self.sqz.n,
            ]);
        if windows.into_iter().any(|&w| w == 0) {
            return bad("window sizes must be >= 1");
        }
        if self.bb.n < 2 {
            return bad("bollinger window must be >= 2");
        }
        if self.macd.m <= self.macd.n {
            return bad("macd requires m > n");
        }
        if !(self.sqz.p >= self.sqz.m && self.sqz.m >= self.sqz.n) {
            return bad("squeeze requires p >= m >= n");
        }
        if !(self.sqz.q.is_finite() && self.sqz.q > 0.0) {
            return bad("squeeze multiplier must be positive");
        }
        if !(self.bb.k.is_finite() && self.bb.k >= 0.0) {
            return bad("bollinger k must be non-negative");
        }
        Ok(())
    }
}

/// Mean of each trailing window of `n` values; `None` before index `n - 1`.
pub(crate) fn rolling_mean(values: &[f64], n: usize) -> Vec<Option<f64>> {
    assert!(n >= 1, "window must be >= 1");
    (0..values.len())
        .map(|t| {
            (t + 1 >= n).then(|| values[t + 1 - n..=t].iter().sum::<f64>() / n as f64)
        })
        .collect()
}

fn rolling_max(values: &[f64], n: usize) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|t| {
            (t + 1 >= n).then(|| {
                values[t + 1 - n..=t]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
        })
        .collect()
}

fn rolling_min(values: &[f64], n: usize) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|t| {
            (t + 1 >= n).then(|| {
                values[t + 1 - n..=t]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
        })
        .collect()
}

/// EMA over a fully defined slice, seeded with the mean of the first `n`
/// values at index `n - 1`.
pub(crate) fn ema_values(values: &[f64], n: usize) -> Vec<Option<f64>> {
    assert!(n >= 1, "window must be >= 1");
    let mut out = vec![None; values.len()];
    if values.len() < n {
        return out;
    }
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut ema = values[..n].iter().sum::<f64>() / n as f64;
    out[n - 1] = Some(ema);
    for t in n..values.len() {
        ema += alpha * (values[t] - ema);
        out[t] = Some(ema);
    }
    out
}

/// EMA over a column with a warm-up prefix: the recurrence starts at the first
/// defined value. Assumes the defined region is a suffix.
fn ema_of_column(values: &[Option<f64>], n: usize) -> Vec<Option<f64>> {
    let start = values.iter().position(Option::is_some).unwrap_or(values.len());
    let tail: Vec<f64> = values[start..]
        .iter()
        .map(|v| v.expect("defined region is a suffix"))
        .collect();
    let mut out = vec![None; start];
    out.extend(ema_values(&tail, n));
    out
}

pub fn sma(series: &PriceSeries, n: usize) -> IndicatorColumn {
    IndicatorColumn::new(format!("SMA_{n}"), rolling_mean(&series.closes(), n))
}

pub fn ema(series: &PriceSeries, n: usize) -> IndicatorColumn {
    IndicatorColumn::new(format!("EMA_{n}"), ema_values(&series.closes(), n))
}

/// Bollinger lower/middle/upper bands, band width and band percent, using the
/// population standard deviation of the window.
pub fn bollinger(series: &PriceSeries, n: usize, k: f64) -> Vec<IndicatorColumn> {
    assert!(n >= 2, "bollinger window must be >= 2");
    let closes = series.closes();
    let len = closes.len();
    let (mut lower, mut mid, mut upper, mut width, mut pct) = (
        vec![None; len],
        vec![None; len],
        vec![None; len],
        vec![None; len],
        vec![None; len],
    );
    for t in (n - 1)..len {
        let w = &closes[t + 1 - n..=t];
        let (mean, sd) = if w.iter().all(|&x| x == w[0]) {
            (w[0], 0.0)
        } else {
            let mean = w.iter().sum::<f64>() / n as f64;
            let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        let lo = mean - k * sd;
        let hi = mean + k * sd;
        lower[t] = Some(lo);
        mid[t] = Some(mean);
        upper[t] = Some(hi);
        width[t] = Some((hi - lo) / mean);
        pct[t] = (hi != lo).then(|| (closes[t] - lo) / (hi - lo));
    }
    let tag = format!("{n}_{k}");
    vec![
        IndicatorColumn::new(format!("BBL_{tag}"), lower),
        IndicatorColumn::new(format!("BBM_{tag}"), mid),
        IndicatorColumn::new(format!("BBU_{tag}"), upper),
        IndicatorColumn::new(format!("BBB_{tag}"), width),
        IndicatorColumn::new(format!("BBP_{tag}"), pct),
    ]
}

fn midpoint(highs: &[f64], lows: &[f64], n: usize) -> Vec<Option<f64>> {
    rolling_max(highs, n)
        .into_iter()
        .zip(rolling_min(lows, n))
        .map(|(h, l)| Some((h? + l?) / 2.0))
        .collect()
}

fn shift_forward(values: &[Option<f64>], by: usize) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|t| if t >= by { values[t - by] } else { None })
        .collect()
}

/// Ichimoku conversion (ITS), base (IKS), leading spans A/B (ISA, ISB, both
/// displaced `p / 2` days forward) and lagging span (CS, the close `m` days
/// ahead). CS looks into the future and is defined on a prefix only.
pub fn ichimoku(series: &PriceSeries, n: usize, m: usize, p: usize) -> Vec<IndicatorColumn> {
    assert!(n >= 1 && m >= 1 && p >= 1, "ichimoku windows must be >= 1");
    let highs = series.highs();
    let lows = series.lows();
    let closes = series.closes();
    let shift = p / 2;
    let its = midpoint(&highs, &lows, n);
    let iks = midpoint(&highs, &lows, m);
    let span_a: Vec<Option<f64>> = its
        .iter()
        .zip(&iks)
        .map(|(a, b)| Some((a.as_ref()? + b.as_ref()?) / 2.0))
        .collect();
    let isa = shift_forward(&span_a, shift);
    let isb = shift_forward(&midpoint(&highs, &lows, p), shift);
    let cs = (0..closes.len()).map(|t| closes.get(t + m).copied()).collect();
    vec![
        IndicatorColumn::new(format!("ITS_{n}"), its),
        IndicatorColumn::new(format!("IKS_{m}"), iks),
        IndicatorColumn::new(format!("ISA_{p}"), isa),
        IndicatorColumn::new(format!("ISB_{p}"), isb),
        IndicatorColumn::new(format!("CS_{m}"), cs),
    ]
}

pub fn rsi(series: &PriceSeries, n: usize) -> IndicatorColumn {
    assert!(n >= 1, "rsi window must be >= 1");
    let closes = series.closes();
    let values = (0..closes.len())
        .map(|t| {
            if t < n {
                return None;
            }
            let (mut gain, mut loss) = (0.0, 0.0);
            for i in t + 1 - n..=t {
                let d = closes[i] - closes[i - 1];
                if d > 0.0 {
                    gain += d;
                } else {
                    loss -= d;
                }
            }
            let (avg_gain, avg_loss) = (gain / n as f64, loss / n as f64);
            Some(if avg_loss == 0.0 {
                if avg_gain == 0.0 {
                    50.0
                } else {
                    100.0
                }
            } else {
                100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
            })
        })
        .collect();
    IndicatorColumn::new(format!("RSI_{n}"), values)
}

/// MACD line, histogram and signal line.
pub fn macd(series: &PriceSeries, n: usize, m: usize, p: usize) -> Vec<IndicatorColumn> {
    assert!(m > n && n >= 1 && p >= 1, "macd requires m > n >= 1, p >= 1");
    let closes = series.closes();
    let fast = ema_values(&closes, n);
    let slow = ema_values(&closes, m);
    let line: Vec<Option<f64>> = fast
        .iter()
        .zip(&slow)
        .map(|(f, s)| Some(f.as_ref()? - s.as_ref()?))
        .collect();
    let signal = ema_of_column(&line, p);
    let hist = line
        .iter()
        .zip(&signal)
        .map(|(l, s)| Some(l.as_ref()? - s.as_ref()?))
        .collect();
    let tag = format!("{n}_{m}_{p}");
    vec![
        IndicatorColumn::new(format!("MACD_{tag}"), line),
        IndicatorColumn::new(format!("MACDh_{tag}"), hist),
        IndicatorColumn::new(format!("MACDs_{tag}"), signal),
    ]
}

/// Average directional index on raw directional movements. DX is 0 when
/// `DI+ + DI-` is 0.
pub fn adx(series: &PriceSeries, n: usize) -> IndicatorColumn {
    assert!(n >= 1, "adx window must be >= 1");
    let highs = series.highs();
    let lows = series.lows();
    let len = highs.len();
    let mut dx = vec![0.0; len];
    for t in 1..len {
        let plus = highs[t] - highs[t - 1];
        let minus = lows[t - 1] - lows[t];
        let denom = (plus + minus).abs();
        dx[t] = if denom == 0.0 {
            0.0
        } else {
            (plus - minus).abs() / denom
        };
    }
    let mut out = vec![None; len];
    if len > n {
        let mut value = dx[1..=n].iter().sum::<f64>() / n as f64;
        out[n] = Some(value);
        for t in n + 1..len {
            value = (value * (n as f64 - 1.0) + dx[t]) / n as f64;
            out[t] = Some(value);
        }
    }
    IndicatorColumn::new(format!("ADX_{n}"), out)
}

pub fn williams_r(series: &PriceSeries, n: usize) -> IndicatorColumn {
    assert!(n >= 1, "williams window must be >= 1");
    let closes = series.closes();
    let hh = rolling_max(&series.highs(), n);
    let ll = rolling_min(&series.lows(), n);
    let values = (0..closes.len())
        .map(|t| {
            let (h, l) = (hh[t]?, ll[t]?);
            (h != l).then(|| (h - closes[t]) / (h - l) * 100.0)
        })
        .collect();
    IndicatorColumn::new(format!("WILLR_{n}"), values)
}

/// True range per day; the first day has no previous close and uses `High - Low`.
pub fn true_range(series: &PriceSeries) -> Vec<f64> {
    let c = series.candles();
    (0..c.len())
        .map(|t| {
            let hl = c[t].high - c[t].low;
            if t == 0 {
                hl
            } else {
                let prev = c[t - 1].close;
                hl.max((c[t].high - prev).abs()).max((c[t].low - prev).abs())
            }
        })
        .collect()
}

pub fn atr(series: &PriceSeries, n: usize) -> IndicatorColumn {
    IndicatorColumn::new(format!("ATR_{n}"), rolling_mean(&true_range(series), n))
}

/// Stochastic %K, %D (SMA of %K) and J = 3K - 2D.
pub fn kdj(series: &PriceSeries, k_window: usize, d_smooth: usize) -> Vec<IndicatorColumn> {
    assert!(k_window >= 1 && d_smooth >= 1, "kdj windows must be >= 1");
    let closes = series.closes();
    let hh = rolling_max(&series.highs(), k_window);
    let ll = rolling_min(&series.lows(), k_window);
    let k: Vec<Option<f64>> = (0..closes.len())
        .map(|t| {
            let (h, l) = (hh[t]?, ll[t]?);
            (h != l).then(|| (closes[t] - l) / (h - l) * 100.0)
        })
        .collect();
    let d: Vec<Option<f64>> = (0..k.len())
        .map(|t| {
            if t + 1 < d_smooth {
                return None;
            }
            let mut sum = 0.0;
            for v in &k[t + 1 - d_smooth..=t] {
                sum += (*v)?;
            }
            Some(sum / d_smooth as f64)
        })
        .collect();
    let j = k
        .iter()
        .zip(&d)
        .map(|(k, d)| Some(3.0 * k.as_ref()? - 2.0 * d.as_ref()?))
        .collect();
    let tag = format!("{k_window}_{d_smooth}");
    vec![
        IndicatorColumn::new(format!("K_{tag}"), k),
        IndicatorColumn::new(format!("D_{tag}"), d),
        IndicatorColumn::new(format!("J_{tag}"), j),
    ]
}

pub fn squeeze(series: &PriceSeries, n: usize, m: usize, p: usize, q: f64) -> IndicatorColumn {
    let closes = series.closes();
    let short = rolling_mean(&closes, n);
    let long = rolling_mean(&closes, m);
    let base = rolling_mean(&closes, p);
    let values = (0..closes.len())
        .map(|t| Some((short[t]? - long[t]?) / (base[t]? * q)))
        .collect();
    IndicatorColumn::new(format!("SQZ_{n}_{m}_{p}_{q}"), values)
}

pub fn squeeze_with(series: &PriceSeries, p: &SqueezeParams) -> IndicatorColumn {
    squeeze(series, p.n, p.m, p.p, p.q)
}

/// Names of columns that depend on future prices and must never be used as
/// model inputs.
pub fn is_forward_looking(name: &str) -> bool {
    name.starts_with("CS_")
}

/// All indicator columns in a fixed order.
pub fn compute_all(series: &PriceSeries, params: &IndicatorParams) -> Vec<IndicatorColumn> {
    let mut cols = Vec::new();
    cols.extend(params.sma_windows.iter().map(|&n| sma(series, n)));
    cols.extend(params.ema_windows.iter().map(|&n| ema(series, n)));
    cols.extend(bollinger(series, params.bb.n, params.bb.k));
    let ich = params.ichimoku;
    cols.extend(ichimoku(series, ich.n, ich.m, ich.p));
    cols.extend(params.rsi_windows.iter().map(|&n| rsi(series, n)));
    cols.extend(macd(series, params.macd.n, params.macd.m, params.macd.p));
    cols.push(adx(series, params.adx_n));
    cols.push(williams_r(series, params.willr_n));
    cols.push(atr(series, params.atr_n));
    cols.extend(kdj(series, params.kdj.k_window, params.kdj.d_smooth));
    cols.push(squeeze_with(series, &params.sqz));
    cols
}
