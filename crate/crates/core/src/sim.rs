//! Trading simulation driven by normalized model probabilities.
//!
//! Two regimes: fixed-horizon (every signal day opens a unit position closed
//! `horizon` trading days later; positions may overlap) and dynamic (one open
//! position per direction, held while the entry condition persists). Entries
//! and exits execute at the daily close. Returns are simple and unleveraged.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("need at least two signal values, got {0}")]
    TooShort(usize),
    #[error("degenerate signal: all probabilities equal {0}")]
    Degenerate(f64),
    #[error("signals ({signals}) and prices ({prices}) are not aligned")]
    Misaligned { signals: usize, prices: usize },
    #[error("invalid strategy config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub dates: Vec<NaiveDate>,
    pub raw: Vec<f64>,
    pub weighted: Vec<f64>,
}

impl SignalSeries {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Min-max normalisation over the whole window.
pub fn normalize_signals(dates: &[NaiveDate], raw: &[f64]) -> Result<SignalSeries, SimError> {
    if raw.len() < 2 {
        return Err(SimError::TooShort(raw.len()));
    }
    if dates.len() != raw.len() {
        return Err(SimError::Misaligned {
            signals: raw.len(),
            prices: dates.len(),
        });
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Err(SimError::Degenerate(min));
    }
    Ok(SignalSeries {
        dates: dates.to_vec(),
        raw: raw.to_vec(),
        weighted: raw.iter().map(|&p| (p - min) / (max - min)).collect(),
    })
}

/// Min-max normalisation over a trailing window of `window` values
/// (inclusive). A flat window maps to 0.5, inside the dead zone.
pub fn normalize_signals_rolling(
    dates: &[NaiveDate],
    raw: &[f64],
    window: usize,
) -> Result<SignalSeries, SimError> {
    if raw.len() < 2 {
        return Err(SimError::TooShort(raw.len()));
    }
    if dates.len() != raw.len() {
        return Err(SimError::Misaligned {
            signals: raw.len(),
            prices: dates.len(),
        });
    }
    if window < 2 {
        return Err(SimError::Config("rolling window must be at least 2".into()));
    }
    let weighted = (0..raw.len())
        .map(|t| {
            let w = &raw[t.saturating_sub(window - 1)..=t];
            let min = w.iter().copied().fold(f64::INFINITY, f64::min);
            let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == min {
                0.5
            } else {
                (raw[t] - min) / (max - min)
            }
        })
        .collect();
    Ok(SignalSeries {
        dates: dates.to_vec(),
        raw: raw.to_vec(),
        weighted,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    FixedHorizon,
    Dynamic,
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed_horizon" | "fixed" => Ok(Self::FixedHorizon),
            "dynamic" => Ok(Self::Dynamic),
            other => Err(format!("unknown regime {other:?}")),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::FixedHorizon => "fixed_horizon",
            Regime::Dynamic => "dynamic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub long_threshold: f64,
    pub short_threshold: f64,
    /// Holding period of the fixed regime, in trading days.
    pub horizon: usize,
    pub spread_pips: f64,
    pub pip_size: f64,
    /// Flat cost per trade, as a return fraction.
    pub commission: f64,
    /// Cost per holding day, as a return fraction.
    pub swap_per_day: f64,
    pub slippage_pips: f64,
    pub regime: Regime,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            long_threshold: 0.7,
            short_threshold: 0.35,
            horizon: 10,
            spread_pips: 1.0,
            pip_size: 0.0001,
            commission: 0.0,
            swap_per_day: 0.0,
            slippage_pips: 0.0,
            regime: Regime::FixedHorizon,
        }
    }
}

impl StrategyConfig {
    /// Every cost set to zero.
    pub fn zero_cost() -> Self {
        Self {
            spread_pips: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = 0.0 <= self.short_threshold
            && self.short_threshold < self.long_threshold
            && self.long_threshold <= 1.0;
        if !ok {
            return Err(SimError::Config(
                "thresholds must satisfy 0 <= short < long <= 1".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be positive".into()));
        }
        let costs = [self.spread_pips, self.pip_size, self.commission, self.swap_per_day, self.slippage_pips];
        if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(SimError::Config("costs must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Long,
    Short,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Long => "long",
            Direction::Short => "short",
        })
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long" => Ok(Self::Long),
            "short" => Ok(Self::Short),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub direction: Direction,
    pub entry_date: NaiveDate,
    pub exit_date: NaiveDate,
    pub entry_price: f64,
    pub exit_price: f64,
    /// Holding period in trading days.
    pub holding_days: usize,
    pub gross_return: f64,
    pub net_return: f64,
}

pub fn gross_return(direction: Direction, entry: f64, exit: f64) -> f64 {
    match direction {
        Direction::Long => (exit - entry) / entry,
        Direction::Short => (entry - exit) / entry,
    }
}

impl Trade {
    /// A trade with zero costs applied (`net == gross`).
    pub fn new(
        direction: Direction,
        entry_date: NaiveDate,
        exit_date: NaiveDate,
        entry_price: f64,
        exit_price: f64,
        holding_days: usize,
    ) -> Self {
        let g = gross_return(direction, entry_price, exit_price);
        Self {
            direction,
            entry_date,
            exit_date,
            entry_price,
            exit_price,
            holding_days,
            gross_return: g,
            net_return: g,
        }
    }
}

/// `net = gross - spread / entry - slippage / entry - commission - swap * days`.
pub fn apply_costs(trade: &Trade, cfg: &StrategyConfig) -> Trade {
    let per_price = (cfg.spread_pips + cfg.slippage_pips) * cfg.pip_size / trade.entry_price;
    let net = trade.gross_return
        - per_price
        - cfg.commission
        - cfg.swap_per_day * trade.holding_days as f64;
    Trade {
        net_return: net,
        ..trade.clone()
    }
}

fn check_aligned(signals: &SignalSeries, closes: &[f64], cfg: &StrategyConfig) -> Result<(), SimError> {
    cfg.validate()?;
    if signals.len() != closes.len() || signals.weighted.len() != closes.len() {
        return Err(SimError::Misaligned {
            signals: signals.len(),
            prices: closes.len(),
        });
    }
    Ok(())
}

fn open_trade(
    direction: Direction,
    signals: &SignalSeries,
    closes: &[f64],
    entry: usize,
    exit: usize,
    cfg: &StrategyConfig,
) -> Trade {
    let t = Trade::new(
        direction,
        signals.dates[entry],
        signals.dates[exit],
        closes[entry],
        closes[exit],
        exit - entry,
    );
    apply_costs(&t, cfg)
}

/// Trades sorted by entry day, longs before shorts on the same day.
pub fn fixed_horizon_sim(
    signals: &SignalSeries,
    closes: &[f64],
    cfg: &StrategyConfig,
) -> Result<(Vec<Trade>, SimulationReport), SimError> {
    check_aligned(signals, closes, cfg)?;
    let mut trades = Vec::new();
    for (i, &w) in signals.weighted.iter().enumerate() {
        let exit = i + cfg.horizon;
        if exit >= closes.len() {
            break;
        }
        if w >= cfg.long_threshold {
            trades.push(open_trade(Direction::Long, signals, closes, i, exit, cfg));
        }
        if w <= cfg.short_threshold {
            trades.push(open_trade(Direction::Short, signals, closes, i, exit, cfg));
        }
    }
    let report = summarize(&trades);
    Ok((trades, report))
}

/// Trades sorted by exit day, longs before shorts on the same day.
pub fn dynamic_sim(
    signals: &SignalSeries,
    closes: &[f64],
    cfg: &StrategyConfig,
) -> Result<(Vec<Trade>, SimulationReport), SimError> {
    check_aligned(signals, closes, cfg)?;
    let last = closes.len() - 1;
    let mut trades = Vec::new();
    let mut long: Option<usize> = None;
    let mut short: Option<usize> = None;
    for (i, &w) in signals.weighted.iter().enumerate() {
        let sides = [
            (Direction::Long, &mut long, w >= cfg.long_threshold),
            (Direction::Short, &mut short, w <= cfg.short_threshold),
        ];
        for (dir, slot, active) in sides {
            match *slot {
                Some(entry) if !active || i == last => {
                    trades.push(open_trade(dir, signals, closes, entry, i, cfg));
                    *slot = None;
                }
                None if active && i < last => *slot = Some(i),
                _ => {}
            }
        }
    }
    let report = summarize(&trades);
    Ok((trades, report))
}

pub fn simulate(
    signals: &SignalSeries,
    closes: &[f64],
    cfg: &StrategyConfig,
) -> Result<(Vec<Trade>, SimulationReport), SimError> {
    match cfg.regime {
        Regime::FixedHorizon => fixed_horizon_sim(signals, closes, cfg),
        Regime::Dynamic => dynamic_sim(signals, closes, cfg),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionSummary {
    pub winners: usize,
    pub losers: usize,
    /// Sum of per-trade net returns.
    pub total_return: f64,
}

impl DirectionSummary {
    pub fn trades(&self) -> usize {
        self.winners + self.losers
    }

    /// Percentage of winners; `None` without trades.
    pub fn win_rate(&self) -> Option<f64> {
        let n = self.trades();
        (n > 0).then(|| self.winners as f64 / n as f64 * 100.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub long: DirectionSummary,
    pub short: DirectionSummary,
}

impl SimulationReport {
    pub fn side(&self, d: Direction) -> &DirectionSummary {
        match d {
            Direction::Long => &self.long,
            Direction::Short => &self.short,
        }
    }
}

/// Counts per direction; a trade wins only with a strictly positive net return.
pub fn summarize(trades: &[Trade]) -> SimulationReport {
    let mut r = SimulationReport::default();
    for t in trades {
        let s = match t.direction {
            Direction::Long => &mut r.long,
            Direction::Short => &mut r.short,
        };
        if t.net_return > 0.0 {
            s.winners += 1;
        } else {
            s.losers += 1;
        }
        s.total_return += t.net_return;
    }
    r
}

pub fn format_win_rate(rate: Option<f64>) -> String {
    rate.map_or_else(|| "—".to_string(), |r| format!("{r:.2}"))
}

/// Return as a percentage with two decimals and an explicit sign.
pub fn format_percent(fraction: f64) -> String {
    let pct = fraction * 100.0;
    // avoid "-0.00"
    let pct = if pct.abs() < 0.005 { 0.0 } else { pct };
    format!("{pct:+.2}")
}

pub const LEDGER_HEADER: &str =
    "model,direction,entry_date,exit_date,entry_price,exit_price,gross_return,net_return";

pub fn ledger_csv(rows: &[(u8, Trade)]) -> String {
    let mut out = String::from(LEDGER_HEADER);
    out.push('\n');
    for (model, t) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            model, t.direction, t.entry_date, t.exit_date, t.entry_price, t.exit_price, t.gross_return, t.net_return
        );
    }
    out
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_row = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = w.saturating_sub(c.chars().count());
                if i < 2 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = fmt_row(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&fmt_row(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub const SUMMARY_COLUMNS: [&str; 6] = [
    "Model",
    "Direction",
    "Winning Trades",
    "Losing Trades",
    "Total Return (%)",
    "Win Rate (%)",
];

/// Per-model, per-direction counts and returns.
pub fn summary_table(reports: &[(u8, SimulationReport)]) -> String {
    let mut rows = Vec::new();
    for (model, r) in reports {
        for d in [Direction::Long, Direction::Short] {
            let s = r.side(d);
            rows.push(vec![
                model.to_string(),
                d.to_string(),
                s.winners.to_string(),
                s.losers.to_string(),
                format_percent(s.total_return),
                format_win_rate(s.win_rate()),
            ]);
        }
    }
    aligned(&SUMMARY_COLUMNS, &rows)
}

pub const TRADE_COLUMNS: [&str; 7] = [
    "Model",
    "Direction",
    "Entry Date",
    "Exit Date",
    "Entry Price",
    "Exit Price",
    "Return (%)",
];

/// Trade-by-trade listing with net returns.
pub fn trade_table(rows: &[(u8, Trade)]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(m, t)| {
            vec![
                m.to_string(),
                t.direction.to_string(),
                t.entry_date.to_string(),
                t.exit_date.to_string(),
                format!("{:.6}", t.entry_price),
                format!("{:.6}", t.exit_price),
                format_percent(t.net_return),
            ]
        })
        .collect();
    aligned(&TRADE_COLUMNS, &cells)
}
