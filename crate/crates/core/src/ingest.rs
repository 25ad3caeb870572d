//! Loading, validation and calendar alignment of daily price and macro data.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PRICE_HEADER: [&str; 5] = ["date", "open", "high", "low", "close"];
pub const MACRO_HEADER: [&str; 2] = ["release_date", "value"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("invalid candle on {date}: {msg}")]
    InvalidCandle { date: NaiveDate, msg: String },
    #[error("series is not strictly increasing in date at {date}")]
    Unordered { date: NaiveDate },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("no macro release at or before {day} in series {series}")]
    Coverage { series: String, day: NaiveDate },
    #[error("bad macro file name {0}: expected <US|EA>_<name>.csv")]
    FileName(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl Candle {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |msg: &str| IngestError::InvalidCandle {
            date: self.date,
            msg: msg.to_string(),
        };
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(bad("prices must be finite and strictly positive"));
        }
        if self.low > self.high {
            return Err(bad("high < low"));
        }
        if self.open < self.low || self.open > self.high {
            return Err(bad("open outside [low, high]"));
        }
        if self.close < self.low || self.close > self.high {
            return Err(bad("close outside [low, high]"));
        }
        Ok(())
    }
}

/// Validated daily OHLC series with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    candles: Vec<Candle>,
}

impl PriceSeries {
    pub fn new(candles: Vec<Candle>) -> Result<Self, IngestError> {
        for (i, c) in candles.iter().enumerate() {
            c.validate()?;
            if i > 0 && candles[i - 1].date >= c.date {
                return Err(IngestError::Unordered { date: c.date });
            }
        }
        Ok(Self { candles })
    }

    pub fn candles(&self) -> &[Candle] {
        &self.candles
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.candles.iter().map(|c| c.date).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.close).collect()
    }

    pub fn highs(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.high).collect()
    }

    pub fn lows(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.low).collect()
    }

    /// Series truncated to the first `len` days.
    pub fn prefix(&self, len: usize) -> PriceSeries {
        PriceSeries {
            candles: self.candles[..len.min(self.candles.len())].to_vec(),
        }
    }

    /// Every price multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> PriceSeries {
        PriceSeries {
            candles: self
                .candles
                .iter()
                .map(|c| Candle {
                    date: c.date,
                    open: c.open * factor,
                    high: c.high * factor,
                    low: c.low * factor,
                    close: c.close * factor,
                })
                .collect(),
        }
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.candles.binary_search_by_key(&date, |c| c.date).ok()
    }
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate, IngestError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| IngestError::Parse {
        line,
        msg: format!("bad date {s:?}: {e}"),
    })
}

fn parse_num(s: &str, line: u64, field: &str) -> Result<f64, IngestError> {
    s.trim().parse::<f64>().map_err(|e| IngestError::Parse {
        line,
        msg: format!("bad {field} {s:?}: {e}"),
    })
}

fn check_header(
    headers: &csv::StringRecord,
    expected: &[&str],
) -> Result<(), IngestError> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(IngestError::Parse {
            line: 1,
            msg: format!("expected header {:?}, got {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>, IngestError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_err(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::Parse {
        line,
        msg: e.to_string(),
    }
}

/// Reads a `date,open,high,low,close` file. Rows are sorted by date before validation.
pub fn load_price_series(path: &Path) -> Result<PriceSeries, IngestError> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Err(IngestError::Empty(path.display().to_string()));
    }
    check_header(&headers, &PRICE_HEADER)?;
    let mut candles = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = record_line(&rec);
        if rec.len() != 5 {
            return Err(IngestError::Parse {
                line,
                msg: format!("expected 5 fields, got {}", rec.len()),
            });
        }
        candles.push(Candle {
            date: parse_date(&rec[0], line)?,
            open: parse_num(&rec[1], line, "open")?,
            high: parse_num(&rec[2], line, "high")?,
            low: parse_num(&rec[3], line, "low")?,
            close: parse_num(&rec[4], line, "close")?,
        });
    }
    if candles.is_empty() {
        return Err(IngestError::Empty(path.display().to_string()));
    }
    candles.sort_by_key(|c| c.date);
    PriceSeries::new(candles)
}

/// Writes the series in the OHLC file format. `f64` Display is the shortest
/// representation that parses back to the same bits.
pub fn save_price_series(series: &PriceSeries, path: &Path) -> Result<(), IngestError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "{}", PRICE_HEADER.join(","))?;
        for c in series.candles() {
            writeln!(w, "{},{},{},{},{}", c.date, c.open, c.high, c.low, c.close)?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    US,
    EA,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::US => f.write_str("US"),
            Region::EA => f.write_str("EA"),
        }
    }
}

impl FromStr for Region {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "US" => Ok(Region::US),
            "EA" => Ok(Region::EA),
            other => Err(format!("unknown region tag {other:?}")),
        }
    }
}

/// An irregularly published macroeconomic variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSeries {
    pub name: String,
    pub region: Region,
    releases: Vec<(NaiveDate, f64)>,
}

impl MacroSeries {
    pub fn new(
        name: impl Into<String>,
        region: Region,
        releases: Vec<(NaiveDate, f64)>,
    ) -> Result<Self, IngestError> {
        for w in releases.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(IngestError::Unordered { date: w[1].0 });
            }
        }
        Ok(Self {
            name: name.into(),
            region,
            releases,
        })
    }

    pub fn releases(&self) -> &[(NaiveDate, f64)] {
        &self.releases
    }

    pub fn len(&self) -> usize {
        self.releases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.releases.is_empty()
    }

    /// Column stem used in feature frames, e.g. `EA_unemployment_annual`.
    pub fn key(&self) -> String {
        format!("{}_{}", self.region, self.name)
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.key())
    }
}

fn split_macro_file_name(path: &Path) -> Result<(Region, String), IngestError> {
    let bad = || IngestError::FileName(path.display().to_string());
    let stem = path
        .file_name()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_suffix(".csv"))
        .ok_or_else(bad)?;
    let (tag, name) = stem.split_once('_').ok_or_else(bad)?;
    if name.is_empty() {
        return Err(bad());
    }
    let region = tag.parse::<Region>().map_err(|msg| IngestError::Parse { line: 0, msg })?;
    Ok((region, name.to_string()))
}

/// Reads one `<region>_<name>.csv` release file.
pub fn load_macro_series(path: &Path) -> Result<MacroSeries, IngestError> {
    let (region, name) = split_macro_file_name(path)?;
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    check_header(&headers, &MACRO_HEADER)?;
    let mut releases = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = record_line(&rec);
        if rec.len() != 2 {
            return Err(IngestError::Parse {
                line,
                msg: format!("expected 2 fields, got {}", rec.len()),
            });
        }
        let value = parse_num(&rec[1], line, "value")?;
        if !value.is_finite() {
            return Err(IngestError::Parse {
                line,
                msg: "non-finite value".into(),
            });
        }
        releases.push((parse_date(&rec[0], line)?, value));
    }
    MacroSeries::new(name, region, releases)
}

/// Loads every `*.csv` in `dir`, ordered by file name.
pub fn load_macro_dir(dir: &Path) -> Result<Vec<MacroSeries>, IngestError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_macro_series(p)).collect()
}

pub fn save_macro_series(series: &MacroSeries, path: &Path) -> Result<(), IngestError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "{}", MACRO_HEADER.join(","))?;
        for (d, v) in series.releases() {
            writeln!(w, "{d},{v}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(path))
}

/// Step-function view of a macro series on a trading calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedMacroFeature {
    pub key: String,
    pub latest_value: Vec<f64>,
    pub days_since_release: Vec<u32>,
}

/// Assigns each calendar day the most recent release at or before it, together
/// with the calendar-day distance to that release.
pub fn align_macro(
    series: &MacroSeries,
    calendar: &PriceSeries,
) -> Result<AlignedMacroFeature, IngestError> {
    let releases = series.releases();
    let mut latest_value = Vec::with_capacity(calendar.len());
    let mut days_since_release = Vec::with_capacity(calendar.len());
    let mut next = 0usize;
    for c in calendar.candles() {
        while next < releases.len() && releases[next].0 <= c.date {
            next += 1;
        }
        if next == 0 {
            return Err(IngestError::Coverage {
                series: series.key(),
                day: c.date,
            });
        }
        let (date, value) = releases[next - 1];
        latest_value.push(value);
        days_since_release.push((c.date - date).num_days() as u32);
    }
    Ok(AlignedMacroFeature {
        key: series.key(),
        latest_value,
        days_since_release,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    RandomWalk,
    Trending,
    MeanReverting,
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random_walk" => Ok(Regime::RandomWalk),
            "trending" => Ok(Regime::Trending),
            "mean_reverting" => Ok(Regime::MeanReverting),
            other => Err(format!("unknown regime {other:?}")),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::RandomWalk => "random_walk",
            Regime::Trending => "trending",
            Regime::MeanReverting => "mean_reverting",
        })
    }
}

pub const SYNTH_START: (i32, u32, u32) = (2012, 1, 2);
pub const SYNTH_BASE_PRICE: f64 = 1.10;
const DAILY_VOL: f64 = 0.005;
pub const TRENDING_DRIFT: f64 = 0.0015;
const MEAN_REVERSION: f64 = 0.05;

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut d = d + Duration::days(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d += Duration::days(1);
    }
    d
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Deterministic synthetic EUR/USD-like daily bars on a Monday–Friday calendar.
/// Prices are rounded to six decimals, like quoted FX rates.
pub fn generate_synthetic(
    seed: u64,
    days: usize,
    regime: Regime,
) -> Result<PriceSeries, IngestError> {
    if days == 0 {
        return Err(IngestError::Empty("synthetic series needs days >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, m, d) = SYNTH_START;
    let mut date = NaiveDate::from_ymd_opt(y, m, d).expect("valid start date");
    let base = SYNTH_BASE_PRICE.ln();
    let mut log_close = base;
    let mut candles = Vec::with_capacity(days);
    for i in 0..days {
        let z: f64 = rng.sample(StandardNormal);
        let open = round6(log_close.exp());
        if i > 0 {
            log_close += match regime {
                Regime::RandomWalk => DAILY_VOL * z,
                Regime::Trending => TRENDING_DRIFT + DAILY_VOL * z,
                Regime::MeanReverting => MEAN_REVERSION * (base - log_close) + DAILY_VOL * z,
            };
        }
        let close = round6(log_close.exp());
        let wick_hi: f64 = rng.random::<f64>() * DAILY_VOL * 0.6;
        let wick_lo: f64 = rng.random::<f64>() * DAILY_VOL * 0.6;
        let high = round6(open.max(close) * (1.0 + wick_hi));
        let low = round6(open.min(close) * (1.0 - wick_lo));
        candles.push(Candle {
            date,
            open,
            high: high.max(open).max(close),
            low: low.min(open).min(close),
            close,
        });
        date = next_business_day(date);
    }
    PriceSeries::new(candles)
}

/// Publication frequency of a synthetic macro series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Monthly,
    Quarterly,
    Annual,
}

impl Frequency {
    fn months(self) -> u32 {
        match self {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
            Frequency::Annual => 12,
        }
    }
}

/// The eight variables tracked per region, with their publication cadence.
pub const MACRO_VARIABLES: [(&str, Frequency); 8] = [
    ("hicp_inflation_rate", Frequency::Monthly),
    ("hicp_inflation_contributions", Frequency::Monthly),
    ("unemployment_annual", Frequency::Annual),
    ("unemployment_quarterly_sa", Frequency::Quarterly),
    ("net_external_debt_quarterly", Frequency::Quarterly),
    ("gov_gross_debt_edp_annual", Frequency::Annual),
    ("gov_debt_by_components_annual", Frequency::Annual),
    ("gov_gross_debt_edp_quarterly", Frequency::Quarterly),
];

/// Sixteen synthetic macro series (8 per region) whose releases start a year
/// before `calendar` and run past its end.
pub fn generate_synthetic_macro(seed: u64, calendar: &PriceSeries) -> Vec<MacroSeries> {
    let (Some(first), Some(last)) = (calendar.candles().first(), calendar.candles().last()) else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_6372_6f00_0000);
    let mut out = Vec::with_capacity(16);
    for region in [Region::EA, Region::US] {
        for (name, freq) in MACRO_VARIABLES {
            let lag_days = rng.random_range(5..25i64);
            let mut level: f64 = rng.random_range(1.0..90.0);
            let step = level * 0.02;
            let start_year = first.date.year() - 1;
            let mut releases = Vec::new();
            let mut month0 = 0u32;
            loop {
                let y = start_year + (month0 / 12) as i32;
                let m = month0 % 12 + 1;
                let period = NaiveDate::from_ymd_opt(y, m, 1).expect("valid month");
                let release = period + Duration::days(lag_days);
                if release > last.date {
                    break;
                }
                let z: f64 = rng.sample(StandardNormal);
                level += step * z;
                releases.push((release, round6(level)));
                month0 += freq.months();
            }
            out.push(
                MacroSeries::new(name, region, releases).expect("generated releases are ordered"),
            );
        }
    }
    out
}
