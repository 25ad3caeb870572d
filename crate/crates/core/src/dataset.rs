//! Targets, per-model feature tables, scaling and chronological windowing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{divergence_columns, DivergenceMode, DEFAULT_WINDOW};
use crate::indicators::{self, IndicatorColumn, IndicatorParams};
use crate::ingest::{align_macro, IngestError, MacroSeries, PriceSeries};
use crate::levels::{fibonacci_columns, support_resistance_columns, FibConfig, GrouperConfig};

pub const DEFAULT_HORIZON: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown feature group {0:?}")]
    UnknownGroup(String),
    #[error("unknown model id {0} (expected 0..=9)")]
    UnknownModel(u8),
    #[error("model {model} needs group {group} but no columns were provided")]
    MissingGroup { model: u8, group: FeatureGroup },
    #[error("not enough rows: {0}")]
    Insufficient(String),
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error("frame parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Forward directional index with equal one-half weights on the forward max,
/// forward min and horizon-end moves (the weights sum to 3/2).
/// `None` when the forward window would run past the series.
pub fn directional_index(closes: &[f64], n: usize, h: usize) -> Option<f64> {
    if h == 0 || n + h >= closes.len() {
        return None;
    }
    let p = closes[n];
    let fwd = &closes[n + 1..=n + h];
    let max = fwd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = fwd.iter().copied().fold(f64::INFINITY, f64::min);
    Some(0.5 * (max - p) + 0.5 * (min - p) + 0.5 * (fwd[h - 1] - p))
}

/// Binary target: 1 when the directional index is strictly positive.
pub fn target_from_index(d: f64) -> u8 {
    u8::from(d > 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub date: NaiveDate,
    pub index: usize,
    pub directional_index: f64,
    pub target: u8,
}

/// Labels for every day with a full forward window; the last `h` days are unlabeled.
pub fn label(series: &PriceSeries, h: usize) -> Vec<Label> {
    let closes = series.closes();
    let dates = series.dates();
    (0..closes.len())
        .map_while(|n| {
            directional_index(&closes, n, h).map(|d| Label {
                date: dates[n],
                index: n,
                directional_index: d,
                target: target_from_index(d),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Price,
    Indicators,
    Fundamentals,
    Levels,
    Divergence,
    Fibonacci,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 6] = [
        FeatureGroup::Price,
        FeatureGroup::Indicators,
        FeatureGroup::Fundamentals,
        FeatureGroup::Levels,
        FeatureGroup::Divergence,
        FeatureGroup::Fibonacci,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Price => "price",
            FeatureGroup::Indicators => "indicators",
            FeatureGroup::Fundamentals => "fundamentals",
            FeatureGroup::Levels => "levels",
            FeatureGroup::Divergence => "divergence",
            FeatureGroup::Fibonacci => "fibonacci",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| DatasetError::UnknownGroup(s.to_string()))
    }
}

/// A numbered feature set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: u8,
    /// Kept in `FeatureGroup` order.
    pub groups: Vec<FeatureGroup>,
}

impl ModelSpec {
    pub fn new(id: u8, mut groups: Vec<FeatureGroup>) -> Self {
        groups.sort();
        groups.dedup();
        Self { id, groups }
    }

    /// The ten standard feature sets, 0 (price only) through 9 (everything).
    pub fn standard(id: u8) -> Result<Self, DatasetError> {
        use FeatureGroup::*;
        let groups = match id {
            0 => vec![Price],
            1 => vec![Indicators],
            2 => vec![Fundamentals],
            3 => vec![Indicators, Fundamentals],
            4 => vec![Indicators, Levels],
            5 => vec![Indicators, Fundamentals, Levels],
            6 => vec![Indicators, Levels, Divergence],
            7 => vec![Indicators, Fundamentals, Levels, Divergence],
            8 => vec![Indicators, Levels, Divergence, Fibonacci],
            9 => FeatureGroup::ALL.to_vec(),
            other => return Err(DatasetError::UnknownModel(other)),
        };
        Ok(Self::new(id, groups))
    }

    pub fn all_standard() -> Vec<Self> {
        (0..10).map(|id| Self::standard(id).expect("ids 0..10 exist")).collect()
    }
}

/// Settings for computing every feature column from raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub indicators: IndicatorParams,
    pub grouper: GrouperConfig,
    pub fibonacci: FibConfig,
    pub divergence_window: usize,
    pub divergence_mode: DivergenceMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            indicators: IndicatorParams::default(),
            grouper: GrouperConfig::default(),
            fibonacci: FibConfig::default(),
            divergence_window: DEFAULT_WINDOW,
            divergence_mode: DivergenceMode::Independent,
        }
    }
}

/// Every computed column, by group, on the price calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumns {
    pub dates: Vec<NaiveDate>,
    pub groups: BTreeMap<FeatureGroup, Vec<IndicatorColumn>>,
}

/// Computes all six groups. The fundamentals group is left out when `macros`
/// is empty. Forward-looking indicator columns are never included.
pub fn build_feature_columns(
    series: &PriceSeries,
    macros: &[MacroSeries],
    cfg: &FeatureConfig,
) -> Result<FeatureColumns, DatasetError> {
    cfg.indicators
        .validate()
        .map_err(|e| DatasetError::Config(e.to_string()))?;
    cfg.grouper
        .validate()
        .map_err(|e| DatasetError::Config(e.to_string()))?;
    let mut groups = BTreeMap::new();

    let c = series.candles();
    let price = vec![
        IndicatorColumn::new("close", c.iter().map(|c| Some(c.close)).collect()),
        IndicatorColumn::new("high", c.iter().map(|c| Some(c.high)).collect()),
        IndicatorColumn::new("low", c.iter().map(|c| Some(c.low)).collect()),
        IndicatorColumn::new("open", c.iter().map(|c| Some(c.open)).collect()),
    ];
    groups.insert(FeatureGroup::Price, price);

    let ind: Vec<IndicatorColumn> = indicators::compute_all(series, &cfg.indicators)
        .into_iter()
        .filter(|c| !indicators::is_forward_looking(&c.name))
        .collect();
    groups.insert(FeatureGroup::Indicators, ind);

    if !macros.is_empty() {
        let mut fund = Vec::with_capacity(2 * macros.len());
        for m in macros {
            let aligned = align_macro(m, series)?;
            fund.push(IndicatorColumn::new(
                aligned.key.clone(),
                aligned.latest_value.iter().map(|&v| Some(v)).collect(),
            ));
            fund.push(IndicatorColumn::new(
                format!("{}_days", aligned.key),
                aligned
                    .days_since_release
                    .iter()
                    .map(|&d| Some(f64::from(d)))
                    .collect(),
            ));
        }
        groups.insert(FeatureGroup::Fundamentals, fund);
    }

    groups.insert(
        FeatureGroup::Levels,
        support_resistance_columns(series, &cfg.grouper),
    );
    let sqz = indicators::squeeze_with(series, &cfg.indicators.sqz);
    groups.insert(
        FeatureGroup::Divergence,
        divergence_columns(series, &sqz, cfg.divergence_window, cfg.divergence_mode),
    );
    groups.insert(
        FeatureGroup::Fibonacci,
        fibonacci_columns(series, &cfg.fibonacci),
    );

    for cols in groups.values_mut() {
        cols.sort_by(|a, b| a.name.cmp(&b.name));
    }
    Ok(FeatureColumns {
        dates: series.dates(),
        groups,
    })
}

/// Per-day named feature values for one model plus the target, with absent
/// values kept. Serialises to the comma-separated frame file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub model: ModelSpec,
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// One column per name.
    pub columns: Vec<Vec<Option<f64>>>,
    pub targets: Vec<Option<u8>>,
    /// Price-series row index of each date.
    pub price_index: Vec<usize>,
}

impl FeatureFrame {
    /// Joins the model's groups (group order, then alphabetical) with the labels.
    pub fn for_model(
        model: &ModelSpec,
        columns: &FeatureColumns,
        labels: &[Label],
    ) -> Result<Self, DatasetError> {
        let mut names = Vec::new();
        let mut cols = Vec::new();
        for g in &model.groups {
            let group = columns.groups.get(g).ok_or(DatasetError::MissingGroup {
                model: model.id,
                group: *g,
            })?;
            for c in group {
                names.push(c.name.clone());
                cols.push(c.values.clone());
            }
        }
        let mut targets = vec![None; columns.dates.len()];
        for l in labels {
            if let Some(t) = targets.get_mut(l.index) {
                *t = Some(l.target);
            }
        }
        Ok(Self {
            model: model.clone(),
            dates: columns.dates.clone(),
            names,
            columns: cols,
            targets,
            price_index: (0..columns.dates.len()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.columns[col][row]
    }

    /// Writes `date,<features...>,target`, preceded by `# ` comment lines.
    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w, comments)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "# model={}", self.model.id)?;
        let groups: Vec<&str> = self.model.groups.iter().map(|g| g.as_str()).collect();
        writeln!(w, "# groups={}", groups.join(";"))?;
        write!(w, "date")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w, ",target")?;
        for r in 0..self.len() {
            write!(w, "{}", self.dates[r])?;
            for c in &self.columns {
                match c[r] {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            match self.targets[r] {
                Some(t) => writeln!(w, ",{t}")?,
                None => writeln!(w, ",")?,
            }
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut model_id = None;
        let mut groups = None;
        let mut lines = text.lines().enumerate().peekable();
        while let Some((_, l)) = lines.peek() {
            let Some(c) = l.strip_prefix('#') else { break };
            let c = c.trim();
            if let Some(v) = c.strip_prefix("model=") {
                model_id = v.parse::<u8>().ok();
            } else if let Some(v) = c.strip_prefix("groups=") {
                let gs: Result<Vec<FeatureGroup>, _> =
                    v.split(';').filter(|s| !s.is_empty()).map(str::parse).collect();
                groups = Some(gs?);
            }
            lines.next();
        }
        let perr = |line: usize, msg: String| DatasetError::Parse {
            line: line as u64 + 1,
            msg,
        };
        let (hline, header) = lines
            .next()
            .ok_or_else(|| perr(0, "missing header".into()))?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() < 2 || fields[0] != "date" || fields[fields.len() - 1] != "target" {
            return Err(perr(hline, "header must be date,...,target".into()));
        }
        let names: Vec<String> = fields[1..fields.len() - 1].iter().map(|s| s.to_string()).collect();
        let mut dates = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        let mut targets = Vec::new();
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != names.len() + 2 {
                return Err(perr(ln, format!("expected {} fields, got {}", names.len() + 2, f.len())));
            }
            dates.push(
                NaiveDate::parse_from_str(f[0], "%Y-%m-%d")
                    .map_err(|e| perr(ln, format!("bad date {:?}: {e}", f[0])))?,
            );
            for (i, col) in columns.iter_mut().enumerate() {
                let s = f[i + 1];
                col.push(if s.is_empty() {
                    None
                } else {
                    Some(s.parse::<f64>().map_err(|e| perr(ln, format!("bad value {s:?}: {e}")))?)
                });
            }
            let t = f[f.len() - 1];
            targets.push(match t {
                "" => None,
                "0" => Some(0),
                "1" => Some(1),
                other => return Err(perr(ln, format!("bad target {other:?}"))),
            });
        }
        let model = ModelSpec::new(
            model_id.unwrap_or(0),
            groups.unwrap_or_default(),
        );
        let price_index = (0..dates.len()).collect();
        Ok(Self {
            model,
            dates,
            names,
            columns,
            targets,
            price_index,
        })
    }
}

/// Treatment of absent support/resistance or Fibonacci slots when assembling
/// a table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingLevels {
    /// Drop the day.
    Drop,
    /// Substitute the day's close: no level between the price and that side.
    #[default]
    FillClose,
}

impl FromStr for MissingLevels {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop" => Ok(Self::Drop),
            "fill_close" => Ok(Self::FillClose),
            other => Err(DatasetError::Config(format!("unknown missing-levels policy {other:?}"))),
        }
    }
}

/// Level family (`SR` or `FIB`) of a nearest-level slot column.
fn level_family(name: &str) -> Option<&'static str> {
    if !["_R1", "_R2", "_S1", "_S2"].iter().any(|s| name.ends_with(s)) {
        return None;
    }
    if name.starts_with("SR_") {
        Some("SR")
    } else if name.starts_with("FIB_") {
        Some("FIB")
    } else {
        None
    }
}

/// Complete rows of a frame: every feature present and a target known.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub model_id: u8,
    pub names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub price_index: Vec<usize>,
    /// Row-major, `len() * width()` values.
    pub values: Vec<f64>,
    pub targets: Vec<u8>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.width();
        &self.values[r * w..(r + 1) * w]
    }

    /// Builds the table from a frame. `closes` (indexed like the frame's
    /// `price_index`) is needed for [`MissingLevels::FillClose`].
    pub fn from_frame(
        frame: &FeatureFrame,
        closes: Option<&[f64]>,
        missing: MissingLevels,
    ) -> Result<Self, DatasetError> {
        let families: Vec<Option<&str>> = frame.names.iter().map(|n| level_family(n)).collect();
        if missing == MissingLevels::FillClose && families.iter().any(Option::is_some) && closes.is_none() {
            return Err(DatasetError::Config("fill_close needs closing prices".into()));
        }
        let mut t = FeatureTable {
            model_id: frame.model.id,
            names: frame.names.clone(),
            dates: Vec::new(),
            price_index: Vec::new(),
            values: Vec::new(),
            targets: Vec::new(),
        };
        let mut row = Vec::with_capacity(frame.names.len());
        'rows: for r in 0..frame.len() {
            let Some(target) = frame.targets[r] else { continue };
            row.clear();
            // a family with no slot at all is still warming up; never fill it
            let computed = |fam: &str| {
                frame
                    .columns
                    .iter()
                    .zip(&families)
                    .any(|(col, f)| *f == Some(fam) && col[r].is_some())
            };
            for (c, col) in frame.columns.iter().enumerate() {
                match col[r] {
                    Some(v) => row.push(v),
                    None if missing == MissingLevels::FillClose
                        && families[c].is_some_and(&computed) =>
                    {
                        let closes = closes.expect("checked above");
                        row.push(closes[frame.price_index[r]]);
                    }
                    None => continue 'rows,
                }
            }
            t.dates.push(frame.dates[r]);
            t.price_index.push(frame.price_index[r]);
            t.values.extend_from_slice(&row);
            t.targets.push(target);
        }
        Ok(t)
    }
}

/// Joins the model's groups, keeps only complete labeled days.
pub fn assemble(
    model: &ModelSpec,
    columns: &FeatureColumns,
    labels: &[Label],
    closes: &[f64],
    missing: MissingLevels,
) -> Result<FeatureTable, DatasetError> {
    let frame = FeatureFrame::for_model(model, columns, labels)?;
    FeatureTable::from_frame(&frame, Some(closes), missing)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    #[default]
    MinMax,
    ZScore,
}

impl FromStr for ScalingKind {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min_max" | "minmax" => Ok(Self::MinMax),
            "z_score" | "zscore" => Ok(Self::ZScore),
            other => Err(DatasetError::Config(format!("unknown scaling {other:?}"))),
        }
    }
}

/// Per-feature affine scaling `(x - offset) / span`; a zero span maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalingKind,
    pub offset: Vec<f64>,
    pub span: Vec<f64>,
}

impl Scaler {
    /// Fits on the first `rows` rows of the table.
    pub fn fit(table: &FeatureTable, rows: usize, kind: ScalingKind) -> Self {
        let w = table.width();
        let mut offset = vec![0.0; w];
        let mut span = vec![0.0; w];
        for c in 0..w {
            let col = (0..rows).map(|r| table.values[r * w + c]);
            match kind {
                ScalingKind::MinMax => {
                    let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    });
                    offset[c] = lo;
                    span[c] = hi - lo;
                }
                ScalingKind::ZScore => {
                    let n = rows as f64;
                    let mean = col.clone().sum::<f64>() / n;
                    let var = col.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    offset[c] = mean;
                    span[c] = var.sqrt();
                }
            }
        }
        Self { kind, offset, span }
    }

    pub fn apply(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(row.iter().enumerate().map(|(c, &x)| {
            if self.span[c] == 0.0 {
                0.0
            } else {
                (x - self.offset[c]) / self.span[c]
            }
        }));
    }

    pub fn width(&self) -> usize {
        self.offset.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Sliding windows of `back_days` consecutive scaled rows, each labeled with
/// the target of its last row. Windows share one scaled matrix.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub split: Split,
    pub back_days: usize,
    pub feature_names: Vec<String>,
    pub scaler: Scaler,
    scaled: Arc<Vec<f64>>,
    width: usize,
    /// Table row of each window's last day.
    pub ends: Vec<usize>,
    pub targets: Vec<u8>,
    pub dates: Vec<NaiveDate>,
    pub price_index: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.width
    }

    /// Row-major `back_days x feature_dim` slice for sample `i`.
    pub fn window(&self, i: usize) -> &[f64] {
        let end = self.ends[i];
        let start = end + 1 - self.back_days;
        &self.scaled[start * self.width..(end + 1) * self.width]
    }

    /// Builds windows from an already-fitted scaler, one per row from
    /// `first_end` on. Used to score out-of-sample tables with a stored scaler.
    pub fn with_scaler(
        table: &FeatureTable,
        scaler: Scaler,
        back_days: usize,
        first_end: usize,
        split: Split,
    ) -> Result<Self, DatasetError> {
        if scaler.width() != table.width() {
            return Err(DatasetError::Config(format!(
                "scaler width {} does not match table width {}",
                scaler.width(),
                table.width()
            )));
        }
        if back_days == 0 {
            return Err(DatasetError::Config("back_days must be >= 1".into()));
        }
        let mut scaled = Vec::with_capacity(table.values.len());
        for r in 0..table.len() {
            scaler.apply(table.row(r), &mut scaled);
        }
        let ends: Vec<usize> = (first_end.max(back_days - 1)..table.len()).collect();
        Ok(Self::from_parts(table, scaler, Arc::new(scaled), back_days, ends, split))
    }

    fn from_parts(
        table: &FeatureTable,
        scaler: Scaler,
        scaled: Arc<Vec<f64>>,
        back_days: usize,
        ends: Vec<usize>,
        split: Split,
    ) -> Self {
        Self {
            split,
            back_days,
            feature_names: table.names.clone(),
            scaler,
            scaled,
            width: table.width(),
            targets: ends.iter().map(|&e| table.targets[e]).collect(),
            dates: ends.iter().map(|&e| table.dates[e]).collect(),
            price_index: ends.iter().map(|&e| table.price_index[e]).collect(),
            ends,
        }
    }
}

/// Chronological split at `split_fraction` of the rows; scaling is fitted on
/// the training rows only. Test windows may reach back into training rows for
/// feature history, but their targets are all test rows.
pub fn scale_and_window(
    table: &FeatureTable,
    back_days: usize,
    split_fraction: f64,
    kind: ScalingKind,
) -> Result<(WindowedDataset, WindowedDataset), DatasetError> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(DatasetError::Config(format!(
            "split fraction {split_fraction} not in (0, 1)"
        )));
    }
    if back_days == 0 {
        return Err(DatasetError::Config("back_days must be >= 1".into()));
    }
    let n = table.len();
    if n <= back_days {
        return Err(DatasetError::Insufficient(format!(
            "{n} rows for a {back_days}-day look-back"
        )));
    }
    let split_at = (n as f64 * split_fraction).floor() as usize;
    if split_at < back_days || split_at >= n {
        return Err(DatasetError::Insufficient(format!(
            "split at row {split_at} of {n} leaves no train or test windows"
        )));
    }
    let scaler = Scaler::fit(table, split_at, kind);
    let mut scaled = Vec::with_capacity(table.values.len());
    for r in 0..n {
        scaler.apply(table.row(r), &mut scaled);
    }
    let scaled = Arc::new(scaled);
    let train_ends: Vec<usize> = (back_days - 1..split_at).collect();
    let test_ends: Vec<usize> = (split_at..n).collect();
    let train = WindowedDataset::from_parts(
        table,
        scaler.clone(),
        scaled.clone(),
        back_days,
        train_ends,
        Split::Train,
    );
    let test = WindowedDataset::from_parts(table, scaler, scaled, back_days, test_ends, Split::Test);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, generate_synthetic_macro, Candle, Regime};
    use chrono::Duration;

    fn closes_series(closes: &[f64]) -> PriceSeries {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        PriceSeries::new(
            closes
                .iter()
                .enumerate()
                .map(|(i, &c)| Candle {
                    date: d0 + Duration::days(i as i64),
                    open: c,
                    high: c,
                    low: c,
                    close: c,
                })
                .collect(),
        )
        .unwrap()
    }

    fn table(values: Vec<Vec<f64>>) -> FeatureTable {
        let n = values.len();
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        FeatureTable {
            model_id: 0,
            names: (0..values[0].len()).map(|i| format!("f{i}")).collect(),
            dates: (0..n).map(|i| d0 + Duration::days(i as i64)).collect(),
            price_index: (0..n).collect(),
            values: values.concat(),
            targets: (0..n).map(|i| (i % 2) as u8).collect(),
        }
    }

    #[test]
    fn directional_index_examples() {
        assert_eq!(directional_index(&[1.0, 1.0, 1.0, 1.0], 0, 3), Some(0.0));
        assert_eq!(target_from_index(0.0), 0);
        let d = directional_index(&[1.0, 1.1, 0.9, 1.05], 0, 3).unwrap();
        assert!((d - 0.025).abs() < 1e-12);
        assert_eq!(target_from_index(d), 1);
        assert_eq!(directional_index(&[1.0, 1.1, 0.9], 0, 3), None);
    }

    #[test]
    fn labels_on_monotone_series() {
        let up: Vec<f64> = (1..=40).map(|i| 1.0 + i as f64 / 100.0).collect();
        let l = label(&closes_series(&up), 10);
        assert_eq!(l.len(), 30);
        assert!(l.iter().all(|l| l.target == 1));
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert!(label(&closes_series(&down), 10).iter().all(|l| l.target == 0));
    }

    #[test]
    fn model_specs() {
        assert_eq!(ModelSpec::standard(0).unwrap().groups, vec![FeatureGroup::Price]);
        assert_eq!(ModelSpec::standard(2).unwrap().groups, vec![FeatureGroup::Fundamentals]);
        assert_eq!(ModelSpec::standard(9).unwrap().groups.len(), 6);
        assert!(matches!(ModelSpec::standard(10), Err(DatasetError::UnknownModel(10))));
        assert!("bogus".parse::<FeatureGroup>().is_err());
    }

    #[test]
    fn model_columns() {
        let s = generate_synthetic(5, 400, Regime::RandomWalk).unwrap();
        let m = generate_synthetic_macro(5, &s);
        let cols = build_feature_columns(&s, &m, &FeatureConfig::default()).unwrap();
        let labels = label(&s, 10);
        let f0 = FeatureFrame::for_model(&ModelSpec::standard(0).unwrap(), &cols, &labels).unwrap();
        assert_eq!(f0.names, vec!["close", "high", "low", "open"]);
        let widths: Vec<usize> = ModelSpec::all_standard()
            .iter()
            .map(|m| FeatureFrame::for_model(m, &cols, &labels).unwrap().names.len())
            .collect();
        assert!(widths[..9].iter().all(|&w| w < widths[9]));
        assert_eq!(widths[2], 32);
        assert!(f0.names.iter().all(|n| !n.starts_with("CS_")));
    }

    #[test]
    fn frame_round_trip() {
        let s = generate_synthetic(6, 300, Regime::RandomWalk).unwrap();
        let m = generate_synthetic_macro(6, &s);
        let cols = build_feature_columns(&s, &m, &FeatureConfig::default()).unwrap();
        let frame =
            FeatureFrame::for_model(&ModelSpec::standard(9).unwrap(), &cols, &label(&s, 10)).unwrap();
        let mut buf = Vec::new();
        frame.write_to(&mut buf, &["provenance x".into()]).unwrap();
        let back = FeatureFrame::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn min_max_scaling_example() {
        let t = table(vec![vec![0.0], vec![5.0], vec![10.0], vec![20.0]]);
        let s = Scaler::fit(&t, 3, ScalingKind::MinMax);
        let mut out = Vec::new();
        for r in 0..3 {
            s.apply(t.row(r), &mut out);
        }
        assert_eq!(out, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let t = table(vec![vec![3.0, 1.0]; 10]);
        for kind in [ScalingKind::MinMax, ScalingKind::ZScore] {
            let (train, test) = scale_and_window(&t, 2, 0.8, kind).unwrap();
            assert!(train.window(0).iter().all(|&v| v == 0.0));
            assert!(test.window(0).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn window_counts() {
        let t = table((0..100).map(|i| vec![i as f64]).collect());
        let (train, test) = scale_and_window(&t, 20, 0.8, ScalingKind::MinMax).unwrap();
        assert_eq!(train.len() + test.len(), 81);
        assert_eq!(train.len(), 61);
        assert!(train.dates.last() < test.dates.first());
        assert_eq!(train.window(0).len(), 20);
        // the first test window reaches into training rows for history only
        assert_eq!(test.ends[0], 80);
        assert_eq!(test.targets[0], t.targets[80]);
        assert!(scale_and_window(&t, 100, 0.8, ScalingKind::MinMax).is_err());
        assert!(scale_and_window(&t, 20, 1.0, ScalingKind::MinMax).is_err());
    }

    #[test]
    fn missing_level_policies() {
        let s = generate_synthetic(8, 500, Regime::RandomWalk).unwrap();
        let cols = build_feature_columns(&s, &[], &FeatureConfig::default()).unwrap();
        let labels = label(&s, 10);
        let m4 = ModelSpec::standard(4).unwrap();
        let filled = assemble(&m4, &cols, &labels, &s.closes(), MissingLevels::FillClose).unwrap();
        let dropped = assemble(&m4, &cols, &labels, &s.closes(), MissingLevels::Drop).unwrap();
        assert!(dropped.len() < filled.len());
        // warm-up: squeeze needs 200 days, levels need 200 prior days
        assert_eq!(filled.dates[0], s.dates()[200]);
        assert!(matches!(
            assemble(&ModelSpec::standard(2).unwrap(), &cols, &labels, &s.closes(), MissingLevels::Drop),
            Err(DatasetError::MissingGroup { .. })
        ));
    }
}
