//! Classification metrics, the hyperparameter grid driver and its
//! aggregation tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{scale_and_window, FeatureTable, Scaler, ScalingKind};
use crate::net::{self, LstmConfig, LstmNetwork, NetError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("undefined metric: {0}")]
    Undefined(&'static str),
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("empty input")]
    Empty,
    #[error("results store line {line}: {msg}")]
    Store { line: usize, msg: String },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Mann–Whitney AUC: the probability a random positive outscores a random
/// negative, ties counting one half. Computed from the exact integer count
/// `2U` so the result does not depend on summation order.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let positives = labels.iter().filter(|&&y| y == 1).count() as u64;
    let negatives = scores.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::Undefined("AUC needs both classes"));
    }
    // walk tie groups in ascending score order
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * positives * negatives) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Confusion counts with `score >= threshold` predicted positive.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion, EvalError> {
    check_lengths(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64, EvalError> {
    let c = confusion(scores, labels, threshold)?;
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

pub fn recall(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64, EvalError> {
    let c = confusion(scores, labels, threshold)?;
    if c.tp + c.fn_ == 0 {
        return Err(EvalError::Undefined("recall needs at least one positive"));
    }
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

/// Lift per equal-count decile of the descending score order (stable for
/// ties): positive rate in the bucket over the overall positive rate.
/// Bucket `k` holds sorted positions `[k n / d, (k + 1) n / d)`.
pub fn lift_curve(scores: &[f64], labels: &[u8], deciles: usize) -> Result<Vec<f64>, EvalError> {
    check_lengths(scores, labels)?;
    let n = scores.len();
    if deciles == 0 || n < deciles {
        return Err(EvalError::Undefined("lift needs at least one sample per bucket"));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 {
        return Err(EvalError::Undefined("lift needs a non-zero positive rate"));
    }
    let overall = positives as f64 / n as f64;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok((0..deciles)
        .map(|k| {
            let bucket = &idx[k * n / deciles..(k + 1) * n / deciles];
            let pos = bucket.iter().filter(|&&i| labels[i] == 1).count();
            (pos as f64 / bucket.len() as f64) / overall
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc_train: f64,
    pub auc_test: f64,
    pub acc_train: f64,
    pub acc_test: f64,
    pub recall_test: f64,
    pub confusion: Confusion,
    pub lift: Vec<f64>,
    pub auc_min: f64,
    pub auc_diff: f64,
    pub acc_diff: f64,
}

impl MetricsReport {
    pub fn compute(
        train_scores: &[f64],
        train_labels: &[u8],
        test_scores: &[f64],
        test_labels: &[u8],
    ) -> Result<Self, EvalError> {
        let auc_train = auc(train_scores, train_labels)?;
        let auc_test = auc(test_scores, test_labels)?;
        let acc_train = accuracy(train_scores, train_labels, DEFAULT_THRESHOLD)?;
        let acc_test = accuracy(test_scores, test_labels, DEFAULT_THRESHOLD)?;
        Ok(Self {
            auc_train,
            auc_test,
            acc_train,
            acc_test,
            recall_test: recall(test_scores, test_labels, DEFAULT_THRESHOLD)?,
            confusion: confusion(test_scores, test_labels, DEFAULT_THRESHOLD)?,
            lift: lift_curve(test_scores, test_labels, 10)?,
            auc_min: auc_train.min(auc_test),
            auc_diff: auc_train - auc_test,
            acc_diff: acc_train - acc_test,
        })
    }
}

/// The hyperparameter lattice searched per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub epochs: Vec<usize>,
    pub layers: Vec<usize>,
    pub back_days: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            epochs: vec![20, 40, 60],
            layers: vec![1, 4, 8],
            back_days: vec![20, 30],
        }
    }
}

impl HyperGrid {
    pub fn single(epochs: usize, layers: usize, back_days: usize) -> Self {
        Self {
            epochs: vec![epochs],
            layers: vec![layers],
            back_days: vec![back_days],
        }
    }

    pub fn size(&self) -> usize {
        self.epochs.len() * self.layers.len() * self.back_days.len()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.size() == 0 {
            return Err(EvalError::Grid("every axis needs at least one value".into()));
        }
        if self.layers.contains(&0) || self.back_days.contains(&0) {
            return Err(EvalError::Grid("layers and back_days must be positive".into()));
        }
        Ok(())
    }
}

/// One grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridJob {
    pub model: u8,
    pub epochs: usize,
    pub layers: usize,
    pub back_days: usize,
    pub seed: u64,
}

/// splitmix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-row seed, a pure function of the master seed and the cell coordinates.
pub fn derive_seed(master: u64, model: u8, epochs: usize, layers: usize, back_days: usize) -> u64 {
    [u64::from(model), epochs as u64, layers as u64, back_days as u64]
        .iter()
        .fold(mix(master), |acc, &v| mix(acc ^ v))
}

/// Jobs in canonical order: model, then epochs, layers, back_days.
pub fn grid_jobs(models: &[u8], grid: &HyperGrid, master_seed: u64) -> Vec<GridJob> {
    let mut jobs = Vec::with_capacity(models.len() * grid.size());
    for &model in models {
        for &epochs in &grid.epochs {
            for &layers in &grid.layers {
                for &back_days in &grid.back_days {
                    jobs.push(GridJob {
                        model,
                        epochs,
                        layers,
                        back_days,
                        seed: derive_seed(master_seed, model, epochs, layers, back_days),
                    });
                }
            }
        }
    }
    jobs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub model: u8,
    pub feature_count: usize,
    pub epochs: usize,
    pub layers: usize,
    pub back_days: usize,
    pub seed: u64,
    /// Metrics, or the reason the row failed.
    pub outcome: Result<MetricsReport, String>,
}

impl GridResult {
    pub fn job(&self) -> GridJob {
        GridJob {
            model: self.model,
            epochs: self.epochs,
            layers: self.layers,
            back_days: self.back_days,
            seed: self.seed,
        }
    }

    pub fn metrics(&self) -> Option<&MetricsReport> {
        self.outcome.as_ref().ok()
    }
}

pub const STORE_HEADER: &str = "model,feature_count,epochs,layers,back_days,seed,status,auc_train,auc_test,\
acc_train,acc_test,recall_test,tp,fp,tn,fn,auc_min,auc_diff,acc_diff,lift,error";

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], " ")
}

/// One results-store line (no trailing newline).
pub fn format_row(r: &GridResult) -> String {
    let head = format!(
        "{},{},{},{},{},{}",
        r.model, r.feature_count, r.epochs, r.layers, r.back_days, r.seed
    );
    match &r.outcome {
        Ok(m) => {
            let lift: Vec<String> = m.lift.iter().map(|v| v.to_string()).collect();
            format!(
                "{head},ok,{},{},{},{},{},{},{},{},{},{},{},{},{},",
                m.auc_train,
                m.auc_test,
                m.acc_train,
                m.acc_test,
                m.recall_test,
                m.confusion.tp,
                m.confusion.fp,
                m.confusion.tn,
                m.confusion.fn_,
                m.auc_min,
                m.auc_diff,
                m.acc_diff,
                lift.join(";")
            )
        }
        Err(e) => format!("{head},failed,,,,,,,,,,,,,,{}", sanitize(e)),
    }
}

fn parse_field<T: FromStr>(v: &str, name: &str, line: usize) -> Result<T, EvalError> {
    v.parse().map_err(|_| EvalError::Store {
        line,
        msg: format!("bad {name} {v:?}"),
    })
}

pub fn parse_row(text: &str, line: usize) -> Result<GridResult, EvalError> {
    let f: Vec<&str> = text.split(',').collect();
    if f.len() != 21 {
        return Err(EvalError::Store {
            line,
            msg: format!("expected 21 fields, found {}", f.len()),
        });
    }
    let outcome = match f[6] {
        "ok" => {
            let lift = if f[19].is_empty() {
                Vec::new()
            } else {
                f[19]
                    .split(';')
                    .map(|v| parse_field(v, "lift", line))
                    .collect::<Result<_, _>>()?
            };
            Ok(MetricsReport {
                auc_train: parse_field(f[7], "auc_train", line)?,
                auc_test: parse_field(f[8], "auc_test", line)?,
                acc_train: parse_field(f[9], "acc_train", line)?,
                acc_test: parse_field(f[10], "acc_test", line)?,
                recall_test: parse_field(f[11], "recall_test", line)?,
                confusion: Confusion {
                    tp: parse_field(f[12], "tp", line)?,
                    fp: parse_field(f[13], "fp", line)?,
                    tn: parse_field(f[14], "tn", line)?,
                    fn_: parse_field(f[15], "fn", line)?,
                },
                lift,
                auc_min: parse_field(f[16], "auc_min", line)?,
                auc_diff: parse_field(f[17], "auc_diff", line)?,
                acc_diff: parse_field(f[18], "acc_diff", line)?,
            })
        }
        "failed" => Err(f[20].to_string()),
        other => {
            return Err(EvalError::Store {
                line,
                msg: format!("unknown status {other:?}"),
            })
        }
    };
    Ok(GridResult {
        model: parse_field(f[0], "model", line)?,
        feature_count: parse_field(f[1], "feature_count", line)?,
        epochs: parse_field(f[2], "epochs", line)?,
        layers: parse_field(f[3], "layers", line)?,
        back_days: parse_field(f[4], "back_days", line)?,
        seed: parse_field(f[5], "seed", line)?,
        outcome,
    })
}

/// Reads a results store; a missing file is an empty store. Leading `#`
/// lines are provenance comments. A truncated final line (interrupted write)
/// is ignored.
pub fn read_store(path: &Path) -> Result<Vec<GridResult>, EvalError> {
    Ok(read_store_parts(path)?.1)
}

fn read_store_parts(path: &Path) -> Result<(Vec<String>, Vec<GridResult>), EvalError> {
    if !path.exists() {
        return Ok((Vec::new(), Vec::new()));
    }
    let text = fs::read_to_string(path)?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let comments: Vec<String> = lines
        .iter()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.to_string())
        .collect();
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, l) in lines.iter().enumerate().skip(comments.len()) {
        if !header_seen {
            if *l != STORE_HEADER {
                return Err(EvalError::Store {
                    line: i + 1,
                    msg: "unexpected header".into(),
                });
            }
            header_seen = true;
            continue;
        }
        if l.is_empty() || (i + 1 == lines.len() && !complete) {
            continue;
        }
        out.push(parse_row(l, i + 1)?);
    }
    Ok((comments, out))
}

/// Rewrites the store keeping only complete rows, so appends start on a
/// clean line. Existing comment lines win over `preamble`.
fn repair_store(path: &Path, comments: &[String], preamble: &[String], rows: &[GridResult]) -> Result<(), EvalError> {
    let mut text = String::new();
    if comments.is_empty() {
        for c in preamble {
            let _ = writeln!(text, "# {c}");
        }
    } else {
        for c in comments {
            let _ = writeln!(text, "{c}");
        }
    }
    text.push_str(STORE_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format_row(r));
        text.push('\n');
    }
    let current = if path.exists() { fs::read_to_string(path)? } else { String::new() };
    if current != text {
        fs::write(path, text)?;
    }
    Ok(())
}

/// Buffers finished rows and appends them strictly in job order, so the
/// store's bytes do not depend on thread scheduling.
struct OrderedAppender<W: Write> {
    out: Option<W>,
    next: usize,
    pending: BTreeMap<usize, GridResult>,
    written: Vec<GridResult>,
}

impl<W: Write> OrderedAppender<W> {
    fn push(&mut self, index: usize, row: GridResult) -> std::io::Result<()> {
        self.pending.insert(index, row);
        while let Some(row) = self.pending.remove(&self.next) {
            if let Some(out) = self.out.as_mut() {
                writeln!(out, "{}", format_row(&row))?;
                out.flush()?;
            }
            self.written.push(row);
            self.next += 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GridSettings {
    pub grid: HyperGrid,
    /// Template for everything the grid does not vary.
    pub base: LstmConfig,
    pub master_seed: u64,
    pub split_fraction: f64,
    pub scaling: ScalingKind,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    /// Comment lines written at the top of a new results store.
    pub store_preamble: Vec<String>,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            grid: HyperGrid::default(),
            base: LstmConfig::default(),
            master_seed: 0,
            split_fraction: 0.8,
            scaling: ScalingKind::MinMax,
            jobs: None,
            store_preamble: Vec::new(),
        }
    }
}

/// A trained grid cell.
#[derive(Debug, Clone)]
pub struct CellFit {
    pub config: LstmConfig,
    pub network: LstmNetwork,
    pub scaler: Scaler,
    /// First row of the test split in the table.
    pub split_row: usize,
    pub metrics: MetricsReport,
}

/// Trains one cell exactly as the grid does; the same job and table always
/// give the same network.
pub fn fit_cell(job: &GridJob, table: &FeatureTable, settings: &GridSettings) -> Result<CellFit, String> {
    let (train, test) = scale_and_window(table, job.back_days, settings.split_fraction, settings.scaling)
        .map_err(|e| e.to_string())?;
    let config = LstmConfig {
        layers: job.layers,
        epochs: job.epochs,
        back_days: job.back_days,
        seed: job.seed,
        ..settings.base.clone()
    };
    let mut network = LstmNetwork::new(table.width(), config.hidden_size, config.layers, job.seed);
    net::train(&mut network, &train, &config).map_err(|e: NetError| e.to_string())?;
    let p_train = net::predict_series(&network, &train).map_err(|e| e.to_string())?;
    let p_test = net::predict_series(&network, &test).map_err(|e| e.to_string())?;
    let metrics = MetricsReport::compute(&p_train, &train.targets, &p_test, &test.targets)
        .map_err(|e| e.to_string())?;
    Ok(CellFit {
        config,
        network,
        scaler: train.scaler.clone(),
        split_row: test.ends[0],
        metrics,
    })
}

/// Trains and evaluates every (model, epochs, layers, back_days) cell.
///
/// With a store path, rows already present are reused and new rows are
/// appended in canonical job order, so an interrupted run resumes to the same
/// final file as a fresh one. A failing cell is recorded and the grid
/// continues. Results are returned in canonical order.
pub fn run_grid(
    tables: &[FeatureTable],
    settings: &GridSettings,
    store: Option<&Path>,
) -> Result<Vec<GridResult>, EvalError> {
    settings.grid.validate()?;
    let by_model: BTreeMap<u8, &FeatureTable> = tables.iter().map(|t| (t.model_id, t)).collect();
    if by_model.len() != tables.len() {
        return Err(EvalError::Grid("duplicate model tables".into()));
    }
    let models: Vec<u8> = tables.iter().map(|t| t.model_id).collect();
    let jobs = grid_jobs(&models, &settings.grid, settings.master_seed);

    let (comments, existing) = match store {
        Some(p) => read_store_parts(p)?,
        None => (Vec::new(), Vec::new()),
    };
    let wanted: HashSet<GridJob> = jobs.iter().copied().collect();
    let done: BTreeMap<GridJob, GridResult> = existing
        .iter()
        .filter(|r| wanted.contains(&r.job()))
        .map(|r| (r.job(), r.clone()))
        .collect();
    let writer = match store {
        Some(p) => {
            repair_store(p, &comments, &settings.store_preamble, &existing)?;
            Some(OpenOptions::new().append(true).open(p)?)
        }
        None => None,
    };
    let pending: Vec<GridJob> = jobs.iter().filter(|j| !done.contains_key(j)).copied().collect();
    let appender = Mutex::new(OrderedAppender {
        out: writer,
        next: 0,
        pending: BTreeMap::new(),
        written: Vec::new(),
    });

    let work = || -> Result<(), EvalError> {
        pending.par_iter().enumerate().try_for_each(|(i, job)| {
            let table = by_model[&job.model];
            let outcome = fit_cell(job, table, settings).map(|fit| fit.metrics);
            let row = GridResult {
                model: job.model,
                feature_count: table.width(),
                epochs: job.epochs,
                layers: job.layers,
                back_days: job.back_days,
                seed: job.seed,
                outcome,
            };
            appender
                .lock()
                .expect("appender lock")
                .push(i, row)
                .map_err(EvalError::Io)
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.unwrap_or(0))
        .build()
        .map_err(|e| EvalError::Grid(e.to_string()))?;
    pool.install(work)?;

    let fresh: BTreeMap<GridJob, GridResult> = appender
        .into_inner()
        .expect("appender lock")
        .written
        .into_iter()
        .map(|r| (r.job(), r))
        .collect();
    Ok(jobs
        .iter()
        .map(|j| done.get(j).or_else(|| fresh.get(j)).expect("every job ran").clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Model,
    Epochs,
    Layers,
    BackDays,
}

impl GroupBy {
    pub const ALL: [GroupBy; 4] = [GroupBy::Model, GroupBy::Epochs, GroupBy::Layers, GroupBy::BackDays];

    pub fn label(self) -> &'static str {
        match self {
            GroupBy::Model => "Model",
            GroupBy::Epochs => "Epochs",
            GroupBy::Layers => "Layers",
            GroupBy::BackDays => "Back days",
        }
    }

    fn key(self, r: &GridResult) -> usize {
        match self {
            GroupBy::Model => usize::from(r.model),
            GroupBy::Epochs => r.epochs,
            GroupBy::Layers => r.layers,
            GroupBy::BackDays => r.back_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: usize,
    pub max_auc_min: f64,
    pub avg_auc_min: f64,
    pub min_auc_min: f64,
    pub avg_auc_diff: f64,
    pub rows: usize,
}

pub const AGGREGATE_COLUMNS: [&str; 4] = ["MAX(AUC_min)", "AVG(AUC_min)", "MIN(AUC_min)", "AVG(AUC_diff)"];

/// MAX/AVG/MIN of `AUC_min` and the mean signed `AUC_diff` per key, ascending
/// by key. Failed rows are skipped.
pub fn aggregate(results: &[GridResult], by: GroupBy) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<usize, Vec<&MetricsReport>> = BTreeMap::new();
    for r in results {
        if let Some(m) = r.metrics() {
            groups.entry(by.key(r)).or_default().push(m);
        }
    }
    groups
        .into_iter()
        .map(|(key, ms)| {
            let n = ms.len() as f64;
            AggregateRow {
                key,
                max_auc_min: ms.iter().map(|m| m.auc_min).fold(f64::NEG_INFINITY, f64::max),
                avg_auc_min: ms.iter().map(|m| m.auc_min).sum::<f64>() / n,
                min_auc_min: ms.iter().map(|m| m.auc_min).fold(f64::INFINITY, f64::min),
                avg_auc_diff: ms.iter().map(|m| m.auc_diff).sum::<f64>() / n,
                rows: ms.len(),
            }
        })
        .collect()
}

/// Successful rows ranked by `AUC_min` descending; ties go to the smaller
/// `AUC_diff`, then fewer layers, then fewer epochs, then model id.
pub fn select_best(results: &[GridResult], top_k: usize) -> Vec<GridResult> {
    let mut ok: Vec<&GridResult> = results.iter().filter(|r| r.metrics().is_some()).collect();
    ok.sort_by(|a, b| {
        let (ma, mb) = (a.metrics().expect("filtered"), b.metrics().expect("filtered"));
        mb.auc_min
            .total_cmp(&ma.auc_min)
            .then(ma.auc_diff.total_cmp(&mb.auc_diff))
            .then(a.layers.cmp(&b.layers))
            .then(a.epochs.cmp(&b.epochs))
            .then(a.back_days.cmp(&b.back_days))
            .then(a.model.cmp(&b.model))
    });
    ok.into_iter().take(top_k).cloned().collect()
}

fn render_aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn aggregate_cells(rows: &[AggregateRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.key.to_string(),
                format!("{:.4}", r.max_auc_min),
                format!("{:.4}", r.avg_auc_min),
                format!("{:.4}", r.min_auc_min),
                format!("{:.4}", r.avg_auc_diff),
            ]
        })
        .collect()
}

fn aggregate_header(by: GroupBy) -> Vec<String> {
    std::iter::once(by.label().to_string())
        .chain(AGGREGATE_COLUMNS.iter().map(|s| s.to_string()))
        .collect()
}

/// Aggregation table as comma-separated text (full precision).
pub fn aggregate_csv(rows: &[AggregateRow], by: GroupBy) -> String {
    let mut out = aggregate_header(by).join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.key, r.max_auc_min, r.avg_auc_min, r.min_auc_min, r.avg_auc_diff
        );
    }
    out
}

/// Aggregation table as aligned plain text (4 decimals).
pub fn aggregate_text(rows: &[AggregateRow], by: GroupBy) -> String {
    render_aligned(&aggregate_header(by), &aggregate_cells(rows))
}

pub const BEST_COLUMNS: [&str; 8] = [
    "Model", "Features", "Epochs", "Layers", "Back days", "AUC_train", "AUC_test", "AUC_min",
];

fn best_cells(rows: &[GridResult]) -> Vec<Vec<String>> {
    rows.iter()
        .filter_map(|r| {
            let m = r.metrics()?;
            Some(vec![
                r.model.to_string(),
                r.feature_count.to_string(),
                r.epochs.to_string(),
                r.layers.to_string(),
                r.back_days.to_string(),
                format!("{:.4}", m.auc_train),
                format!("{:.4}", m.auc_test),
                format!("{:.4}", m.auc_min),
                format!("{:.4}", m.auc_diff),
            ])
        })
        .collect()
}

fn best_header() -> Vec<String> {
    BEST_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once("AUC_diff".to_string()))
        .collect()
}

/// Best-configuration table, comma-separated.
pub fn best_csv(rows: &[GridResult]) -> String {
    let mut out = best_header().join(",");
    out.push('\n');
    for r in rows {
        if let Some(m) = r.metrics() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.model, r.feature_count, r.epochs, r.layers, r.back_days, m.auc_train, m.auc_test, m.auc_min, m.auc_diff
            );
        }
    }
    out
}

pub fn best_text(rows: &[GridResult]) -> String {
    render_aligned(&best_header(), &best_cells(rows))
}

/// The best configuration of each model, ranked across models.
pub fn best_per_model(results: &[GridResult]) -> Vec<GridResult> {
    let mut seen = HashSet::new();
    select_best(results, usize::MAX)
        .into_iter()
        .filter(|r| seen.insert(r.model))
        .collect()
}
