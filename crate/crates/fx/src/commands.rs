//! Subcommand implementations. Every command reads and writes below the run
//! directory and is idempotent for identical inputs and config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fx_core::dataset::{
    build_feature_columns, label, FeatureFrame, FeatureGroup, FeatureTable, ModelSpec, Scaler, Split,
    WindowedDataset,
};
use fx_core::eval::{
    aggregate, aggregate_csv, aggregate_text, best_csv, best_per_model, best_text, derive_seed, fit_cell,
    read_store, run_grid, GridJob, GroupBy, MetricsReport,
};
use fx_core::ingest::{
    generate_synthetic, generate_synthetic_macro, load_macro_dir, load_price_series, save_macro_series,
    save_price_series, MacroSeries, PriceSeries,
};
use fx_core::net::{predict_series, LstmConfig, LstmNetwork};
use fx_core::sim::{
    ledger_csv, normalize_signals, normalize_signals_rolling, simulate, summary_table, trade_table, Regime,
    SimError, SimulationReport, StrategyConfig, Trade,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::provenance::Provenance;

/// Resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub jobs: Option<usize>,
    pub timestamp: bool,
}

impl Context {
    fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(command, &self.config.fingerprint(), self.timestamp)
    }

    fn out(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.config.out_dir.clone(), |p, s| p.join(s))
    }

    fn ensure_dir(&self, sub: &str) -> Result<PathBuf, CliError> {
        let dir = self.out(&[sub]);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn frame_path(&self, model: u8) -> PathBuf {
        self.out(&["features", &format!("model_{model}.csv")])
    }

    pub fn checkpoint_path(&self, model: u8) -> PathBuf {
        self.out(&["models", &format!("model_{model}.json")])
    }

    pub fn store_path(&self) -> PathBuf {
        self.out(&["grid", "results.csv"])
    }
}

fn write_with_header(path: &Path, prov: &Provenance, body: &str) -> Result<(), CliError> {
    fs::write(path, format!("{}{body}", prov.block()))?;
    Ok(())
}

fn load_prices(ctx: &Context) -> Result<(PriceSeries, PathBuf), CliError> {
    let path = ctx.config.price_path();
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "price file {} not found (run `fx synth` or set price_file)",
            path.display()
        )));
    }
    Ok((load_price_series(&path)?, path))
}

/// Macro series and their files; a missing directory means no fundamentals.
fn load_macros(ctx: &Context) -> Result<(Vec<MacroSeries>, Vec<PathBuf>), CliError> {
    let dir = ctx.config.macro_path();
    if !dir.is_dir() {
        return Ok((Vec::new(), Vec::new()));
    }
    let series = load_macro_dir(&dir)?;
    let files = series.iter().map(|s| dir.join(s.file_name())).collect();
    Ok((series, files))
}

/// Writes a synthetic price series and macro releases into the run directory.
pub fn cmd_synth(ctx: &Context, days: Option<usize>, regime: Option<fx_core::ingest::Regime>) -> Result<String, CliError> {
    let days = days.unwrap_or(ctx.config.synth_days);
    let regime = regime.unwrap_or(ctx.config.synth_regime);
    let series = generate_synthetic(ctx.config.seed, days, regime)?;
    let macros = generate_synthetic_macro(ctx.config.seed, &series);
    let price_path = ctx.config.price_path();
    let macro_dir = ctx.config.macro_path();
    if let Some(parent) = price_path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::create_dir_all(&macro_dir)?;
    save_price_series(&series, &price_path)?;
    for m in &macros {
        save_macro_series(m, &macro_dir.join(m.file_name()))?;
    }
    let mut prov = ctx.provenance("synth");
    prov.note(format!("seed={} days={days} regime={regime}", ctx.config.seed));
    prov.input("prices", &price_path)?;
    for m in &macros {
        prov.input("macro", &macro_dir.join(m.file_name()))?;
    }
    let dir = price_path.parent().map(Path::to_path_buf).unwrap_or_default();
    write_with_header(&dir.join("PROVENANCE.txt"), &prov, "")?;
    Ok(format!(
        "wrote {days} days to {} and {} macro series to {}",
        price_path.display(),
        macros.len(),
        macro_dir.display()
    ))
}

/// One feature frame per requested model.
pub fn cmd_features(ctx: &Context, models: &[u8]) -> Result<String, CliError> {
    let (series, price_path) = load_prices(ctx)?;
    let (macros, macro_files) = load_macros(ctx)?;
    let specs: Vec<ModelSpec> = models.iter().map(|&m| ModelSpec::standard(m)).collect::<Result<_, _>>()?;
    if macros.is_empty() {
        if let Some(s) = specs.iter().find(|s| s.groups.contains(&FeatureGroup::Fundamentals)) {
            return Err(CliError::Usage(format!(
                "model {} needs macro series but {} has none",
                s.id,
                ctx.config.macro_path().display()
            )));
        }
    }
    let columns = build_feature_columns(&series, &macros, &ctx.config.feature_config())?;
    let labels = label(&series, ctx.config.label_horizon);
    let mut prov = ctx.provenance("features");
    prov.input("prices", &price_path)?;
    for f in &macro_files {
        prov.input("macro", f)?;
    }
    let dir = ctx.ensure_dir("features")?;
    for spec in &specs {
        let frame = FeatureFrame::for_model(spec, &columns, &labels)?;
        frame.write_csv(&ctx.frame_path(spec.id), prov.lines())?;
    }
    Ok(format!("wrote {} feature frames to {}", specs.len(), dir.display()))
}

/// Directional index and binary target per day.
pub fn cmd_label(ctx: &Context) -> Result<String, CliError> {
    let (series, price_path) = load_prices(ctx)?;
    let labels = label(&series, ctx.config.label_horizon);
    let mut prov = ctx.provenance("label");
    prov.input("prices", &price_path)?;
    prov.note(format!("horizon={}", ctx.config.label_horizon));
    let mut body = String::from("date,directional_index,target\n");
    for l in &labels {
        let _ = writeln!(body, "{},{},{}", l.date, l.directional_index, l.target);
    }
    let path = ctx.out(&["labels.csv"]);
    fs::create_dir_all(&ctx.config.out_dir)?;
    write_with_header(&path, &prov, &body)?;
    Ok(format!("wrote {} labels to {}", labels.len(), path.display()))
}

/// A model's frame, its complete rows, and the closes on the frame's dates.
pub struct ModelData {
    pub frame: FeatureFrame,
    pub table: FeatureTable,
    pub closes: Vec<f64>,
}

pub fn load_model_data(ctx: &Context, model: u8, series: &PriceSeries) -> Result<ModelData, CliError> {
    let path = ctx.frame_path(model);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "feature frame {} not found (run `fx features` first)",
            path.display()
        )));
    }
    let frame = FeatureFrame::read_csv(&path)?;
    let all = series.closes();
    let closes = frame
        .dates
        .iter()
        .map(|d| {
            series
                .index_of(*d)
                .map(|i| all[i])
                .ok_or_else(|| CliError::Validation(format!("frame date {d} not in the price file")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let table = FeatureTable::from_frame(&frame, Some(&closes), ctx.config.missing_levels)?;
    if table.is_empty() {
        return Err(CliError::Validation(format!("model {model} has no complete labeled rows")));
    }
    Ok(ModelData { frame, table, closes })
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to score new data with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub model: ModelSpec,
    pub feature_names: Vec<String>,
    pub split_row: usize,
    pub scaler: Scaler,
    pub lstm: LstmConfig,
    pub network: LstmNetwork,
    pub metrics: MetricsReport,
    pub provenance: Vec<String>,
}

impl ModelCheckpoint {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let ck: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("bad checkpoint {}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(CliError::Validation(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }
}

fn train_job(ctx: &Context, data: &ModelData, job: &GridJob) -> Result<ModelCheckpoint, CliError> {
    let settings = ctx.config.grid_settings(ctx.jobs);
    let fit = fit_cell(job, &data.table, &settings).map_err(CliError::Runtime)?;
    let mut prov = ctx.provenance("train");
    prov.input("frame", &ctx.frame_path(job.model))?;
    prov.note(format!(
        "epochs={} layers={} back_days={} seed={}",
        job.epochs, job.layers, job.back_days, job.seed
    ));
    Ok(ModelCheckpoint {
        version: CHECKPOINT_VERSION,
        model: data.frame.model.clone(),
        feature_names: data.table.names.clone(),
        split_row: fit.split_row,
        scaler: fit.scaler,
        lstm: fit.config,
        network: fit.network,
        metrics: fit.metrics,
        provenance: prov.lines().to_vec(),
    })
}

pub fn job_for(ctx: &Context, model: u8, epochs: usize, layers: usize, back_days: usize) -> GridJob {
    GridJob {
        model,
        epochs,
        layers,
        back_days,
        seed: derive_seed(ctx.config.seed, model, epochs, layers, back_days),
    }
}

/// Trains one configuration and writes its checkpoint. The seed matches the
/// grid cell with the same coordinates.
pub fn cmd_train(
    ctx: &Context,
    model: u8,
    epochs: Option<usize>,
    layers: Option<usize>,
    back_days: Option<usize>,
) -> Result<String, CliError> {
    let base = ctx.config.lstm_base();
    let job = job_for(
        ctx,
        model,
        epochs.unwrap_or(base.epochs),
        layers.unwrap_or(base.layers),
        back_days.unwrap_or(base.back_days),
    );
    let (series, _) = load_prices(ctx)?;
    let data = load_model_data(ctx, model, &series)?;
    let ck = train_job(ctx, &data, &job)?;
    let path = ctx.checkpoint_path(model);
    ck.save(&path)?;
    Ok(format!(
        "model {model}: AUC train {:.4} test {:.4} (AUC_min {:.4}); checkpoint {}",
        ck.metrics.auc_train,
        ck.metrics.auc_test,
        ck.metrics.auc_min,
        path.display()
    ))
}

fn check_store_config(path: &Path, fingerprint: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path)?;
    let wanted = format!("config sha256={fingerprint}");
    let found = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find(|l| l.contains("config sha256="));
    match found {
        Some(l) if !l.ends_with(&wanted) => Err(CliError::Usage(format!(
            "{} was produced with a different config; remove it or choose another run directory",
            path.display()
        ))),
        _ => Ok(()),
    }
}

/// Runs the grid, then writes the aggregation and best-configuration tables.
pub fn cmd_grid(ctx: &Context) -> Result<String, CliError> {
    let (series, _) = load_prices(ctx)?;
    let mut tables = Vec::new();
    let mut prov = ctx.provenance("grid");
    for &m in &ctx.config.models {
        tables.push(load_model_data(ctx, m, &series)?.table);
        prov.input("frame", &ctx.frame_path(m))?;
    }
    let dir = ctx.ensure_dir("grid")?;
    let store = ctx.store_path();
    check_store_config(&store, &ctx.config.fingerprint())?;
    let mut settings = ctx.config.grid_settings(ctx.jobs);
    settings.store_preamble = prov.lines().to_vec();
    let results = run_grid(&tables, &settings, Some(&store))?;
    write_grid_tables(ctx, &dir, &results)?;
    let ok = results.iter().filter(|r| r.metrics().is_some()).count();
    if ok == 0 {
        return Err(CliError::Runtime(format!("all {} grid rows failed", results.len())));
    }
    Ok(format!(
        "{} rows ({} ok, {} failed) in {}",
        results.len(),
        ok,
        results.len() - ok,
        store.display()
    ))
}

fn write_grid_tables(ctx: &Context, dir: &Path, results: &[fx_core::eval::GridResult]) -> Result<(), CliError> {
    let mut prov = ctx.provenance("grid");
    prov.input("results", &ctx.store_path())?;
    for by in GroupBy::ALL {
        let name = match by {
            GroupBy::Model => "by_model",
            GroupBy::Epochs => "by_epochs",
            GroupBy::Layers => "by_layers",
            GroupBy::BackDays => "by_back_days",
        };
        let rows = aggregate(results, by);
        write_with_header(&dir.join(format!("{name}.csv")), &prov, &aggregate_csv(&rows, by))?;
        write_with_header(&dir.join(format!("{name}.txt")), &prov, &aggregate_text(&rows, by))?;
    }
    let best = best_per_model(results);
    write_with_header(&dir.join("best.csv"), &prov, &best_csv(&best))?;
    write_with_header(&dir.join("best.txt"), &prov, &best_text(&best))?;
    Ok(())
}

/// Loads a model's checkpoint, or retrains its best grid configuration when
/// no checkpoint exists yet.
fn checkpoint_for(
    ctx: &Context,
    model: u8,
    explicit: Option<&Path>,
    data: &ModelData,
) -> Result<ModelCheckpoint, CliError> {
    if let Some(p) = explicit {
        return ModelCheckpoint::load(p);
    }
    let path = ctx.checkpoint_path(model);
    if path.exists() {
        return ModelCheckpoint::load(&path);
    }
    let results = read_store(&ctx.store_path())?;
    let mine: Vec<_> = results.into_iter().filter(|r| r.model == model).collect();
    let best = best_per_model(&mine);
    let Some(best) = best.first() else {
        return Err(CliError::Usage(format!(
            "no checkpoint for model {model} and no successful grid row (run `fx train` or `fx grid`)"
        )));
    };
    let ck = train_job(ctx, data, &best.job())?;
    ck.save(&path)?;
    Ok(ck)
}

/// Signals for one model over the scored window.
pub struct ModelSignals {
    pub model: u8,
    pub dates: Vec<chrono::NaiveDate>,
    pub closes: Vec<f64>,
    pub raw: Vec<f64>,
}

pub fn score_model(ck: &ModelCheckpoint, data: &ModelData, all_rows: bool) -> Result<ModelSignals, CliError> {
    if ck.feature_names != data.table.names {
        return Err(CliError::Validation(format!(
            "checkpoint features do not match the model {} frame",
            ck.model.id
        )));
    }
    let first = if all_rows { 0 } else { ck.split_row };
    let windows = WindowedDataset::with_scaler(&data.table, ck.scaler.clone(), ck.lstm.back_days, first, Split::Test)?;
    if windows.is_empty() {
        return Err(CliError::Validation(format!("model {}: no rows to score", ck.model.id)));
    }
    let raw = predict_series(&ck.network, &windows)?;
    Ok(ModelSignals {
        model: ck.model.id,
        dates: windows.dates.clone(),
        closes: windows.price_index.iter().map(|&i| data.closes[i]).collect(),
        raw,
    })
}

/// Trades and per-model summaries collected for one regime.
type RegimeRun = (Regime, Vec<(u8, Trade)>, Vec<(u8, SimulationReport)>);

/// Runs both trading regimes for every selected model and writes ledgers and
/// summary tables. Degenerate signals are reported per model.
pub fn cmd_simulate(
    ctx: &Context,
    checkpoint: Option<&Path>,
    zero_cost: bool,
    all_rows: bool,
) -> Result<String, CliError> {
    if checkpoint.is_some() && ctx.config.models.len() != 1 {
        return Err(CliError::Usage("--checkpoint needs exactly one model".into()));
    }
    let (series, price_path) = load_prices(ctx)?;
    let mut strategy = ctx.config.strategy();
    if zero_cost {
        strategy = StrategyConfig {
            spread_pips: 0.0,
            commission: 0.0,
            ..strategy
        };
    }
    strategy.validate()?;
    let dir = ctx.ensure_dir("sim")?;
    let mut prov = ctx.provenance("simulate");
    prov.input("prices", &price_path)?;
    prov.note(format!(
        "spread_pips={} commission={} normalization_window={} scope={}",
        strategy.spread_pips,
        strategy.commission,
        ctx.config.normalization_window,
        if all_rows { "all" } else { "test" }
    ));

    let mut ledgers: Vec<RegimeRun> =
        [Regime::FixedHorizon, Regime::Dynamic]
            .into_iter()
            .map(|r| (r, Vec::new(), Vec::new()))
            .collect();
    let mut notes = Vec::new();
    for &model in &ctx.config.models {
        let data = load_model_data(ctx, model, &series)?;
        let ck = checkpoint_for(ctx, model, checkpoint, &data)?;
        let sig = score_model(&ck, &data, all_rows)?;
        let normalized = if ctx.config.normalization_window == 0 {
            normalize_signals(&sig.dates, &sig.raw)
        } else {
            normalize_signals_rolling(&sig.dates, &sig.raw, ctx.config.normalization_window)
        };
        let signals = match normalized {
            Ok(s) => s,
            Err(e @ (SimError::Degenerate(_) | SimError::TooShort(_))) => {
                notes.push(format!("model {model}: no trading ({e})"));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut body = String::from("date,close,raw,weighted\n");
        for i in 0..signals.len() {
            let _ = writeln!(
                body,
                "{},{},{},{}",
                signals.dates[i], sig.closes[i], signals.raw[i], signals.weighted[i]
            );
        }
        write_with_header(&dir.join(format!("signals_model_{model}.csv")), &prov, &body)?;
        for (regime, trades, reports) in ledgers.iter_mut() {
            let cfg = StrategyConfig {
                regime: *regime,
                ..strategy.clone()
            };
            let (t, r) = simulate(&signals, &sig.closes, &cfg)?;
            trades.extend(t.into_iter().map(|t| (model, t)));
            reports.push((model, r));
        }
    }
    for (regime, trades, reports) in &ledgers {
        write_with_header(&dir.join(format!("ledger_{regime}.csv")), &prov, &ledger_csv(trades))?;
        let mut summary = summary_table(reports);
        for n in &notes {
            let _ = writeln!(summary, "{n}");
        }
        write_with_header(&dir.join(format!("summary_{regime}.txt")), &prov, &summary)?;
        write_with_header(&dir.join(format!("trades_{regime}.txt")), &prov, &trade_table(trades))?;
    }
    let simulated = ledgers[0].2.len();
    if simulated == 0 {
        return Err(CliError::Runtime(format!("no model could be simulated: {}", notes.join("; "))));
    }
    let counts: Vec<String> = ledgers
        .iter()
        .map(|(r, t, _)| format!("{r}: {} trades", t.len()))
        .collect();
    Ok(format!("simulated {simulated} models ({}) into {}", counts.join(", "), dir.display()))
}

/// Collects the grid and simulation tables into one plain-text report.
pub fn cmd_report(ctx: &Context) -> Result<String, CliError> {
    let sections: [(&str, &[&str]); 4] = [
        ("AUC by model", &["grid", "by_model.txt"]),
        ("AUC by epochs", &["grid", "by_epochs.txt"]),
        ("AUC by layers", &["grid", "by_layers.txt"]),
        ("AUC by back days", &["grid", "by_back_days.txt"]),
    ];
    let more: [(&str, &[&str]); 4] = [
        ("Best configuration per model", &["grid", "best.txt"]),
        ("Fixed-horizon trading", &["sim", "summary_fixed_horizon.txt"]),
        ("Dynamic trading", &["sim", "summary_dynamic.txt"]),
        ("Dynamic trades", &["sim", "trades_dynamic.txt"]),
    ];
    let mut prov = ctx.provenance("report");
    let mut body = String::new();
    let mut found = 0;
    for (title, parts) in sections.iter().chain(more.iter()) {
        let path = ctx.out(parts);
        let _ = writeln!(body, "\n== {title} ==\n");
        match fs::read_to_string(&path) {
            Ok(text) => {
                found += 1;
                prov.input("table", &path)?;
                for line in text.lines().filter(|l| !l.starts_with('#')) {
                    let _ = writeln!(body, "{line}");
                }
            }
            Err(_) => {
                let _ = writeln!(body, "(missing: {})", path.display());
            }
        }
    }
    if found == 0 {
        return Err(CliError::Usage("nothing to report (run `fx grid` and `fx simulate` first)".into()));
    }
    let path = ctx.out(&["report.txt"]);
    write_with_header(&path, &prov, &body)?;
    Ok(format!("wrote {}", path.display()))
}
