//! Command implementations: wiring configs into a pipeline and mapping
//! failures onto exit codes.
//!
//! Errors split into two classes. Validation failures (bad flags, broken
//! config, malformed input files, origins off the weekly grid) exit 1.
//! Run failures (an origin excluded by the retry protocol when a single
//! forecast was requested, every origin excluded in an evaluation, a
//! look-ahead violation) exit 2.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;

use epicast_core::agents::provider::{
    LlmProvider, RecordingProvider, ReplayProvider, TranscriptStore,
};
use epicast_core::canon::to_canonical_json;
use epicast_core::config::{load_config, LoadedConfig, Role, RunConfig};
use epicast_core::evaluation::report::{
    read_records_csv, write_forecast_svg, write_records_csv, write_run_artifacts,
    write_summary_json,
};
use epicast_core::evaluation::{
    forecast_single, run_rolling, summarize, EvalError, Pipeline,
};
use epicast_core::evidence::{AblationFlags, CalendarStore, EvidenceSources, GovStore, WeatherStore};
use epicast_core::retrieval::{
    load_guideline_dir, HashEmbedder, VectorIndex, MAX_CHUNK_CHARS,
};
use epicast_core::timeseries::WeeklySeries;

/// How agent calls reach their provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Call the configured providers directly.
    Live,
    /// Call them and append every exchange to transcript files.
    Record,
    /// Answer every call from previously recorded transcripts.
    Replay,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        }
    }
}

#[derive(Debug)]
pub enum AppError {
    Validation(String),
    Run(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Validation(_) => 1,
            AppError::Run(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            AppError::Validation(m) | AppError::Run(m) => m,
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Validation(e.to_string())
}

/// Validation error carrying the file it came from, so a missing or broken
/// input names its path.
fn at_path<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> AppError + '_ {
    move |e| AppError::Validation(format!("{}: {e}", path.display()))
}

/// One JSON line per event on stderr. Never log secrets: providers read API
/// keys from the environment at request time and nothing here touches them.
pub fn log_event(event: &str, mut fields: serde_json::Value) {
    let obj = fields.as_object_mut().expect("log fields are an object");
    obj.insert(
        "ts".into(),
        serde_json::Value::String(chrono::Utc::now().to_rfc3339()),
    );
    obj.insert("event".into(), serde_json::Value::String(event.into()));
    eprintln!("{}", serde_json::Value::Object(obj.clone()));
}

/// Everything a command needs after config loading.
pub struct World {
    pub loaded: LoadedConfig,
    pub series: WeeklySeries,
    pub sources: EvidenceSources,
    pub index: Option<VectorIndex>,
    pub embedder: HashEmbedder,
    pub interpreter: Box<dyn LlmProvider>,
    pub forecaster: Box<dyn LlmProvider>,
    pub out_dir: PathBuf,
}

impl World {
    pub fn pipeline(&self) -> Pipeline<'_> {
        let cfg = &self.loaded.config;
        Pipeline {
            series: &self.series,
            sources: &self.sources,
            index: self.index.as_ref(),
            embedder: &self.embedder,
            interpreter: self.interpreter.as_ref(),
            forecaster: self.forecaster.as_ref(),
            constants: cfg.constants,
            ablation: cfg.ablation,
            p90_scope: cfg.p90_scope,
            concurrency: cfg.concurrency,
        }
    }
}

fn wire_provider(
    cfg: &RunConfig,
    role: Role,
    mode: Mode,
    transcripts: Option<&Path>,
    run_id: &str,
) -> Result<Box<dyn LlmProvider>, AppError> {
    let provider_cfg = match role {
        Role::Interpreter => &cfg.providers.interpreter,
        Role::Forecaster => &cfg.providers.forecaster,
    };
    match mode {
        Mode::Live => provider_cfg.build(role).map_err(validation),
        Mode::Record => {
            let dir = transcripts.ok_or_else(|| {
                AppError::Validation("--transcripts is required with --mode record".into())
            })?;
            std::fs::create_dir_all(dir).map_err(validation)?;
            let path = dir.join(format!("{}.{run_id}.jsonl", role.as_str()));
            let store = TranscriptStore::create(&path).map_err(validation)?;
            let inner = provider_cfg.build(role).map_err(validation)?;
            Ok(Box::new(RecordingProvider::new(inner, store)))
        }
        Mode::Replay => {
            let dir = transcripts.ok_or_else(|| {
                AppError::Validation("--transcripts is required with --mode replay".into())
            })?;
            let replay = ReplayProvider::from_dir(dir, role.as_str()).map_err(validation)?;
            Ok(Box::new(replay))
        }
    }
}

/// Loads every configured input and builds the providers for `mode`.
pub fn build_world(
    config_path: &Path,
    mode: Mode,
    transcripts: Option<&Path>,
    out_override: Option<&Path>,
    ablation_override: Option<AblationFlags>,
) -> Result<World, AppError> {
    let mut loaded = load_config(config_path).map_err(validation)?;
    if let Some(flags) = ablation_override {
        loaded.config.ablation = flags;
    }
    let cfg = &loaded.config;

    let series =
        WeeklySeries::from_csv_path(&cfg.data.cases_csv).map_err(at_path(&cfg.data.cases_csv))?;
    if series.is_empty() {
        return Err(AppError::Validation(format!(
            "{} holds no observations",
            cfg.data.cases_csv.display()
        )));
    }

    let weather = match &cfg.data.weather_csv {
        Some(p) => WeatherStore::from_csv_path(p).map_err(at_path(p))?,
        None => WeatherStore::default(),
    };
    let calendar = match &cfg.data.calendar_csv {
        Some(p) => CalendarStore::from_csv_path(p).map_err(at_path(p))?,
        None => CalendarStore::default(),
    };
    let gov = match &cfg.data.gov_csv {
        Some(p) => GovStore::from_csv_path(p).map_err(at_path(p))?,
        None => GovStore::default(),
    };
    let sources = EvidenceSources::new(weather, calendar, gov);

    let embedder = HashEmbedder::default();
    let index = match &cfg.data.guidelines_dir {
        Some(dir) => {
            let chunks = load_guideline_dir(dir, MAX_CHUNK_CHARS).map_err(at_path(dir))?;
            if chunks.is_empty() {
                None
            } else {
                Some(VectorIndex::build(chunks, &embedder))
            }
        }
        None => None,
    };

    let run_id = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let interpreter = wire_provider(cfg, Role::Interpreter, mode, transcripts, &run_id)?;
    let forecaster = wire_provider(cfg, Role::Forecaster, mode, transcripts, &run_id)?;

    log_event(
        "inputs_loaded",
        serde_json::json!({
            "config_hash": loaded.config_hash,
            "mode": mode.as_str(),
            "weeks": series.len(),
            "interpreter": interpreter.name(),
            "forecaster": forecaster.name(),
        }),
    );

    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.clone());

    Ok(World {
        loaded,
        series,
        sources,
        index,
        embedder,
        interpreter,
        forecaster,
        out_dir,
    })
}

pub fn cmd_ingest(world: &World) -> Result<(), AppError> {
    let series = &world.series;
    let summary = serde_json::json!({
        "config_hash": world.loaded.config_hash,
        "weeks": series.len(),
        "first_week": series.date_at(0).map_err(validation)?,
        "last_week": series.date_at(series.len() - 1).map_err(validation)?,
        "weather_days": world.sources.weather.len(),
        "calendar_weeks": world.sources.calendar.len(),
        "gov_months": world.sources.gov.len(),
        "guideline_chunks": world.index.as_ref().map_or(0, |i| i.len()),
    });
    println!("{}", to_canonical_json(&summary));
    Ok(())
}

pub fn cmd_forecast(world: &World, origin: NaiveDate) -> Result<(), AppError> {
    let pipeline = world.pipeline();
    match forecast_single(&pipeline, origin) {
        Ok(forecast) => {
            println!("{}", to_canonical_json(&forecast));
            Ok(())
        }
        Err(e @ EvalError::OriginExcluded { .. }) => Err(AppError::Run(e.to_string())),
        Err(e @ EvalError::LeakDetected(_)) => Err(AppError::Run(e.to_string())),
        Err(e) => Err(AppError::Validation(e.to_string())),
    }
}

/// Expands `[start, end]` into origin dates on the weekly grid, keeping
/// every `every_n`-th.
pub fn expand_origins(
    series: &WeeklySeries,
    start: NaiveDate,
    end: NaiveDate,
    every_n: usize,
) -> Result<Vec<NaiveDate>, AppError> {
    if every_n == 0 {
        return Err(AppError::Validation("--every-n must be at least 1".into()));
    }
    if start > end {
        return Err(AppError::Validation(format!(
            "start {start} is after end {end}"
        )));
    }
    let first = series
        .index_of(start)
        .ok_or_else(|| AppError::Validation(format!("start {start} is not a series week")))?;
    let last = series
        .index_of(end)
        .ok_or_else(|| AppError::Validation(format!("end {end} is not a series week")))?;
    let origins: Vec<NaiveDate> = (first..=last)
        .step_by(every_n)
        .map(|t| series.date_at(t).expect("index in range"))
        .collect();
    Ok(origins)
}

pub fn cmd_evaluate(
    world: &World,
    start: NaiveDate,
    end: NaiveDate,
    every_n: usize,
) -> Result<(), AppError> {
    let began = Instant::now();
    let origins = expand_origins(&world.series, start, end, every_n)?;
    log_event(
        "run_started",
        serde_json::json!({
            "config_hash": world.loaded.config_hash,
            "n_origins_requested": origins.len(),
            "start": start,
            "end": end,
        }),
    );

    let pipeline = world.pipeline();
    let result = match run_rolling(&pipeline, &origins) {
        Ok(r) => r,
        Err(e @ EvalError::LeakDetected(_)) => return Err(AppError::Run(e.to_string())),
        Err(e) => return Err(AppError::Validation(e.to_string())),
    };

    // One status line per origin; with horizons past one week an origin has
    // several records, all sharing the same status.
    let mut last_logged = None;
    for r in &result.records {
        if last_logged == Some(r.origin_date) {
            continue;
        }
        last_logged = Some(r.origin_date);
        log_event(
            "origin_status",
            serde_json::json!({ "origin": r.origin_date, "status": r.status }),
        );
    }

    let summary = match summarize(&result.records) {
        Ok(s) => s,
        Err(EvalError::EmptyInput) => {
            return Err(AppError::Run(
                "every requested origin was excluded; no metrics to report".into(),
            ));
        }
        Err(e) => return Err(AppError::Run(e.to_string())),
    };

    write_run_artifacts(
        &world.out_dir,
        &result.records,
        &summary,
        &world.loaded.config_hash,
    )
    .map_err(|e| AppError::Run(e.to_string()))?;

    log_event(
        "run_finished",
        serde_json::json!({
            "config_hash": world.loaded.config_hash,
            "n_origins": summary.n_origins,
            "n_excluded": summary.n_excluded,
            "elements_checked": result.audit.elements_checked,
            "out_dir": world.out_dir,
            "duration_ms": began.elapsed().as_millis() as u64,
        }),
    );

    let mut value = serde_json::to_value(&summary).expect("summary serializes");
    value["config_hash"] = serde_json::Value::String(world.loaded.config_hash.clone());
    println!("{}", to_canonical_json(&value));
    Ok(())
}

/// Parses `--flags no_climate,no_rag` style ablation lists.
pub fn parse_ablation_flags(flags: &[String]) -> Result<AblationFlags, AppError> {
    let mut out = AblationFlags::default();
    for flag in flags {
        match flag.trim() {
            "no_agent1" => out.no_agent1 = true,
            "no_climate" => out.no_climate = true,
            "no_rag" => out.no_rag = true,
            "no_school_event" => out.no_school_event = true,
            "" => {}
            other => {
                return Err(AppError::Validation(format!(
                    "unknown ablation flag {other:?} (known: no_agent1, no_climate, no_rag, no_school_event)"
                )));
            }
        }
    }
    Ok(out)
}

/// Directory suffix naming an ablation run, e.g. `ablate-no_climate-no_rag`.
pub fn ablation_dir_name(flags: AblationFlags) -> String {
    let mut parts = vec!["ablate".to_string()];
    if flags.no_agent1 {
        parts.push("no_agent1".into());
    }
    if flags.no_climate {
        parts.push("no_climate".into());
    }
    if flags.no_rag {
        parts.push("no_rag".into());
    }
    if flags.no_school_event {
        parts.push("no_school_event".into());
    }
    if parts.len() == 1 {
        parts.push("none".into());
    }
    parts.join("-")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

pub fn cmd_report(
    records_path: &Path,
    format: ReportFormat,
    out_dir: Option<&Path>,
) -> Result<(), AppError> {
    let (config_hash, records) = read_records_csv(records_path).map_err(validation)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| records_path.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| AppError::Run(e.to_string()))?;

    let written = match format {
        ReportFormat::Csv => {
            let path = dir.join("records.csv");
            write_records_csv(&path, &records, &config_hash)
                .map_err(|e| AppError::Run(e.to_string()))?;
            path
        }
        ReportFormat::Json => {
            let summary = summarize(&records)
                .map_err(|e| AppError::Run(format!("cannot summarize records: {e}")))?;
            let path = dir.join("summary.json");
            write_summary_json(&path, &summary, &config_hash)
                .map_err(|e| AppError::Run(e.to_string()))?;
            let mut value = serde_json::to_value(&summary).expect("summary serializes");
            value["config_hash"] = serde_json::Value::String(config_hash.clone());
            println!("{}", to_canonical_json(&value));
            path
        }
        ReportFormat::Svg => {
            let path = dir.join("forecast.svg");
            write_forecast_svg(&path, &records, &config_hash)
                .map_err(|e| AppError::Run(e.to_string()))?;
            path
        }
    };
    log_event(
        "report_written",
        serde_json::json!({ "path": written, "config_hash": config_hash }),
    );
    Ok(())
}
