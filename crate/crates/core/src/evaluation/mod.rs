//! Rolling-origin evaluation and probabilistic scoring.
//!
//! For each origin the harness slices the training prefix, assembles the
//! evidence pack, runs the two agents, calibrates the raw forecast, and
//! scores it against the held-out truth. An origin whose agent calls fail
//! twice is recorded as excluded rather than aborting the run. Every element
//! that enters an origin's inputs is audited against the origin date, so a
//! run can prove it never looked ahead.

pub mod report;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::mock::{MomentumMockProvider, PersistenceMockProvider};
use crate::agents::provider::LlmProvider;
use crate::agents::{
    build_forecaster_prompt, build_interpreter_prompt, generate_raw_forecast, interpret,
    ContextSignal, DEFAULT_IMPACT_LAG_WEEKS,
};
use crate::calibration::{calibrate_step, Family, PredictiveDistribution};
use crate::config::Constants;
use crate::evidence::{build_evidence_pack, AblationFlags, EvidencePack, EvidenceSources};
use crate::retrieval::{
    compose_query, retrieve, EmbeddingProvider, VectorIndex, MAX_RETRIEVED_CHARS, TOP_K,
};
use crate::timeseries::{P90Scope, SeriesError, WeeklySeries};

/// Tail mass below which the CRPS lattice sum stops extending.
pub const CRPS_TAIL_MASS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to score")]
    EmptyInput,
    #[error("origin {origin} is not on the series grid")]
    UnknownOrigin { origin: NaiveDate },
    #[error("origin {origin} needs {needed} prior weeks, has {found}")]
    ShortHistory {
        origin: NaiveDate,
        needed: usize,
        found: usize,
    },
    #[error("origin {origin} has no observed truth at horizon step {step}")]
    MissingTruth { origin: NaiveDate, step: u32 },
    #[error("origin {origin} excluded: agent output failed the contract twice")]
    OriginExcluded { origin: NaiveDate },
    #[error("look-ahead leak detected: {0}")]
    LeakDetected(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Scoring status of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    InvalidOrigin,
}

/// One scored (origin, horizon step) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub origin_date: NaiveDate,
    /// 1-based horizon step; the target week is `origin + 7 * step` days.
    pub horizon_step: u32,
    pub y_true: u32,
    /// Raw agent mean before calibration.
    pub raw_mean: f64,
    /// Calibrated distribution mean.
    pub mu: f64,
    pub q05: u32,
    pub q50: u32,
    pub q95: u32,
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_dispersion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_success: Option<f64>,
    pub impact: f64,
    pub confidence: f64,
    pub uncertainty: f64,
    pub volatility: f64,
    pub status: RecordStatus,
}

impl ForecastRecord {
    fn excluded(origin_date: NaiveDate, y_true: u32) -> Self {
        ForecastRecord {
            origin_date,
            horizon_step: 1,
            y_true,
            raw_mean: 0.0,
            mu: 0.0,
            q05: 0,
            q50: 0,
            q95: 0,
            family: Family::Degenerate,
            n_dispersion: None,
            p_success: None,
            impact: 0.0,
            confidence: 0.0,
            uncertainty: 0.0,
            volatility: 0.0,
            status: RecordStatus::InvalidOrigin,
        }
    }

    /// Rebuilds the calibrated distribution this record was scored from.
    pub fn distribution(&self) -> PredictiveDistribution {
        PredictiveDistribution {
            family: self.family,
            mu: self.mu,
            n_dispersion: self.n_dispersion,
            p_success: self.p_success,
            q05: self.q05,
            q50: self.q50,
            q95: self.q95,
        }
    }
}

/// Aggregate metrics over the scored records of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mae: f64,
    pub rmse: f64,
    pub crps: f64,
    pub coverage90: f64,
    pub n_origins: usize,
    pub n_excluded: usize,
}

/// Counts of look-ahead checks performed during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LeakAudit {
    /// Dated elements checked against their origin (series points, weather
    /// weeks, gov periods, calendar events).
    pub elements_checked: usize,
    pub violations: Vec<String>,
}

impl LeakAudit {
    fn merge(&mut self, other: LeakAudit) {
        self.elements_checked += other.elements_checked;
        self.violations.extend(other.violations);
    }
}

/// Everything a rolling run needs, wired up once.
pub struct Pipeline<'a> {
    pub series: &'a WeeklySeries,
    pub sources: &'a EvidenceSources,
    /// Guideline index; `None` disables retrieval like the no-rag ablation.
    pub index: Option<&'a VectorIndex>,
    pub embedder: &'a dyn EmbeddingProvider,
    pub interpreter: &'a dyn LlmProvider,
    pub forecaster: &'a dyn LlmProvider,
    pub constants: Constants,
    pub ablation: AblationFlags,
    pub p90_scope: P90Scope,
    /// Worker threads for origin-level parallelism; 0 or 1 runs serially.
    pub concurrency: usize,
}

/// Output of a rolling run: per-origin records in origin order plus the
/// look-ahead audit.
#[derive(Debug)]
pub struct RunResult {
    pub records: Vec<ForecastRecord>,
    pub audit: LeakAudit,
}

/// Checks every dated element of a pack against its origin: weather weeks
/// and gov periods must be complete by `origin`; calendar events may extend
/// `horizon_weeks` weeks past it.
pub fn audit_pack(origin: NaiveDate, horizon_weeks: u32, pack: &EvidencePack) -> LeakAudit {
    let mut audit = LeakAudit::default();
    for w in &pack.weather {
        audit.elements_checked += 1;
        if w.week_start > origin {
            audit
                .violations
                .push(format!("{origin}: weather week {} is in the future", w.week_start));
        }
    }
    for g in &pack.gov_stats {
        audit.elements_checked += 1;
        match crate::evidence::period_end(&g.period) {
            Some(end) if end <= origin => {}
            Some(_) => audit
                .violations
                .push(format!("{origin}: gov period {} is not complete", g.period)),
            None => audit
                .violations
                .push(format!("{origin}: gov period {} is malformed", g.period)),
        }
    }
    let event_limit = origin + Duration::weeks(horizon_weeks as i64);
    for e in &pack.events {
        audit.elements_checked += 1;
        if e.week_start > event_limit {
            audit.violations.push(format!(
                "{origin}: calendar week {} exceeds the event window",
                e.week_start
            ));
        }
    }
    audit
}

/// Result of running the agents at one origin.
enum OriginOutcome {
    Run {
        signal: ContextSignal,
        raw: crate::agents::RawForecast,
        volatility: crate::timeseries::Volatility,
    },
    /// Both attempts at an agent call failed the output contract.
    Excluded,
}

/// Shared per-origin work: history checks, evidence assembly, retrieval,
/// and both agent calls. Never touches observations after `origin` except
/// through the audited pack.
fn run_origin(
    p: &Pipeline,
    origin: NaiveDate,
    t: usize,
) -> Result<(OriginOutcome, LeakAudit), EvalError> {
    let series = p.series;
    let h = p.constants.horizon;
    let window = p.constants.recent_window;

    if t < window {
        return Err(EvalError::ShortHistory {
            origin,
            needed: window,
            found: t,
        });
    }

    let train = series.prefix(t)?;
    let recent = series.recent(t, window)?;

    let mut audit = LeakAudit::default();
    audit.elements_checked += train.len();
    if let Some(last) = train.last() {
        if last.week_start > origin {
            audit
                .violations
                .push(format!("{origin}: training series extends to {}", last.week_start));
        }
    }

    let trend = series.trend_stats(t, p.p90_scope)?;
    let volatility = series.estimate_volatility(
        t,
        window,
        p.constants.volatility_min,
        p.constants.volatility_max,
    )?;

    let pack = build_evidence_pack(origin, h, p.sources, p.ablation);
    audit.merge(audit_pack(origin, h, &pack));

    let retrieved = match (&p.index, p.ablation.no_rag) {
        (Some(index), false) if !index.is_empty() => {
            let query = compose_query(origin, &pack);
            retrieve(index, &query, TOP_K, MAX_RETRIEVED_CHARS, p.embedder)
                .expect("non-empty index cannot fail retrieval")
        }
        _ => Vec::new(),
    };

    let signal = if p.ablation.no_agent1 {
        ContextSignal::neutral()
    } else {
        let prompt = build_interpreter_prompt(
            &pack,
            &trend,
            &retrieved,
            recent,
            h,
            DEFAULT_IMPACT_LAG_WEEKS,
        );
        match interpret(p.interpreter, &prompt) {
            Ok(signal) => signal,
            Err(_) => return Ok((OriginOutcome::Excluded, audit)),
        }
    };

    let prompt = build_forecaster_prompt(
        train,
        recent,
        &signal,
        volatility,
        &trend,
        h,
        DEFAULT_IMPACT_LAG_WEEKS,
    );
    match generate_raw_forecast(p.forecaster, &prompt, h) {
        Ok(raw) => Ok((
            OriginOutcome::Run {
                signal,
                raw,
                volatility,
            },
            audit,
        )),
        Err(_) => Ok((OriginOutcome::Excluded, audit)),
    }
}

fn forecast_one_origin(
    p: &Pipeline,
    origin: NaiveDate,
) -> Result<(Vec<ForecastRecord>, LeakAudit), EvalError> {
    let series = p.series;
    let t = series
        .index_of(origin)
        .ok_or(EvalError::UnknownOrigin { origin })?;
    let h = p.constants.horizon;
    for step in 1..=h {
        if t + step as usize >= series.len() {
            return Err(EvalError::MissingTruth { origin, step });
        }
    }
    let truth = |step: u32| series.count_at(t + step as usize);

    let (outcome, audit) = run_origin(p, origin, t)?;
    let (signal, raw, volatility) = match outcome {
        OriginOutcome::Excluded => {
            return Ok((vec![ForecastRecord::excluded(origin, truth(1)?)], audit));
        }
        OriginOutcome::Run {
            signal,
            raw,
            volatility,
        } => (signal, raw, volatility),
    };

    let mut records = Vec::with_capacity(h as usize);
    for step in 1..=h {
        let dist = calibrate_step(&raw, (step - 1) as usize, volatility);
        records.push(ForecastRecord {
            origin_date: origin,
            horizon_step: step,
            y_true: truth(step)?,
            raw_mean: raw.forecast_mean[(step - 1) as usize],
            mu: dist.mu,
            q05: dist.q05,
            q50: dist.q50,
            q95: dist.q95,
            family: dist.family,
            n_dispersion: dist.n_dispersion,
            p_success: dist.p_success,
            impact: signal.transmission_impact,
            confidence: signal.confidence,
            uncertainty: raw.uncertainty_scale,
            volatility: volatility.value(),
            status: RecordStatus::Ok,
        });
    }
    Ok((records, audit))
}

/// One step of an unscored forecast.
#[derive(Debug, Clone, Serialize)]
pub struct StepForecast {
    pub horizon_step: u32,
    pub target_week: NaiveDate,
    pub raw_mean: f64,
    #[serde(flatten)]
    pub dist: PredictiveDistribution,
}

/// A forecast issued from one origin, without truth attached.
#[derive(Debug, Clone, Serialize)]
pub struct OriginForecast {
    pub origin_date: NaiveDate,
    pub impact: f64,
    pub confidence: f64,
    pub event_summary: String,
    pub risk_notes: Vec<String>,
    pub uncertainty: f64,
    pub volatility: f64,
    pub steps: Vec<StepForecast>,
}

/// Forecasts a single origin without requiring observed truth, for issuing
/// real forecasts past the end of the series history.
pub fn forecast_single(p: &Pipeline, origin: NaiveDate) -> Result<OriginForecast, EvalError> {
    let t = p
        .series
        .index_of(origin)
        .ok_or(EvalError::UnknownOrigin { origin })?;
    let (outcome, audit) = run_origin(p, origin, t)?;
    if !audit.violations.is_empty() {
        return Err(EvalError::LeakDetected(audit.violations.join("; ")));
    }
    match outcome {
        OriginOutcome::Excluded => Err(EvalError::OriginExcluded { origin }),
        OriginOutcome::Run {
            signal,
            raw,
            volatility,
        } => {
            let steps = (1..=p.constants.horizon)
                .map(|step| {
                    let dist = calibrate_step(&raw, (step - 1) as usize, volatility);
                    StepForecast {
                        horizon_step: step,
                        target_week: origin + Duration::weeks(step as i64),
                        raw_mean: raw.forecast_mean[(step - 1) as usize],
                        dist,
                    }
                })
                .collect();
            Ok(OriginForecast {
                origin_date: origin,
                impact: signal.transmission_impact,
                confidence: signal.confidence,
                event_summary: signal.event_summary,
                risk_notes: signal.risk_notes,
                uncertainty: raw.uncertainty_scale,
                volatility: volatility.value(),
                steps,
            })
        }
    }
}

/// Runs the pipeline over every origin, in order. Origins excluded by the
/// retry protocol stay in the output with `invalid_origin` status; any
/// look-ahead violation fails the whole run.
pub fn run_rolling(p: &Pipeline, origins: &[NaiveDate]) -> Result<RunResult, EvalError> {
    let outcomes: Vec<Result<(Vec<ForecastRecord>, LeakAudit), EvalError>> =
        if p.concurrency > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(p.concurrency)
                .build()
                .expect("worker pool builds");
            pool.install(|| {
                origins
                    .par_iter()
                    .map(|&origin| forecast_one_origin(p, origin))
                    .collect()
            })
        } else {
            origins
                .iter()
                .map(|&origin| forecast_one_origin(p, origin))
                .collect()
        };

    let mut records = Vec::new();
    let mut audit = LeakAudit::default();
    for outcome in outcomes {
        let (recs, a) = outcome?;
        records.extend(recs);
        audit.merge(a);
    }
    if !audit.violations.is_empty() {
        return Err(EvalError::LeakDetected(audit.violations.join("; ")));
    }
    Ok(RunResult { records, audit })
}

/// Convenience constructors for the two rule-based baseline providers.
pub fn momentum_provider() -> MomentumMockProvider {
    MomentumMockProvider
}

pub fn persistence_provider() -> PersistenceMockProvider {
    PersistenceMockProvider
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

fn scored(records: &[ForecastRecord]) -> Vec<&ForecastRecord> {
    records
        .iter()
        .filter(|r| r.status == RecordStatus::Ok)
        .collect()
}

/// Mean absolute error of the median point forecast.
pub fn mae(records: &[ForecastRecord]) -> Result<f64, EvalError> {
    let ok = scored(records);
    if ok.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let total: f64 = ok
        .iter()
        .map(|r| (r.y_true as f64 - r.q50 as f64).abs())
        .sum();
    Ok(total / ok.len() as f64)
}

/// Root mean squared error of the median point forecast.
pub fn rmse(records: &[ForecastRecord]) -> Result<f64, EvalError> {
    let ok = scored(records);
    if ok.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let total: f64 = ok
        .iter()
        .map(|r| {
            let e = r.y_true as f64 - r.q50 as f64;
            e * e
        })
        .sum();
    Ok((total / ok.len() as f64).sqrt())
}

/// Fraction of truths inside the closed interval `[q05, q95]`.
pub fn coverage90(records: &[ForecastRecord]) -> Result<f64, EvalError> {
    let ok = scored(records);
    if ok.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = ok
        .iter()
        .filter(|r| r.q05 <= r.y_true && r.y_true <= r.q95)
        .count();
    Ok(hits as f64 / ok.len() as f64)
}

/// CRPS of an integer-supported distribution against an integer truth.
///
/// For a distribution on the non-negative integers the defining integral
/// collapses to a lattice sum of squared CDF-minus-indicator terms; the sum
/// extends until the remaining tail mass is below `CRPS_TAIL_MASS` and the
/// truth has been passed. A point mass reproduces absolute error exactly.
pub fn crps(dist: &PredictiveDistribution, y_true: u32) -> f64 {
    let y = y_true as u64;
    let mut cdf = 0.0;
    let mut sum = 0.0;
    let mut k: u64 = 0;
    loop {
        cdf += dist.pmf(k);
        let indicator = if k >= y { 1.0 } else { 0.0 };
        let term = cdf.min(1.0) - indicator;
        sum += term * term;
        if k >= y && 1.0 - cdf < CRPS_TAIL_MASS {
            break;
        }
        k += 1;
    }
    sum
}

/// Mean CRPS over the scored records.
pub fn crps_mean(records: &[ForecastRecord]) -> Result<f64, EvalError> {
    let ok = scored(records);
    if ok.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let total: f64 = ok.iter().map(|r| crps(&r.distribution(), r.y_true)).sum();
    Ok(total / ok.len() as f64)
}

/// Summarizes a run. `n_origins` counts origins that scored; together with
/// `n_excluded` it accounts for every requested origin.
pub fn summarize(records: &[ForecastRecord]) -> Result<MetricsSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut ok_origins: Vec<NaiveDate> = records
        .iter()
        .filter(|r| r.status == RecordStatus::Ok)
        .map(|r| r.origin_date)
        .collect();
    ok_origins.dedup();
    let n_excluded = records
        .iter()
        .filter(|r| r.status == RecordStatus::InvalidOrigin)
        .count();
    Ok(MetricsSummary {
        mae: mae(records)?,
        rmse: rmse(records)?,
        crps: crps_mean(records)?,
        coverage90: coverage90(records)?,
        n_origins: ok_origins.len(),
        n_excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn ok_record(origin: &str, y_true: u32, q05: u32, q50: u32, q95: u32) -> ForecastRecord {
        ForecastRecord {
            origin_date: d(origin),
            horizon_step: 1,
            y_true,
            raw_mean: q50 as f64,
            mu: q50 as f64,
            q05,
            q50,
            q95,
            family: Family::Degenerate,
            n_dispersion: None,
            p_success: None,
            impact: 0.0,
            confidence: 0.0,
            uncertainty: 0.0,
            volatility: 0.05,
            status: RecordStatus::Ok,
        }
    }

    #[test]
    fn point_metrics_match_hand_computation() {
        let records = vec![
            ok_record("2024-01-07", 10, 5, 8, 15),
            ok_record("2024-01-14", 4, 2, 6, 9),
        ];
        // errors: |10-8| = 2, |4-6| = 2
        assert_eq!(mae(&records).unwrap(), 2.0);
        assert_eq!(rmse(&records).unwrap(), 2.0);
    }

    #[test]
    fn coverage_uses_closed_endpoints() {
        let records = vec![
            ok_record("2024-01-07", 5, 5, 6, 9),  // on the lower edge: covered
            ok_record("2024-01-14", 9, 5, 6, 9),  // on the upper edge: covered
            ok_record("2024-01-21", 10, 5, 6, 9), // outside
        ];
        let c = coverage90(&records).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn excluded_records_never_enter_metrics() {
        let mut records = vec![ok_record("2024-01-07", 10, 5, 10, 15)];
        records.push(ForecastRecord::excluded(d("2024-01-14"), 99));
        assert_eq!(mae(&records).unwrap(), 0.0);
        let s = summarize(&records).unwrap();
        assert_eq!(s.n_origins, 1);
        assert_eq!(s.n_excluded, 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(mae(&[]), Err(EvalError::EmptyInput)));
        assert!(matches!(summarize(&[]), Err(EvalError::EmptyInput)));
        let only_excluded = vec![ForecastRecord::excluded(d("2024-01-07"), 3)];
        assert!(matches!(mae(&only_excluded), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn crps_of_point_mass_is_absolute_error() {
        for (at, truth) in [(3u32, 7u32), (7, 3), (5, 5), (0, 4)] {
            let dist = PredictiveDistribution::degenerate(at);
            let expected = (at as f64 - truth as f64).abs();
            assert_eq!(crps(&dist, truth), expected, "point {at} truth {truth}");
        }
    }

    #[test]
    fn crps_is_small_when_mass_sits_on_the_truth() {
        let tight = PredictiveDistribution {
            family: Family::Poisson,
            mu: 6.0,
            n_dispersion: None,
            p_success: None,
            q05: 0,
            q50: 0,
            q95: 0,
        };
        let on_target = crps(&tight, 6);
        let far_off = crps(&tight, 20);
        assert!(on_target < far_off);
        assert!(on_target > 0.0);
    }
}
