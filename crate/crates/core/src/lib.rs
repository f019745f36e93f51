//! Context-aware probabilistic forecasting for weekly infectious-disease counts.
//!
//! The pipeline turns a weekly case series plus contextual evidence (weather,
//! school calendars, government bulletins, guideline text) into calibrated
//! count distributions. Two LLM agents sit in the middle: an event interpreter
//! that compresses the evidence into a transmission-impact signal, and a
//! forecast generator that produces a mean trajectory with an uncertainty
//! scale. A moment-matching layer maps those raw outputs onto negative
//! binomial (or Poisson / degenerate) distributions, and a rolling-origin
//! harness scores the result with MAE, RMSE, CRPS, and interval coverage.
//!
//! Everything is deterministic given a provider: mock and replay providers
//! reproduce byte-identical runs, which the evaluation harness relies on.

pub mod agents;
pub mod calibration;
pub mod canon;
pub mod config;
pub mod evaluation;
pub mod evidence;
pub mod retrieval;
pub mod timeseries;

pub use agents::{ContextSignal, RawForecast};
pub use calibration::{Family, PredictiveDistribution};
pub use config::RunConfig;
pub use evaluation::{ForecastRecord, MetricsSummary, RecordStatus};
pub use evidence::{CalendarEvent, EvidencePack, GovStat, SchoolStatus, WeatherWeekly};
pub use retrieval::GuidelineChunk;
pub use timeseries::{TrendStats, Volatility, WeeklySeries};
