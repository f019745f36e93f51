//! Weekly case series and the trend statistics derived from it.
//!
//! The series is the numeric backbone of the pipeline: the event interpreter
//! consumes growth/streak/peak statistics computed here, the calibration
//! layer consumes the volatility estimate, and the evaluation harness slices
//! training prefixes from the full series. Ingestion is strict on purpose;
//! a malformed surveillance file should fail loudly, not get patched up.

use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default lookback, in observations, for recent-trend and volatility windows.
pub const RECENT_WINDOW_WEEKS: usize = 8;

/// Errors from series ingestion and the statistics computed over a series.
#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("failed to read case series: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid case series CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("case series row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("index {index} out of range for series of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("need at least {needed} observations, found {found}")]
    InsufficientHistory { needed: usize, found: usize },
    #[error("series is empty")]
    Empty,
}

/// One observed week: week-start date plus the reported case count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekEntry {
    pub week_start: NaiveDate,
    pub count: u32,
}

/// Which observations the peak threshold is computed over.
///
/// `Past` restricts the percentile to observations at or before the forecast
/// origin and is the leak-free default for rolling evaluation. `Full` uses
/// the entire loaded series, which reproduces the behaviour of computing the
/// threshold once over a fixed study window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P90Scope {
    Full,
    Past,
}

/// Trend statistics for one origin week, as fed to the event interpreter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendStats {
    /// Four-week relative growth, `(y_t - y_{t-4}) / max(1, y_{t-4})`.
    pub growth_rate: f64,
    /// Length of the strictly-increasing run ending at the origin week.
    pub consecutive_growth: u32,
    /// Whether the origin count sits at or above the 90th percentile.
    pub is_at_peak: bool,
    /// The percentile threshold that `is_at_peak` was compared against.
    pub p90_threshold: f64,
    /// Percentile method identifier, recorded so downstream artifacts can
    /// tell which convention produced the threshold.
    pub p90_method: &'static str,
}

/// Relative week-over-week volatility, clamped to its configured bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Volatility(f64);

/// Default volatility clamp bounds.
pub const VOLATILITY_MIN: f64 = 0.05;
pub const VOLATILITY_MAX: f64 = 0.50;

impl Volatility {
    /// Clamps a raw volatility estimate into `[min, max]`.
    pub fn clamped(raw: f64, min: f64, max: f64) -> Self {
        Volatility(raw.clamp(min, max))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Ordered weekly case counts on a strict 7-day grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeeklySeries {
    entries: Vec<WeekEntry>,
}

#[derive(Debug, Deserialize)]
struct CaseRow {
    date: String,
    cases: u32,
}

impl WeeklySeries {
    /// Builds a series from pre-parsed entries, enforcing the weekly grid.
    /// Error row numbers follow the CSV convention: the header is row 1, so
    /// entry `j` sits on row `j + 2`.
    pub fn new(entries: Vec<WeekEntry>) -> Result<Self, SeriesError> {
        for (i, pair) in entries.windows(2).enumerate() {
            let row = i + 3; // pair[1] is entry i + 1
            let gap = pair[1].week_start - pair[0].week_start;
            if gap == Duration::zero() {
                return Err(SeriesError::InvalidRow {
                    row,
                    message: format!("duplicate week {}", pair[1].week_start),
                });
            }
            if gap < Duration::zero() {
                return Err(SeriesError::InvalidRow {
                    row,
                    message: format!(
                        "out-of-order week {} after {}",
                        pair[1].week_start, pair[0].week_start
                    ),
                });
            }
            if gap != Duration::days(7) {
                return Err(SeriesError::InvalidRow {
                    row,
                    message: format!(
                        "week {} is {} days after {}, expected 7",
                        pair[1].week_start,
                        gap.num_days(),
                        pair[0].week_start
                    ),
                });
            }
        }
        Ok(WeeklySeries { entries })
    }

    /// Reads a `date,cases` CSV. Dates must be ISO-8601 week starts on a
    /// strict 7-day grid; counts must be non-negative integers.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, SeriesError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<CaseRow>().enumerate() {
            let row = row.map_err(|e| SeriesError::InvalidRow {
                row: i + 2,
                message: e.to_string(),
            })?;
            let week_start: NaiveDate =
                row.date.parse().map_err(|e| SeriesError::InvalidRow {
                    row: i + 2,
                    message: format!("bad date {:?}: {e}", row.date),
                })?;
            entries.push(WeekEntry {
                week_start,
                count: row.cases,
            });
        }
        Self::new(entries)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self, SeriesError> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[WeekEntry] {
        &self.entries
    }

    pub fn count_at(&self, t: usize) -> Result<u32, SeriesError> {
        self.check_index(t)?;
        Ok(self.entries[t].count)
    }

    pub fn date_at(&self, t: usize) -> Result<NaiveDate, SeriesError> {
        self.check_index(t)?;
        Ok(self.entries[t].week_start)
    }

    /// Index of the week starting exactly at `date`, if present.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.entries
            .binary_search_by_key(&date, |e| e.week_start)
            .ok()
    }

    /// The observations up to and including index `t`.
    pub fn prefix(&self, t: usize) -> Result<&[WeekEntry], SeriesError> {
        self.check_index(t)?;
        Ok(&self.entries[..=t])
    }

    /// The last `window` observations ending at index `t` (fewer if the
    /// series starts later).
    pub fn recent(&self, t: usize, window: usize) -> Result<&[WeekEntry], SeriesError> {
        self.check_index(t)?;
        let start = (t + 1).saturating_sub(window);
        Ok(&self.entries[start..=t])
    }

    fn check_index(&self, t: usize) -> Result<(), SeriesError> {
        if t >= self.entries.len() {
            return Err(SeriesError::IndexOutOfRange {
                index: t,
                len: self.entries.len(),
            });
        }
        Ok(())
    }

    /// Four-week relative growth at index `t`.
    ///
    /// `(y_t - y_{t-4}) / max(1, y_{t-4})`; the floor keeps the ratio finite
    /// when the comparison week had zero cases.
    pub fn growth_rate(&self, t: usize) -> Result<f64, SeriesError> {
        self.check_index(t)?;
        if t < 4 {
            return Err(SeriesError::InsufficientHistory {
                needed: 5,
                found: t + 1,
            });
        }
        let now = self.entries[t].count as f64;
        let then = self.entries[t - 4].count as f64;
        Ok((now - then) / then.max(1.0))
    }

    /// Length of the strictly-increasing run ending at index `t`.
    ///
    /// Equal consecutive values break the run.
    pub fn consecutive_growth(&self, t: usize) -> Result<u32, SeriesError> {
        self.check_index(t)?;
        let mut k = 0u32;
        let mut i = t;
        while i >= 1 && self.entries[i].count > self.entries[i - 1].count {
            k += 1;
            i -= 1;
        }
        Ok(k)
    }

    /// Whether the count at `t` sits at or above the 90th percentile of the
    /// chosen scope, together with the threshold used.
    pub fn peak_status(&self, t: usize, scope: P90Scope) -> Result<(bool, f64), SeriesError> {
        self.check_index(t)?;
        let values: Vec<u32> = match scope {
            P90Scope::Full => self.entries.iter().map(|e| e.count).collect(),
            P90Scope::Past => self.entries[..=t].iter().map(|e| e.count).collect(),
        };
        let threshold = percentile_nearest_rank(&values, 0.9)?;
        Ok((self.entries[t].count as f64 >= threshold, threshold))
    }

    /// All trend statistics for index `t` in one pass.
    pub fn trend_stats(&self, t: usize, scope: P90Scope) -> Result<TrendStats, SeriesError> {
        let growth_rate = self.growth_rate(t)?;
        let consecutive_growth = self.consecutive_growth(t)?;
        let (is_at_peak, p90_threshold) = self.peak_status(t, scope)?;
        Ok(TrendStats {
            growth_rate,
            consecutive_growth,
            is_at_peak,
            p90_threshold,
            p90_method: "nearest_rank",
        })
    }

    /// Median absolute relative week-over-week change across the window of
    /// the last `window` observations ending at `t`, clamped to
    /// `[min, max]`. A window of 8 observations yields 7 changes.
    pub fn estimate_volatility(
        &self,
        t: usize,
        window: usize,
        min: f64,
        max: f64,
    ) -> Result<Volatility, SeriesError> {
        self.check_index(t)?;
        let obs = self.recent(t, window)?;
        if obs.len() < 2 {
            return Err(SeriesError::InsufficientHistory {
                needed: 2,
                found: obs.len(),
            });
        }
        let mut changes: Vec<f64> = obs
            .windows(2)
            .map(|pair| {
                let prev = pair[0].count as f64;
                let cur = pair[1].count as f64;
                (cur - prev).abs() / prev.max(1.0)
            })
            .collect();
        changes.sort_by(|a, b| a.partial_cmp(b).expect("relative changes are finite"));
        let raw = median_of_sorted(&changes);
        Ok(Volatility::clamped(raw, min, max))
    }
}

/// Nearest-rank percentile: the `ceil(q * n)`-th order statistic.
pub fn percentile_nearest_rank(values: &[u32], q: f64) -> Result<f64, SeriesError> {
    if values.is_empty() {
        return Err(SeriesError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let rank = (q * n).ceil().max(1.0) as usize;
    Ok(sorted[rank - 1] as f64)
}

/// Midpoint median of an already-sorted slice.
fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Ordinary least-squares slope of counts against week index 0..n-1.
pub fn ols_slope(counts: &[u32]) -> Result<f64, SeriesError> {
    let n = counts.len();
    if n < 2 {
        return Err(SeriesError::InsufficientHistory {
            needed: 2,
            found: n,
        });
    }
    let nf = n as f64;
    let x_mean = (nf - 1.0) / 2.0;
    let y_mean = counts.iter().map(|&c| c as f64).sum::<f64>() / nf;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (c as f64 - y_mean);
        den += dx * dx;
    }
    Ok(num / den)
}
