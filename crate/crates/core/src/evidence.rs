//! Evidence ingestion and the per-origin evidence pack.
//!
//! Four context sources feed the event interpreter: daily weather rolled up
//! to the weekly grid, a school/holiday calendar, monthly government case
//! bulletins, and free-text web signals. `build_evidence_pack` assembles the
//! slice of each source visible at a forecast origin; the windows are what
//! keep rolling evaluation leak-free, so they are deliberately conservative
//! (completed months only, weather weeks ending at the origin).

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::round1;

/// Weeks of weather history included in a pack.
pub const WEATHER_WEEKS_BACK: usize = 8;
/// Months of government statistics included in a pack.
pub const GOV_MONTHS_BACK: usize = 6;

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("failed to read evidence file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid evidence CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("evidence row {row}: {message}")]
    InvalidRow { row: usize, message: String },
}

/// One day of raw weather observations. Any field may be missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyWeather {
    pub date: NaiveDate,
    pub temp_c: Option<f64>,
    pub humidity_pct: Option<f64>,
    pub precip_mm: Option<f64>,
}

/// Weekly weather roll-up. Absent fields stay absent rather than defaulting,
/// and values are rounded to one decimal so serialized packs are stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherWeekly {
    pub week_start: NaiveDate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_temp_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_humidity_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_precip_mm: Option<f64>,
}

impl WeatherWeekly {
    pub fn has_data(&self) -> bool {
        self.mean_temp_c.is_some()
            || self.mean_humidity_pct.is_some()
            || self.total_precip_mm.is_some()
    }
}

/// School term state for one calendar week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchoolStatus {
    InSession,
    SummerBreak,
    WinterBreak,
}

/// One calendar week: school status plus any public holidays falling in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarEvent {
    pub week_start: NaiveDate,
    pub school_status: SchoolStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holidays: Vec<String>,
}

/// One month of government-reported case totals for a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovStat {
    /// Calendar month in `YYYY-MM` form.
    pub period: String,
    pub region: String,
    pub total_cases: u32,
    /// Month-over-month relative change; absent for the first month on file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mom_growth: Option<f64>,
}

/// Everything the event interpreter may see for one forecast origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidencePack {
    pub as_of_date: NaiveDate,
    pub weather: Vec<WeatherWeekly>,
    pub events: Vec<CalendarEvent>,
    pub gov_stats: Vec<GovStat>,
    pub web_signals: Vec<String>,
}

/// Canonical JSON rendering of a pack: sorted keys, fixed precision, absent
/// fields omitted entirely.
pub fn canonical_json(pack: &EvidencePack) -> String {
    crate::canon::to_canonical_json(pack)
}

// ---------------------------------------------------------------------------
// Stores
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct WeatherRow {
    date: String,
    temp_c: Option<f64>,
    humidity_pct: Option<f64>,
    precip_mm: Option<f64>,
}

/// Daily weather observations, sorted by date.
#[derive(Debug, Clone, Default)]
pub struct WeatherStore {
    daily: Vec<DailyWeather>,
}

impl WeatherStore {
    /// Reads a `date,temp_c,humidity_pct,precip_mm` CSV. Blank cells are
    /// missing values; out-of-range humidity or negative precipitation is
    /// rejected rather than clamped.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, EvidenceError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut daily = Vec::new();
        for (i, row) in rdr.deserialize::<WeatherRow>().enumerate() {
            let row = row.map_err(|e| EvidenceError::InvalidRow {
                row: i + 2,
                message: e.to_string(),
            })?;
            let date: NaiveDate = row.date.parse().map_err(|e| EvidenceError::InvalidRow {
                row: i + 2,
                message: format!("bad date {:?}: {e}", row.date),
            })?;
            if let Some(h) = row.humidity_pct {
                if !(0.0..=100.0).contains(&h) {
                    return Err(EvidenceError::InvalidRow {
                        row: i + 2,
                        message: format!("humidity {h} outside [0, 100]"),
                    });
                }
            }
            if let Some(p) = row.precip_mm {
                if p < 0.0 {
                    return Err(EvidenceError::InvalidRow {
                        row: i + 2,
                        message: format!("negative precipitation {p}"),
                    });
                }
            }
            daily.push(DailyWeather {
                date,
                temp_c: row.temp_c,
                humidity_pct: row.humidity_pct,
                precip_mm: row.precip_mm,
            });
        }
        daily.sort_by_key(|d| d.date);
        Ok(WeatherStore { daily })
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self, EvidenceError> {
        Self::from_csv_reader(std::fs::File::open(path.as_ref())?)
    }

    pub fn daily(&self) -> &[DailyWeather] {
        &self.daily
    }

    pub fn len(&self) -> usize {
        self.daily.len()
    }

    pub fn is_empty(&self) -> bool {
        self.daily.is_empty()
    }
}

#[derive(Debug, Deserialize)]
struct CalendarRow {
    week_start: String,
    school_status: String,
    holidays: Option<String>,
}

/// Weekly school calendar, one entry per week.
#[derive(Debug, Clone, Default)]
pub struct CalendarStore {
    weeks: BTreeMap<NaiveDate, CalendarEvent>,
}

impl CalendarStore {
    /// Reads a `week_start,school_status,holidays` CSV; holidays are
    /// semicolon-separated. Exactly one row per week is allowed.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, EvidenceError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut weeks = BTreeMap::new();
        for (i, row) in rdr.deserialize::<CalendarRow>().enumerate() {
            let row = row.map_err(|e| EvidenceError::InvalidRow {
                row: i + 2,
                message: e.to_string(),
            })?;
            let week_start: NaiveDate =
                row.week_start.parse().map_err(|e| EvidenceError::InvalidRow {
                    row: i + 2,
                    message: format!("bad date {:?}: {e}", row.week_start),
                })?;
            let school_status = match row.school_status.as_str() {
                "in_session" => SchoolStatus::InSession,
                "summer_break" => SchoolStatus::SummerBreak,
                "winter_break" => SchoolStatus::WinterBreak,
                other => {
                    return Err(EvidenceError::InvalidRow {
                        row: i + 2,
                        message: format!("unknown school_status {other:?}"),
                    })
                }
            };
            let holidays = row
                .holidays
                .unwrap_or_default()
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect();
            let event = CalendarEvent {
                week_start,
                school_status,
                holidays,
            };
            if weeks.insert(week_start, event).is_some() {
                return Err(EvidenceError::InvalidRow {
                    row: i + 2,
                    message: format!("duplicate calendar week {week_start}"),
                });
            }
        }
        Ok(CalendarStore { weeks })
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self, EvidenceError> {
        Self::from_csv_reader(std::fs::File::open(path.as_ref())?)
    }

    pub fn get(&self, week_start: NaiveDate) -> Option<&CalendarEvent> {
        self.weeks.get(&week_start)
    }

    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }
}

#[derive(Debug, Deserialize)]
struct GovRow {
    month: String,
    region: String,
    total_cases: u32,
}

/// Monthly government bulletins, sorted by month.
#[derive(Debug, Clone, Default)]
pub struct GovStore {
    months: Vec<GovStat>,
}

/// Parses `YYYY-MM` into (year, month).
fn parse_period(s: &str) -> Option<(i32, u32)> {
    let (y, m) = s.split_once('-')?;
    if y.len() != 4 || m.len() != 2 {
        return None;
    }
    let year: i32 = y.parse().ok()?;
    let month: u32 = m.parse().ok()?;
    (1..=12).contains(&month).then_some((year, month))
}

/// Last calendar day of a `YYYY-MM` period.
pub fn period_end(period: &str) -> Option<NaiveDate> {
    let (year, month) = parse_period(period)?;
    let first_of_next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)?
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)?
    };
    Some(first_of_next - Duration::days(1))
}

impl GovStore {
    /// Reads a `month,region,total_cases` CSV with months as `YYYY-MM`.
    /// Month-over-month growth is derived here, relative to the previous
    /// month on file: `(cur - prev) / max(1, prev)`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, EvidenceError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for (i, row) in rdr.deserialize::<GovRow>().enumerate() {
            let row = row.map_err(|e| EvidenceError::InvalidRow {
                row: i + 2,
                message: e.to_string(),
            })?;
            let Some(key) = parse_period(&row.month) else {
                return Err(EvidenceError::InvalidRow {
                    row: i + 2,
                    message: format!("bad month {:?}, expected YYYY-MM", row.month),
                });
            };
            rows.push((key, row));
        }
        rows.sort_by_key(|(key, _)| *key);
        let mut months: Vec<GovStat> = Vec::with_capacity(rows.len());
        let mut prev: Option<u32> = None;
        for (_, row) in rows {
            let mom_growth = prev.map(|p| {
                let p = p as f64;
                let growth = (row.total_cases as f64 - p) / p.max(1.0);
                // Two decimals is plenty for a prompt token and keeps packs stable.
                let rounded = (growth * 100.0).round() / 100.0;
                if rounded == 0.0 {
                    0.0
                } else {
                    rounded
                }
            });
            prev = Some(row.total_cases);
            months.push(GovStat {
                period: row.month,
                region: row.region,
                total_cases: row.total_cases,
                mom_growth,
            });
        }
        Ok(GovStore { months })
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self, EvidenceError> {
        Self::from_csv_reader(std::fs::File::open(path.as_ref())?)
    }

    pub fn months(&self) -> &[GovStat] {
        &self.months
    }

    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }
}

/// Source of free-text web signals visible at an origin date.
pub trait WebSignalClient: Send + Sync {
    fn signals(&self, as_of: NaiveDate) -> Vec<String>;
}

/// Default client: no web signals.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullWebClient;

impl WebSignalClient for NullWebClient {
    fn signals(&self, _as_of: NaiveDate) -> Vec<String> {
        Vec::new()
    }
}

/// All evidence stores for one region, bundled for the pipeline.
pub struct EvidenceSources {
    pub weather: WeatherStore,
    pub calendar: CalendarStore,
    pub gov: GovStore,
    pub web: Box<dyn WebSignalClient>,
}

impl EvidenceSources {
    pub fn new(weather: WeatherStore, calendar: CalendarStore, gov: GovStore) -> Self {
        EvidenceSources {
            weather,
            calendar,
            gov,
            web: Box::new(NullWebClient),
        }
    }
}

/// Which evidence categories an ablated run suppresses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub no_agent1: bool,
    pub no_climate: bool,
    pub no_rag: bool,
    pub no_school_event: bool,
}

// ---------------------------------------------------------------------------
// Aggregation and pack assembly
// ---------------------------------------------------------------------------

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Rolls daily weather up to the given weekly grid. Each week covers days
/// `[week_start, week_start + 6]`; a field with no observations in the week
/// stays absent.
pub fn aggregate_weather(daily: &[DailyWeather], week_grid: &[NaiveDate]) -> Vec<WeatherWeekly> {
    week_grid
        .iter()
        .map(|&week_start| {
            let week_end = week_start + Duration::days(6);
            let days: Vec<&DailyWeather> = daily
                .iter()
                .filter(|d| d.date >= week_start && d.date <= week_end)
                .collect();
            let temps: Vec<f64> = days.iter().filter_map(|d| d.temp_c).collect();
            let humidities: Vec<f64> = days.iter().filter_map(|d| d.humidity_pct).collect();
            let precips: Vec<f64> = days.iter().filter_map(|d| d.precip_mm).collect();
            WeatherWeekly {
                week_start,
                mean_temp_c: mean(&temps).map(round1),
                mean_humidity_pct: mean(&humidities).map(round1),
                total_precip_mm: if precips.is_empty() {
                    None
                } else {
                    Some(round1(precips.iter().sum()))
                },
            }
        })
        .collect()
}

/// Assembles the evidence visible at `as_of` for a forecast `horizon_weeks`
/// ahead.
///
/// Weather covers the `WEATHER_WEEKS_BACK` weeks ending at the origin week;
/// government statistics cover the last `GOV_MONTHS_BACK` fully completed
/// months; calendar events cover the origin week plus the horizon weeks
/// ahead (the only category allowed to look forward, since school terms and
/// holidays are known in advance).
pub fn build_evidence_pack(
    as_of: NaiveDate,
    horizon_weeks: u32,
    sources: &EvidenceSources,
    ablation: AblationFlags,
) -> EvidencePack {
    let weather = if ablation.no_climate {
        Vec::new()
    } else {
        let grid: Vec<NaiveDate> = (0..WEATHER_WEEKS_BACK as i64)
            .rev()
            .map(|i| as_of - Duration::weeks(i))
            .collect();
        aggregate_weather(sources.weather.daily(), &grid)
            .into_iter()
            .filter(WeatherWeekly::has_data)
            .collect()
    };

    let events = if ablation.no_school_event {
        Vec::new()
    } else {
        (0..=horizon_weeks as i64)
            .filter_map(|k| sources.calendar.get(as_of + Duration::weeks(k)).cloned())
            .collect()
    };

    let gov_stats = sources
        .gov
        .months()
        .iter()
        .filter(|g| period_end(&g.period).is_some_and(|end| end <= as_of))
        .cloned()
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .take(GOV_MONTHS_BACK)
        .rev()
        .collect();

    EvidencePack {
        as_of_date: as_of,
        weather,
        events,
        gov_stats,
        web_signals: sources.web.signals(as_of),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn day(date: &str, t: f64, h: f64, p: f64) -> DailyWeather {
        DailyWeather {
            date: d(date),
            temp_c: Some(t),
            humidity_pct: Some(h),
            precip_mm: Some(p),
        }
    }

    #[test]
    fn full_week_aggregates_means_and_totals() {
        let daily: Vec<DailyWeather> = (0..7)
            .map(|i| {
                day(
                    &format!("2024-07-{:02}", 8 + i),
                    28.0 + i as f64,
                    80.0,
                    2.0,
                )
            })
            .collect();
        let weeks = aggregate_weather(&daily, &[d("2024-07-08")]);
        assert_eq!(weeks.len(), 1);
        assert_eq!(weeks[0].mean_temp_c, Some(31.0));
        assert_eq!(weeks[0].mean_humidity_pct, Some(80.0));
        assert_eq!(weeks[0].total_precip_mm, Some(14.0));
    }

    #[test]
    fn missing_days_average_over_what_exists() {
        let daily = vec![
            day("2024-07-08", 30.0, 80.0, 0.0),
            day("2024-07-09", 32.0, 80.0, 1.0),
            day("2024-07-10", 34.0, 80.0, 2.0),
        ];
        let weeks = aggregate_weather(&daily, &[d("2024-07-08")]);
        assert_eq!(weeks[0].mean_temp_c, Some(32.0));
        assert_eq!(weeks[0].total_precip_mm, Some(3.0));
    }

    #[test]
    fn empty_week_keeps_fields_absent() {
        let weeks = aggregate_weather(&[], &[d("2024-07-08")]);
        assert!(!weeks[0].has_data());
        assert_eq!(weeks[0].mean_temp_c, None);
    }

    #[test]
    fn weather_csv_blank_cells_become_missing() {
        let csv = "date,temp_c,humidity_pct,precip_mm\n2024-07-08,30.5,,2.0\n";
        let store = WeatherStore::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(store.daily()[0].temp_c, Some(30.5));
        assert_eq!(store.daily()[0].humidity_pct, None);
    }

    #[test]
    fn weather_csv_rejects_out_of_range_values() {
        let bad_humidity = "date,temp_c,humidity_pct,precip_mm\n2024-07-08,30.0,130.0,0.0\n";
        assert!(WeatherStore::from_csv_reader(bad_humidity.as_bytes()).is_err());
        let bad_precip = "date,temp_c,humidity_pct,precip_mm\n2024-07-08,30.0,80.0,-1.0\n";
        assert!(WeatherStore::from_csv_reader(bad_precip.as_bytes()).is_err());
    }

    #[test]
    fn calendar_csv_parses_statuses_and_holiday_lists() {
        let csv = "week_start,school_status,holidays\n\
                   2024-07-01,in_session,\n\
                   2024-07-08,summer_break,Day A;Day B\n";
        let store = CalendarStore::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(
            store.get(d("2024-07-08")).unwrap().school_status,
            SchoolStatus::SummerBreak
        );
        assert_eq!(
            store.get(d("2024-07-08")).unwrap().holidays,
            vec!["Day A", "Day B"]
        );
        assert!(store.get(d("2024-07-01")).unwrap().holidays.is_empty());

        let dup = "week_start,school_status,holidays\n\
                   2024-07-01,in_session,\n\
                   2024-07-01,summer_break,\n";
        assert!(CalendarStore::from_csv_reader(dup.as_bytes()).is_err());
    }

    #[test]
    fn gov_csv_derives_month_over_month_growth() {
        let csv = "month,region,total_cases\n\
                   2024-04,region_x,100\n\
                   2024-05,region_x,150\n\
                   2024-06,region_x,120\n";
        let store = GovStore::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(store.months()[0].mom_growth, None);
        assert_eq!(store.months()[1].mom_growth, Some(0.5));
        assert_eq!(store.months()[2].mom_growth, Some(-0.2));
    }

    fn sample_sources() -> EvidenceSources {
        // Daily weather across June and July 2024.
        let mut daily = Vec::new();
        let mut date = d("2024-05-01");
        while date <= d("2024-07-31") {
            daily.push(DailyWeather {
                date,
                temp_c: Some(29.0),
                humidity_pct: Some(82.0),
                precip_mm: Some(3.0),
            });
            date += Duration::days(1);
        }
        daily.sort_by_key(|x| x.date);
        let weather = WeatherStore { daily };

        let mut weeks = BTreeMap::new();
        let mut ws = d("2024-05-06");
        while ws <= d("2024-07-29") {
            let status = if ws >= d("2024-07-08") {
                SchoolStatus::SummerBreak
            } else {
                SchoolStatus::InSession
            };
            weeks.insert(
                ws,
                CalendarEvent {
                    week_start: ws,
                    school_status: status,
                    holidays: vec![],
                },
            );
            ws += Duration::weeks(1);
        }
        let calendar = CalendarStore { weeks };

        let gov_csv = "month,region,total_cases\n\
                       2023-11,region_x,60\n\
                       2023-12,region_x,45\n\
                       2024-01,region_x,40\n\
                       2024-02,region_x,35\n\
                       2024-03,region_x,50\n\
                       2024-04,region_x,80\n\
                       2024-05,region_x,140\n\
                       2024-06,region_x,200\n\
                       2024-07,region_x,260\n";
        let gov = GovStore::from_csv_reader(gov_csv.as_bytes()).unwrap();
        EvidenceSources::new(weather, calendar, gov)
    }

    #[test]
    fn pack_windows_match_the_documented_spans() {
        let sources = sample_sources();
        let pack = build_evidence_pack(d("2024-07-08"), 1, &sources, AblationFlags::default());

        assert_eq!(pack.weather.len(), 8);
        assert_eq!(pack.weather[0].week_start, d("2024-05-20"));
        assert_eq!(pack.weather[7].week_start, d("2024-07-08"));

        // Origin week plus one horizon week, both in summer break.
        assert_eq!(pack.events.len(), 2);
        assert!(pack
            .events
            .iter()
            .all(|e| e.school_status == SchoolStatus::SummerBreak));

        // Only completed months: January through June 2024, not July.
        assert_eq!(pack.gov_stats.len(), 6);
        assert_eq!(pack.gov_stats.first().unwrap().period, "2024-01");
        assert_eq!(pack.gov_stats.last().unwrap().period, "2024-06");
    }

    #[test]
    fn pack_never_contains_lookahead_data() {
        let sources = sample_sources();
        let as_of = d("2024-07-08");
        let pack = build_evidence_pack(as_of, 1, &sources, AblationFlags::default());
        assert!(pack.weather.iter().all(|w| w.week_start <= as_of));
        assert!(pack
            .gov_stats
            .iter()
            .all(|g| period_end(&g.period).unwrap() <= as_of));
        assert!(pack
            .events
            .iter()
            .all(|e| e.week_start <= as_of + Duration::weeks(1)));
    }

    #[test]
    fn origin_before_all_data_yields_empty_lists_without_error() {
        let sources = sample_sources();
        let pack = build_evidence_pack(d("2020-01-06"), 1, &sources, AblationFlags::default());
        assert!(pack.weather.is_empty());
        assert!(pack.events.is_empty());
        assert!(pack.gov_stats.is_empty());
    }

    #[test]
    fn ablation_flags_empty_their_categories() {
        let sources = sample_sources();
        let no_climate = AblationFlags {
            no_climate: true,
            ..Default::default()
        };
        let pack = build_evidence_pack(d("2024-07-08"), 1, &sources, no_climate);
        assert!(pack.weather.is_empty());
        assert!(!pack.events.is_empty());

        let no_school = AblationFlags {
            no_school_event: true,
            ..Default::default()
        };
        let pack = build_evidence_pack(d("2024-07-08"), 1, &sources, no_school);
        assert!(pack.events.is_empty());
        assert!(!pack.weather.is_empty());
    }

    #[test]
    fn canonical_json_is_sorted_and_omits_absent_fields() {
        let pack = EvidencePack {
            as_of_date: d("2024-07-08"),
            weather: vec![WeatherWeekly {
                week_start: d("2024-07-08"),
                mean_temp_c: Some(30.0),
                mean_humidity_pct: None,
                total_precip_mm: Some(12.5),
            }],
            events: vec![],
            gov_stats: vec![],
            web_signals: vec![],
        };
        let json = canonical_json(&pack);
        assert!(!json.contains("null"));
        assert!(!json.contains("mean_humidity_pct"));
        assert!(json.contains(r#""mean_temp_c":30.0"#));
        // Byte-identical for identical packs.
        assert_eq!(json, canonical_json(&pack.clone()));
        // Keys in sorted order.
        let as_of = json.find("as_of_date").unwrap();
        let weather = json.find("weather").unwrap();
        let events = json.find("events").unwrap();
        assert!(as_of < events && events < weather);
    }
}
