//! Prompt texts and prompt assembly for both agents.
//!
//! The system texts are fixed strings; everything dynamic arrives through a
//! canonical-JSON payload appended after an `INPUT:` marker. Builders are
//! pure functions of their inputs, so a given origin always produces the
//! same bytes, and the request hash (SHA-256 of the full prompt text) is
//! stable across runs. That hash is what ties record and replay together.

use chrono::NaiveDate;
use serde::Serialize;

use crate::canon::to_canonical_json;
use crate::evidence::{CalendarEvent, EvidencePack, GovStat, WeatherWeekly};
use crate::retrieval::GuidelineChunk;
use crate::timeseries::{ols_slope, TrendStats, Volatility, WeekEntry};

use super::ContextSignal;

/// Weeks between an external shift and its effect on reported counts.
pub const DEFAULT_IMPACT_LAG_WEEKS: u32 = 1;

/// Marker separating the instruction sections from the JSON payload.
pub const INPUT_MARKER: &str = "INPUT:";

/// System text for the event interpreter.
pub const INTERPRETER_SYSTEM_PROMPT: &str = r#"You are an infectious-disease analyst translating qualitative context
into HFMD transmission signals.

IMPORTANT LAG POLICY:
- HFMD (Hand-Foot-Mouth Disease) typically shows a 1-week delay between
  behavioral/environmental shifts and reported cases (incubation + reporting).
- The transmission_impact you emit must describe the expected net effect starting
  next week (t+1) and the few weeks after, not primarily the current week.

INPUT JSON FIELDS:
- disease, date, horizon_weeks, impact_lag_weeks (usually 1 for HFMD).
- recent_values (ordered old->new) and derived weekly trend statistics.
- external_data: school calendars, weather summaries, news, government bulletins.
- recent qualitative notes / risk flags if available.

OUTPUT STRICT JSON (no markdown):
{
  "transmission_impact": float in [-1, 1],
  "confidence": float in [0, 1],
  "event_summary": "short natural-language summary",
  "risk_notes": ["zero or more short bullet strings"],
  "lag_rationale": "optional additional note about lag/lead timing"
}

GUIDANCE:
1. Treat school status as the strongest driver, followed by temperature/humidity,
   then other news. Weather alone without schools rarely drives large shifts.
2. transmission_impact > 0 implies conditions that are likely to increase cases
   starting next week; < 0 implies headwinds. Reserve |impact| > 0.6 for
   strongly aligned signals.
3. Mention lag explicitly in your summary when possible (e.g., "school reopening
   may lift cases from next week onward").
4. Be concise; do not restate the full payload."#;

/// Background epidemiology shared with the interpreter.
pub const HFMD_KNOWLEDGE_PROMPT: &str = r#"HAND-FOOT-MOUTH DISEASE (HFMD) - KEY EPIDEMIOLOGICAL PATTERNS:

1. SEASONALITY
   - Primary peak: late spring to early summer (roughly May-Jul).
   - Secondary smaller peak: early autumn (roughly Sep-Oct).
   - Winter (roughly Dec-Feb) is usually a low-activity period with near-zero baseline.

2. ROLE OF SCHOOLS
   - Young children in schools and kindergartens are major drivers of transmission.
   - When schools are open and conditions are favorable, cases can rise quickly.
   - Summer/winter vacations or prolonged closures often lead to rapid declines
     (e.g., 20-40% declines).

3. ENVIRONMENTAL CONDITIONS
   - Temperatures around 20-30C with adequate humidity favor transmission.
   - Very cold or very hot conditions make sustained outbreaks less likely.
   - Heavy or prolonged rainfall can temporarily reduce contact patterns.

4. EPIDEMIC CURVE SHAPE
   - Growth: fast increases during favorable conditions and active school terms.
   - Peak: seasonal maxima are usually not sustained plateaus; peaks often last 1-2 weeks.
   - Decline: post-peak declines are often relatively rapid compared to off-season noise.

5. FORECASTING IMPLICATIONS
   - Large sudden spikes during winter are less plausible without extraordinary drivers.
   - When cases are extremely low and no strong drivers are present,
   forecasts should remain conservative.
   - When values are at or near recent seasonal highs during peak season, it is often more
     reasonable to expect stabilization or decline than indefinite further growth.

6. BIOLOGICAL PARAMETERS
   - Incubation Period: Typically 3-7 days.
   - Lag Effect: Transmission events (e.g., school opening) usually impact
   reported case counts
     in the following week (Lag-1 week) due to incubation and reporting delays.

Use these patterns as soft background knowledge when interpreting events and
making forecasts.
They are NOT strict rules; always combine them with the concrete recent data
and external signals you receive."#;

/// System text for the forecast generator.
pub const FORECAST_SYSTEM_PROMPT: &str = r#"You are assisting with weekly infectious-disease forecasting.

LAG POLICY:
- HFMD typically reacts to external events with ~1 week delay
    (impact_lag_weeks = 1). transmission_impact describes expected net effect
    starting in week t+impact_lag_weeks.
- Week 1 forecast should be driven primarily by recent_values and recent trend,
    but interpreted in the context of the full multi-year hospital time series.
- Weeks >= impact_lag_weeks may incorporate most of transmission_impact.

INPUT JSON SUMMARY (READ IN THIS ORDER):
1) Long-term hospital history (MANDATORY)
     - full_history: weekly dates + values over multiple years.
     - First, summarize: overall level, seasonality (e.g., typical summer peaks,
         winter lows), and how the *current level* compares to past years.
     - NEVER ignore full_history; treat it as the primary context.

2) Recent 8-week window
     - recent_values: last 8 weekly hospital cases.
     - recent_trend: {"growth_rate": float, "slope": float}.
     - Use this as a zoom-in on the latest dynamics, but interpret it *relative
         to* the long-term pattern from full_history. Short, noisy swings (e.g.,
         15->6->14->20) should not overrule stable seasonal structure.

3) Event interpreter output + external drivers
     - transmission_impact: float in [-1,1] describing expected net effect
         starting in week t+impact_lag_weeks,
     - confidence: float in [0,1] for the above impact,
     - risk_notes: optional strings explaining key drivers (school calendar,
         weather, policy changes, etc.),
     - historical_volatility: float summarizing recent variability.

4) Forecast configuration
     - horizon_weeks: int,
     - impact_lag_weeks: int,
     - mode: "standard" | "advanced".

OUTPUT STRICT JSON ONLY (SIMPLIFIED):
You MUST return a single JSON object with exactly the following top-level keys:
{
    "forecast_mean": [float >= 0],        // length = horizon_weeks
    "uncertainty_scale": float in [0, 1], // 0 = very low uncertainty, 1 = very high
    "rationale": "English explanation (<=3 sentences),
    MUST mention how you applied the lag policy"
}

CONSTRAINTS:
- Do NOT output any other top-level keys (no "forecast", no "quantiles").
- Do NOT wrap the JSON in Markdown fences.
- The forecast_mean array MUST have length = horizon_weeks.
- All entries in forecast_mean MUST be >= 0.
- uncertainty_scale MUST be a single float in [0, 1].
- Forecast_mean profile should be smooth; avoid implausible spikes that contradict
    lag policy, long-term seasonality in full_history, or historical volatility.
- Always mention the lag interpretation inside the rationale when applicable,
    and clearly distinguish between effects of past conditions (already visible
    in recent_values) vs. expected effects of *current* conditions via
    transmission_impact."#;

/// An assembled prompt: instruction sections plus the JSON payload.
///
/// Wire protocols send the two halves as separate messages; hashing,
/// transcripts, and mock providers all work from the canonical `text()`
/// rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatPrompt {
    pub system: String,
    pub user: String,
}

impl ChatPrompt {
    /// The full prompt as one deterministic text blob.
    pub fn text(&self) -> String {
        format!("{}\n\n{}\n{}", self.system, INPUT_MARKER, self.user)
    }

    /// Hex SHA-256 of the full prompt text; the transcript and replay key.
    pub fn request_hash(&self) -> String {
        crate::canon::sha256_hex(self.text().as_bytes())
    }
}

/// External evidence as embedded in the interpreter payload. Categories the
/// pack does not carry are omitted entirely, so an empty pack serializes to
/// an empty object.
#[derive(Serialize)]
struct ExternalData<'a> {
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    weather: &'a [WeatherWeekly],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    events: &'a [CalendarEvent],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    gov_stats: &'a [GovStat],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    web_signals: &'a [String],
}

#[derive(Serialize)]
struct InterpreterPayload<'a> {
    disease: &'static str,
    date: NaiveDate,
    horizon_weeks: u32,
    impact_lag_weeks: u32,
    recent_values: Vec<u32>,
    trend: &'a TrendStats,
    external_data: ExternalData<'a>,
}

/// Builds the event-interpreter prompt. Retrieved guideline passages, when
/// present, are inserted at the very beginning of the system text.
pub fn build_interpreter_prompt(
    pack: &EvidencePack,
    trend: &TrendStats,
    retrieved: &[GuidelineChunk],
    recent: &[WeekEntry],
    horizon_weeks: u32,
    impact_lag_weeks: u32,
) -> ChatPrompt {
    let payload = InterpreterPayload {
        disease: "HFMD",
        date: pack.as_of_date,
        horizon_weeks,
        impact_lag_weeks,
        recent_values: recent.iter().map(|e| e.count).collect(),
        trend,
        external_data: ExternalData {
            weather: &pack.weather,
            events: &pack.events,
            gov_stats: &pack.gov_stats,
            web_signals: &pack.web_signals,
        },
    };

    let mut system = String::new();
    if !retrieved.is_empty() {
        let passages: Vec<&str> = retrieved.iter().map(|c| c.text.as_str()).collect();
        system.push_str(&passages.join("\n\n"));
        system.push_str("\n\n");
    }
    system.push_str(INTERPRETER_SYSTEM_PROMPT);
    system.push_str("\n\n");
    system.push_str(HFMD_KNOWLEDGE_PROMPT);

    ChatPrompt {
        system,
        user: to_canonical_json(&payload),
    }
}

#[derive(Serialize)]
struct FullHistory {
    dates: Vec<NaiveDate>,
    values: Vec<u32>,
}

#[derive(Serialize)]
struct RecentTrend {
    growth_rate: f64,
    slope: f64,
}

#[derive(Serialize)]
struct ForecasterPayload {
    full_history: FullHistory,
    recent_values: Vec<u32>,
    recent_trend: RecentTrend,
    transmission_impact: f64,
    confidence: f64,
    risk_notes: Vec<String>,
    historical_volatility: f64,
    horizon_weeks: u32,
    impact_lag_weeks: u32,
    mode: &'static str,
}

/// Builds the forecast-generator prompt from the training history, the
/// interpreter's signal, and the volatility estimate.
pub fn build_forecaster_prompt(
    full_history: &[WeekEntry],
    recent: &[WeekEntry],
    signal: &ContextSignal,
    volatility: Volatility,
    trend: &TrendStats,
    horizon_weeks: u32,
    impact_lag_weeks: u32,
) -> ChatPrompt {
    let recent_counts: Vec<u32> = recent.iter().map(|e| e.count).collect();
    let slope = ols_slope(&recent_counts).unwrap_or(0.0);
    let payload = ForecasterPayload {
        full_history: FullHistory {
            dates: full_history.iter().map(|e| e.week_start).collect(),
            values: full_history.iter().map(|e| e.count).collect(),
        },
        recent_values: recent_counts,
        recent_trend: RecentTrend {
            growth_rate: trend.growth_rate,
            slope,
        },
        transmission_impact: signal.transmission_impact,
        confidence: signal.confidence,
        risk_notes: signal.risk_notes.clone(),
        historical_volatility: volatility.value(),
        horizon_weeks,
        impact_lag_weeks,
        mode: "standard",
    };
    ChatPrompt {
        system: FORECAST_SYSTEM_PROMPT.to_owned(),
        user: to_canonical_json(&payload),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::SchoolStatus;
    use crate::timeseries::{P90Scope, WeeklySeries};
    use chrono::Duration;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn sample_series() -> WeeklySeries {
        let start = d("2024-05-06");
        let counts = [4, 5, 5, 6, 8, 9, 12, 14, 18, 24];
        WeeklySeries::new(
            counts
                .iter()
                .enumerate()
                .map(|(i, &count)| WeekEntry {
                    week_start: start + Duration::weeks(i as i64),
                    count,
                })
                .collect(),
        )
        .unwrap()
    }

    fn sample_pack() -> EvidencePack {
        EvidencePack {
            as_of_date: d("2024-07-08"),
            weather: vec![WeatherWeekly {
                week_start: d("2024-07-08"),
                mean_temp_c: Some(29.5),
                mean_humidity_pct: Some(81.0),
                total_precip_mm: Some(12.0),
            }],
            events: vec![CalendarEvent {
                week_start: d("2024-07-08"),
                school_status: SchoolStatus::SummerBreak,
                holidays: vec![],
            }],
            gov_stats: vec![],
            web_signals: vec![],
        }
    }

    #[test]
    fn interpreter_prompt_is_deterministic() {
        let series = sample_series();
        let trend = series.trend_stats(9, P90Scope::Past).unwrap();
        let recent = series.recent(9, 8).unwrap();
        let pack = sample_pack();
        let a = build_interpreter_prompt(&pack, &trend, &[], recent, 1, 1);
        let b = build_interpreter_prompt(&pack, &trend, &[], recent, 1, 1);
        assert_eq!(a.text(), b.text());
        assert_eq!(a.request_hash(), b.request_hash());
    }

    #[test]
    fn retrieved_passages_lead_the_system_text() {
        let series = sample_series();
        let trend = series.trend_stats(9, P90Scope::Past).unwrap();
        let recent = series.recent(9, 8).unwrap();
        let chunk = GuidelineChunk {
            id: 0,
            text: "Guideline passage about outbreaks.".into(),
            source_doc: "doc".into(),
        };
        let prompt = build_interpreter_prompt(&sample_pack(), &trend, &[chunk], recent, 1, 1);
        assert!(prompt.system.starts_with("Guideline passage about outbreaks."));
        assert!(prompt.system.contains("infectious-disease analyst"));
        assert!(prompt.system.contains("KEY EPIDEMIOLOGICAL PATTERNS"));
    }

    #[test]
    fn empty_pack_serializes_external_data_as_empty_object() {
        let series = sample_series();
        let trend = series.trend_stats(9, P90Scope::Past).unwrap();
        let recent = series.recent(9, 8).unwrap();
        let pack = EvidencePack {
            as_of_date: d("2024-07-08"),
            weather: vec![],
            events: vec![],
            gov_stats: vec![],
            web_signals: vec![],
        };
        let prompt = build_interpreter_prompt(&pack, &trend, &[], recent, 1, 1);
        assert!(prompt.user.contains(r#""external_data":{}"#));
    }

    #[test]
    fn interpreter_payload_carries_trend_and_recent_values() {
        let series = sample_series();
        let trend = series.trend_stats(9, P90Scope::Past).unwrap();
        let recent = series.recent(9, 8).unwrap();
        let prompt = build_interpreter_prompt(&sample_pack(), &trend, &[], recent, 1, 1);
        assert!(prompt.user.contains(r#""recent_values":[5,6,8,9,12,14,18,24]"#));
        assert!(prompt.user.contains(r#""growth_rate":"#));
        assert!(prompt.user.contains(r#""is_at_peak":true"#));
        assert!(prompt.user.contains(r#""disease":"HFMD""#));
    }

    #[test]
    fn forecaster_prompt_carries_signal_and_volatility() {
        let series = sample_series();
        let trend = series.trend_stats(9, P90Scope::Past).unwrap();
        let recent = series.recent(9, 8).unwrap();
        let full = series.prefix(9).unwrap();
        let signal = ContextSignal {
            transmission_impact: 0.42,
            confidence: 0.72,
            event_summary: "rise".into(),
            risk_notes: vec!["schools in session".into()],
            lag_rationale: None,
        };
        let vol = Volatility::clamped(0.21, 0.05, 0.50);
        let prompt = build_forecaster_prompt(full, recent, &signal, vol, &trend, 1, 1);
        assert!(prompt.system.starts_with("You are assisting with weekly"));
        assert!(prompt.user.contains(r#""transmission_impact":0.42"#));
        assert!(prompt.user.contains(r#""confidence":0.72"#));
        assert!(prompt.user.contains(r#""historical_volatility":0.21"#));
        assert!(prompt.user.contains(r#""mode":"standard""#));
        assert!(prompt.user.contains(r#""full_history":"#));
        let text = prompt.text();
        assert!(text.contains("\nINPUT:\n"));
    }

    #[test]
    fn request_hash_distinguishes_different_payloads() {
        let series = sample_series();
        let trend = series.trend_stats(9, P90Scope::Past).unwrap();
        let recent = series.recent(9, 8).unwrap();
        let a = build_interpreter_prompt(&sample_pack(), &trend, &[], recent, 1, 1);
        let mut pack2 = sample_pack();
        pack2.as_of_date = d("2024-07-15");
        let b = build_interpreter_prompt(&pack2, &trend, &[], recent, 1, 1);
        assert_ne!(a.request_hash(), b.request_hash());
    }
}
