//! The two LLM agents and their output contracts.
//!
//! Agent one (the event interpreter) reads the evidence pack and emits a
//! transmission-impact signal; agent two (the forecast generator) reads the
//! series plus that signal and emits a mean trajectory with an uncertainty
//! scale. Both speak strict JSON: the response must be exactly one JSON
//! object, no markdown fences, no trailing text. A response that fails to
//! parse or violates a range constraint is retried once with the identical
//! request; a second failure marks the origin invalid so a rolling run can
//! exclude it and keep going.

pub mod mock;
pub mod prompts;
pub mod provider;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompts::{
    build_forecaster_prompt, build_interpreter_prompt, ChatPrompt, DEFAULT_IMPACT_LAG_WEEKS,
};
pub use provider::{LlmProvider, TransportError};

/// Maximum attempts per agent call: the original request plus one retry.
pub const MAX_ATTEMPTS: usize = 2;

/// A contract violation in an otherwise well-formed transport response.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct ContractViolation(pub String);

/// Errors surfaced by agent calls.
#[derive(Debug, Error)]
pub enum AgentError {
    /// Both attempts failed; the forecast origin cannot be scored.
    #[error("origin invalid after {attempts} attempts: {}", reasons.join("; "))]
    InvalidOrigin {
        attempts: usize,
        reasons: Vec<String>,
    },
}

/// Agent one's output: the qualitative evidence compressed into a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSignal {
    /// Expected net transmission effect from next week onward, in [-1, 1].
    pub transmission_impact: f64,
    /// Confidence in the impact estimate, in [0, 1].
    pub confidence: f64,
    pub event_summary: String,
    pub risk_notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag_rationale: Option<String>,
}

impl ContextSignal {
    /// The signal used when the interpreter is ablated away: no expected
    /// effect, no confidence.
    pub fn neutral() -> Self {
        ContextSignal {
            transmission_impact: 0.0,
            confidence: 0.0,
            event_summary: String::new(),
            risk_notes: Vec::new(),
            lag_rationale: None,
        }
    }

    pub fn validate(&self) -> Result<(), ContractViolation> {
        if !self.transmission_impact.is_finite()
            || !(-1.0..=1.0).contains(&self.transmission_impact)
        {
            return Err(ContractViolation(format!(
                "transmission_impact {} outside [-1, 1]",
                self.transmission_impact
            )));
        }
        if !self.confidence.is_finite() || !(0.0..=1.0).contains(&self.confidence) {
            return Err(ContractViolation(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Agent two's output: a raw mean trajectory plus a scalar uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawForecast {
    /// Mean forecast per horizon step; every entry must be finite and >= 0.
    pub forecast_mean: Vec<f64>,
    /// Scalar uncertainty in [0, 1]; feeds the calibration variance blend.
    pub uncertainty_scale: f64,
    pub rationale: String,
}

impl RawForecast {
    pub fn validate(&self, horizon_weeks: u32) -> Result<(), ContractViolation> {
        if self.forecast_mean.len() != horizon_weeks as usize {
            return Err(ContractViolation(format!(
                "forecast_mean has length {}, expected {horizon_weeks}",
                self.forecast_mean.len()
            )));
        }
        for (i, &m) in self.forecast_mean.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(ContractViolation(format!(
                    "forecast_mean[{i}] = {m} is not a finite non-negative number"
                )));
            }
        }
        if !self.uncertainty_scale.is_finite() || !(0.0..=1.0).contains(&self.uncertainty_scale) {
            return Err(ContractViolation(format!(
                "uncertainty_scale {} outside [0, 1]",
                self.uncertainty_scale
            )));
        }
        Ok(())
    }
}

/// Parses a raw response as exactly one JSON value of type `T`.
///
/// Leading and trailing whitespace is tolerated; anything else around the
/// object (markdown fences, prose, a second object) is rejected.
fn strict_json<T: serde::de::DeserializeOwned>(raw: &str) -> Result<T, ContractViolation> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(ContractViolation("empty response".into()));
    }
    serde_json::from_str(trimmed).map_err(|e| ContractViolation(format!("invalid JSON: {e}")))
}

/// Parses and validates an interpreter response.
pub fn parse_context_signal(raw: &str) -> Result<ContextSignal, ContractViolation> {
    let signal: ContextSignal = strict_json(raw)?;
    signal.validate()?;
    Ok(signal)
}

/// Parses and validates a forecaster response against the horizon.
pub fn parse_raw_forecast(raw: &str, horizon_weeks: u32) -> Result<RawForecast, ContractViolation> {
    let forecast: RawForecast = strict_json(raw)?;
    forecast.validate(horizon_weeks)?;
    Ok(forecast)
}

/// Issues the request, parsing with `parse`; on failure reissues the
/// identical request once. Two failures exhaust the origin.
fn call_with_retry<T>(
    provider: &dyn LlmProvider,
    prompt: &ChatPrompt,
    parse: impl Fn(&str) -> Result<T, ContractViolation>,
) -> Result<T, AgentError> {
    let mut reasons = Vec::new();
    for attempt in 1..=MAX_ATTEMPTS {
        match provider.complete(prompt) {
            Ok(raw) => match parse(&raw) {
                Ok(value) => return Ok(value),
                Err(violation) => reasons.push(format!("attempt {attempt}: {violation}")),
            },
            Err(transport) => reasons.push(format!("attempt {attempt}: {transport}")),
        }
    }
    Err(AgentError::InvalidOrigin {
        attempts: MAX_ATTEMPTS,
        reasons,
    })
}

/// Runs the event interpreter once (plus at most one retry).
pub fn interpret(
    provider: &dyn LlmProvider,
    prompt: &ChatPrompt,
) -> Result<ContextSignal, AgentError> {
    call_with_retry(provider, prompt, parse_context_signal)
}

/// Runs the forecast generator once (plus at most one retry).
pub fn generate_raw_forecast(
    provider: &dyn LlmProvider,
    prompt: &ChatPrompt,
    horizon_weeks: u32,
) -> Result<RawForecast, AgentError> {
    call_with_retry(provider, prompt, |raw| parse_raw_forecast(raw, horizon_weeks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_clean_signal() {
        let raw = r#"{
            "transmission_impact": 0.42,
            "confidence": 0.72,
            "event_summary": "rising",
            "risk_notes": ["schools open"],
            "lag_rationale": "applies from next week"
        }"#;
        let s = parse_context_signal(raw).unwrap();
        assert_eq!(s.transmission_impact, 0.42);
        assert_eq!(s.confidence, 0.72);
    }

    #[test]
    fn lag_rationale_is_optional() {
        let raw = r#"{"transmission_impact": 0.1, "confidence": 0.5,
                      "event_summary": "", "risk_notes": []}"#;
        let s = parse_context_signal(raw).unwrap();
        assert_eq!(s.lag_rationale, None);
    }

    #[test]
    fn rejects_markdown_fences_and_trailing_text() {
        let fenced = "```json\n{\"transmission_impact\":0.1,\"confidence\":0.5,\
                      \"event_summary\":\"\",\"risk_notes\":[]}\n```";
        assert!(parse_context_signal(fenced).is_err());

        let trailing = "{\"transmission_impact\":0.1,\"confidence\":0.5,\
                        \"event_summary\":\"\",\"risk_notes\":[]} done";
        assert!(parse_context_signal(trailing).is_err());

        let two_objects = "{\"transmission_impact\":0.1,\"confidence\":0.5,\
                           \"event_summary\":\"\",\"risk_notes\":[]}\n{}";
        assert!(parse_context_signal(two_objects).is_err());
    }

    #[test]
    fn whitespace_padding_is_tolerated() {
        let raw = "\n  {\"transmission_impact\":0.1,\"confidence\":0.5,\
                   \"event_summary\":\"\",\"risk_notes\":[]}  \n";
        assert!(parse_context_signal(raw).is_ok());
    }

    #[test]
    fn rejects_out_of_range_and_unknown_fields() {
        let high = r#"{"transmission_impact": 1.5, "confidence": 0.5,
                       "event_summary": "", "risk_notes": []}"#;
        assert!(parse_context_signal(high).is_err());

        let extra = r#"{"transmission_impact": 0.5, "confidence": 0.5,
                        "event_summary": "", "risk_notes": [], "mood": "good"}"#;
        assert!(parse_context_signal(extra).is_err());

        let missing = r#"{"transmission_impact": 0.5}"#;
        assert!(parse_context_signal(missing).is_err());
    }

    #[test]
    fn forecast_contract_checks_length_sign_and_scale() {
        let ok = r#"{"forecast_mean": [11.2], "uncertainty_scale": 0.33, "rationale": "r"}"#;
        let f = parse_raw_forecast(ok, 1).unwrap();
        assert_eq!(f.forecast_mean, vec![11.2]);

        let wrong_len = r#"{"forecast_mean": [1.0, 2.0], "uncertainty_scale": 0.3, "rationale": ""}"#;
        assert!(parse_raw_forecast(wrong_len, 1).is_err());

        let negative = r#"{"forecast_mean": [-0.5], "uncertainty_scale": 0.3, "rationale": ""}"#;
        assert!(parse_raw_forecast(negative, 1).is_err());

        let big_scale = r#"{"forecast_mean": [2.0], "uncertainty_scale": 1.2, "rationale": ""}"#;
        assert!(parse_raw_forecast(big_scale, 1).is_err());

        let extra = r#"{"forecast_mean": [2.0], "uncertainty_scale": 0.2, "rationale": "",
                        "quantiles": {}}"#;
        assert!(parse_raw_forecast(extra, 1).is_err());
    }

    #[test]
    fn zero_forecast_mean_is_valid() {
        let raw = r#"{"forecast_mean": [0.0], "uncertainty_scale": 0.0, "rationale": "calm"}"#;
        assert!(parse_raw_forecast(raw, 1).is_ok());
    }

    #[test]
    fn neutral_signal_is_zeroed() {
        let s = ContextSignal::neutral();
        assert_eq!(s.transmission_impact, 0.0);
        assert_eq!(s.confidence, 0.0);
        assert!(s.validate().is_ok());
    }
}
