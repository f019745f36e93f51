//! Deterministic providers: rule-based mocks and scriptable test doubles.
//!
//! The momentum and persistence mocks are real provider implementations
//! selectable from config; they let the full pipeline run offline and give
//! evaluation a deterministic baseline. The scripted and capturing providers
//! exist for tests that need exact control over responses or visibility
//! into the prompts that were sent.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use serde_json::{json, Value};

use super::prompts::ChatPrompt;
use super::provider::{LlmProvider, TransportError};

/// Uncertainty scale both rule-based mocks report. Chosen so calibrated
/// 90% intervals stay honest on typical weekly count series.
pub const MOCK_UNCERTAINTY_SCALE: f64 = 0.5;

fn payload(prompt: &ChatPrompt) -> Result<Value, TransportError> {
    serde_json::from_str(&prompt.user)
        .map_err(|e| TransportError(format!("mock provider: prompt payload is not JSON: {e}")))
}

fn recent_values(payload: &Value) -> Result<Vec<f64>, TransportError> {
    payload["recent_values"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .filter(|v: &Vec<f64>| !v.is_empty())
        .ok_or_else(|| TransportError("mock provider: payload lacks recent_values".into()))
}

fn horizon(payload: &Value) -> u32 {
    payload["horizon_weeks"].as_u64().unwrap_or(1) as u32
}

fn is_forecaster_payload(payload: &Value) -> bool {
    payload.get("full_history").is_some()
}

fn round1(x: f64) -> f64 {
    let r = (x * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Trend-following mock: extends the last weekly change, damped.
///
/// As an interpreter it maps the four-week growth rate onto a proportional
/// impact; as a forecaster it extrapolates `last + 0.5 * delta` per step.
pub struct MomentumMockProvider;

impl LlmProvider for MomentumMockProvider {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError> {
        let payload = payload(prompt)?;
        if is_forecaster_payload(&payload) {
            let rv = recent_values(&payload)?;
            let h = horizon(&payload);
            let last = *rv.last().expect("recent_values is non-empty");
            let prev = if rv.len() >= 2 { rv[rv.len() - 2] } else { last };
            let delta = last - prev;
            let means: Vec<f64> = (1..=h)
                .map(|k| round1((last + 0.5 * delta * k as f64).max(0.0)))
                .collect();
            Ok(json!({
                "forecast_mean": means,
                "uncertainty_scale": MOCK_UNCERTAINTY_SCALE,
                "rationale": "Momentum rule: damped extension of the latest weekly change, applied from week t+1 per the lag policy."
            })
            .to_string())
        } else {
            let growth = payload["trend"]["growth_rate"].as_f64().ok_or_else(|| {
                TransportError("mock provider: payload lacks trend.growth_rate".into())
            })?;
            let impact = round2((growth / 4.0).clamp(-1.0, 1.0));
            Ok(json!({
                "transmission_impact": impact,
                "confidence": 0.5,
                "event_summary": "Trend-following reading of the recent growth rate.",
                "risk_notes": ["momentum signal derived from recent growth"],
                "lag_rationale": "Effect assumed to apply from next week onward."
            })
            .to_string())
        }
    }

    fn name(&self) -> &str {
        "mock_momentum"
    }
}

/// Flat mock: forecasts the last observed value with no interpreted signal.
pub struct PersistenceMockProvider;

impl LlmProvider for PersistenceMockProvider {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError> {
        let payload = payload(prompt)?;
        if is_forecaster_payload(&payload) {
            let rv = recent_values(&payload)?;
            let h = horizon(&payload);
            let last = *rv.last().expect("recent_values is non-empty");
            Ok(json!({
                "forecast_mean": vec![round1(last); h as usize],
                "uncertainty_scale": MOCK_UNCERTAINTY_SCALE,
                "rationale": "Persistence rule: repeat the last observed week; no lagged impact applied."
            })
            .to_string())
        } else {
            Ok(json!({
                "transmission_impact": 0.0,
                "confidence": 0.0,
                "event_summary": "Persistence baseline carries no event interpretation.",
                "risk_notes": [],
                "lag_rationale": null
            })
            .to_string())
        }
    }

    fn name(&self) -> &str {
        "mock_persistence"
    }
}

/// Test double answering from a script keyed by request hash.
///
/// Responses queue per hash and are consumed in order; a default response,
/// when set, answers any unscripted request. Every call's request hash is
/// logged so tests can assert on attempt counts and request identity.
#[derive(Default)]
pub struct ScriptedProvider {
    responses: Mutex<HashMap<String, VecDeque<String>>>,
    default_response: Option<String>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(response: &str) -> Self {
        ScriptedProvider {
            default_response: Some(response.to_owned()),
            ..Self::default()
        }
    }

    /// Queues `response` for requests whose prompt hashes to `request_hash`.
    pub fn script(&self, request_hash: &str, response: &str) {
        self.responses
            .lock()
            .expect("script map lock")
            .entry(request_hash.to_owned())
            .or_default()
            .push_back(response.to_owned());
    }

    /// Request hashes of every call received, in order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("call log lock").clone()
    }
}

impl LlmProvider for ScriptedProvider {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError> {
        let hash = prompt.request_hash();
        self.calls.lock().expect("call log lock").push(hash.clone());
        if let Some(r) = self
            .responses
            .lock()
            .expect("script map lock")
            .get_mut(&hash)
            .and_then(VecDeque::pop_front)
        {
            return Ok(r);
        }
        match &self.default_response {
            Some(r) => Ok(r.clone()),
            None => Err(TransportError(format!("no scripted response for {hash}"))),
        }
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Wraps a provider and records every prompt sent through it.
pub struct CapturingProvider<P> {
    inner: P,
    prompts: Mutex<Vec<String>>,
}

impl<P: LlmProvider> CapturingProvider<P> {
    pub fn new(inner: P) -> Self {
        CapturingProvider {
            inner,
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Full prompt texts observed so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.prompts.lock().expect("prompt log lock").len()
    }
}

impl<P: LlmProvider> LlmProvider for CapturingProvider<P> {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError> {
        self.prompts
            .lock()
            .expect("prompt log lock")
            .push(prompt.text());
        self.inner.complete(prompt)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
