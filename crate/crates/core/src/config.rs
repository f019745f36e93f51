//! Run configuration: data locations, provider wiring, and the numeric
//! constants a run is allowed to tune.
//!
//! Configs are JSON with unknown keys rejected, so a typo fails loudly
//! instead of silently falling back to a default. The identifying hash of a
//! run covers everything except the output directory; two runs that differ
//! only in where they write share a hash and must produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::mock::{MomentumMockProvider, PersistenceMockProvider};
use crate::agents::provider::{HttpChatProvider, LlmProvider};
use crate::canon::{sha256_hex, to_canonical_json};
use crate::evidence::AblationFlags;
use crate::timeseries::{P90Scope, RECENT_WINDOW_WEEKS, VOLATILITY_MAX, VOLATILITY_MIN};

/// Sampling temperature for the event interpreter when the config leaves it
/// unset. The interpreter benefits from some variation in phrasing.
pub const INTERPRETER_TEMPERATURE: f64 = 0.6;
/// Sampling temperature for the forecast generator when unset. Numeric
/// output wants near-greedy decoding.
pub const FORECASTER_TEMPERATURE: f64 = 0.2;
/// Completion budget per agent call when the config leaves it unset.
pub const DEFAULT_MAX_TOKENS: u32 = 2000;
/// Forecast horizon in weeks when unset.
pub const DEFAULT_HORIZON_WEEKS: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which agent a provider is wired to. Decides the temperature default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Interpreter,
    Forecaster,
}

impl Role {
    pub fn default_temperature(self) -> f64 {
        match self {
            Role::Interpreter => INTERPRETER_TEMPERATURE,
            Role::Forecaster => FORECASTER_TEMPERATURE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Interpreter => "interpreter",
            Role::Forecaster => "forecaster",
        }
    }
}

/// Provider implementation selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// HTTP chat-completions endpoint.
    OpenaiCompatible,
    /// Deterministic rule-based provider; `model` picks the rule.
    Mock,
}

/// One agent's provider settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Model name for HTTP providers; `"momentum"` or `"persistence"` for
    /// mocks.
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    /// Overrides the role default when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Name of the environment variable holding the bearer token. The key
    /// itself never lives in a config file. Empty means no auth header.
    #[serde(default)]
    pub api_key_env: String,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

impl ProviderConfig {
    fn validate(&self, role: Role) -> Result<(), ConfigError> {
        match self.kind {
            ProviderKind::OpenaiCompatible => {
                if self.endpoint_url.as_deref().unwrap_or("").is_empty() {
                    return Err(ConfigError::Invalid(format!(
                        "{} provider: openai_compatible needs endpoint_url",
                        role.as_str()
                    )));
                }
                if self.model.is_empty() {
                    return Err(ConfigError::Invalid(format!(
                        "{} provider: model must not be empty",
                        role.as_str()
                    )));
                }
            }
            ProviderKind::Mock => {
                if self.model != "momentum" && self.model != "persistence" {
                    return Err(ConfigError::Invalid(format!(
                        "{} provider: unknown mock rule {:?} (expected \"momentum\" or \"persistence\")",
                        role.as_str(),
                        self.model
                    )));
                }
            }
        }
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(ConfigError::Invalid(format!(
                    "{} provider: temperature {t} outside [0, 2]",
                    role.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Instantiates the provider for `role`.
    pub fn build(&self, role: Role) -> Result<Box<dyn LlmProvider>, ConfigError> {
        self.validate(role)?;
        match self.kind {
            ProviderKind::Mock => match self.model.as_str() {
                "momentum" => Ok(Box::new(MomentumMockProvider)),
                "persistence" => Ok(Box::new(PersistenceMockProvider)),
                other => Err(ConfigError::Invalid(format!("unknown mock rule {other:?}"))),
            },
            ProviderKind::OpenaiCompatible => {
                let endpoint = self.endpoint_url.clone().expect("validated above");
                let provider = HttpChatProvider::new(
                    endpoint,
                    self.model.clone(),
                    self.temperature.unwrap_or(role.default_temperature()),
                    self.max_tokens,
                    self.api_key_env.clone(),
                )
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Box::new(provider))
            }
        }
    }
}

/// Interpreter and forecaster wiring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub interpreter: ProviderConfig,
    pub forecaster: ProviderConfig,
}

/// Input file locations. Relative paths are resolved against the config
/// file's directory at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub cases_csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weather_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calendar_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gov_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidelines_dir: Option<PathBuf>,
}

/// Numeric knobs of the forecasting rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    #[serde(default = "default_recent_window")]
    pub recent_window: usize,
    #[serde(default = "default_volatility_min")]
    pub volatility_min: f64,
    #[serde(default = "default_volatility_max")]
    pub volatility_max: f64,
}

fn default_horizon() -> u32 {
    DEFAULT_HORIZON_WEEKS
}
fn default_recent_window() -> usize {
    RECENT_WINDOW_WEEKS
}
fn default_volatility_min() -> f64 {
    VOLATILITY_MIN
}
fn default_volatility_max() -> f64 {
    VOLATILITY_MAX
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            horizon: DEFAULT_HORIZON_WEEKS,
            recent_window: RECENT_WINDOW_WEEKS,
            volatility_min: VOLATILITY_MIN,
            volatility_max: VOLATILITY_MAX,
        }
    }
}

fn default_p90_scope() -> P90Scope {
    P90Scope::Past
}

fn default_concurrency() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub providers: Providers,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub ablation: AblationFlags,
    /// Which observations the peak threshold may see. `past` excludes the
    /// current week and is the leak-free default.
    #[serde(default = "default_p90_scope")]
    pub p90_scope: P90Scope,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// A parsed config plus the hash identifying it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the canonical config JSON with `output_dir` removed, so
    /// runs that differ only in destination share a hash.
    pub config_hash: String,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.constants.horizon < 1 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        if self.constants.recent_window < 5 {
            return Err(ConfigError::Invalid(
                "recent_window must be at least 5 (four-week growth needs history)".into(),
            ));
        }
        if !(self.constants.volatility_min > 0.0
            && self.constants.volatility_min <= self.constants.volatility_max)
        {
            return Err(ConfigError::Invalid(format!(
                "volatility bounds [{}, {}] are not ordered",
                self.constants.volatility_min, self.constants.volatility_max
            )));
        }
        if self.concurrency < 1 {
            return Err(ConfigError::Invalid("concurrency must be at least 1".into()));
        }
        self.providers.interpreter.validate(Role::Interpreter)?;
        self.providers.forecaster.validate(Role::Forecaster)?;
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.data.cases_csv);
        for opt in [
            &mut self.data.weather_csv,
            &mut self.data.calendar_csv,
            &mut self.data.gov_csv,
            &mut self.data.guidelines_dir,
        ] {
            if let Some(p) = opt.as_mut() {
                resolve(base, p);
            }
        }
        resolve(base, &mut self.output_dir);
    }
}

/// Hash of the run-identifying parts of a config value: everything except
/// `output_dir`.
pub fn config_hash_of(value: &serde_json::Value) -> String {
    let mut stripped = value.clone();
    if let Some(map) = stripped.as_object_mut() {
        map.remove("output_dir");
    }
    sha256_hex(to_canonical_json(&stripped).as_bytes())
}

/// Loads, validates, and path-resolves a config file. The hash is computed
/// from the file as written, before path resolution, so it does not depend
/// on where the workspace is checked out.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    let config_hash = config_hash_of(&value);
    let mut config: RunConfig =
        serde_json::from_value(value).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    config.validate()?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.resolve_paths(base);
    Ok(LoadedConfig {
        config,
        config_hash,
    })
}
