use std::fmt;
use std::time::Duration;

use thiserror::Error;
use url::Url;

pub const API_KEY_VAR: &str = "COTHOUGHT_API_KEY";
pub const BASE_URL_VAR: &str = "COTHOUGHT_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";
pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o";
pub const DEFAULT_IMAGE_MODEL: &str = "gpt-image-1";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{API_KEY_VAR} is not set")]
    MissingApiKey,
    #[error("invalid base url {url:?}: {reason}")]
    BadUrl { url: String, reason: String },
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("temperature must be a finite value >= 0, got {0}")]
    BadTemperature(f64),
}

/// A credential that never prints itself.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: Url,
    pub api_key: Secret,
    pub model_name: String,
    pub timeout: Duration,
    pub temperature: f64,
}

impl EndpointConfig {
    pub fn new(
        base_url: &str,
        api_key: Secret,
        model_name: impl Into<String>,
    ) -> Result<Self, ConfigError> {
        let config = Self {
            base_url: parse_base(base_url)?,
            api_key,
            model_name: model_name.into(),
            timeout: Duration::from_secs(120),
            temperature: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    /// Reads the key (required) and base URL (optional) from the environment.
    pub fn from_env(model_name: impl Into<String>) -> Result<Self, ConfigError> {
        Self::from_lookup(model_name, |k| std::env::var(k).ok())
    }

    pub fn from_lookup(
        model_name: impl Into<String>,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let key = lookup(API_KEY_VAR)
            .filter(|k| !k.trim().is_empty())
            .ok_or(ConfigError::MissingApiKey)?;
        let base = lookup(BASE_URL_VAR).unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        Self::new(&base, Secret::new(key), model_name)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Result<Self, ConfigError> {
        self.timeout = timeout;
        self.validate()?;
        Ok(self)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, ConfigError> {
        self.temperature = temperature;
        self.validate()?;
        Ok(self)
    }

    pub fn with_model(mut self, model_name: impl Into<String>) -> Self {
        self.model_name = model_name.into();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout.is_zero() {
            return Err(ConfigError::ZeroTimeout);
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ConfigError::BadTemperature(self.temperature));
        }
        Ok(())
    }

    /// `{base_url}/{path}`, keeping any path prefix of the base.
    pub fn endpoint(&self, path: &str) -> String {
        let base = self.base_url.as_str().trim_end_matches('/');
        format!("{base}/{}", path.trim_start_matches('/'))
    }
}

fn parse_base(raw: &str) -> Result<Url, ConfigError> {
    let bad = |reason: String| ConfigError::BadUrl {
        url: raw.to_string(),
        reason,
    };
    let url = Url::parse(raw).map_err(|e| bad(e.to_string()))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(bad(format!("unsupported scheme {}", url.scheme())));
    }
    if url.cannot_be_a_base() {
        return Err(bad("not a base url".into()));
    }
    Ok(url)
}
