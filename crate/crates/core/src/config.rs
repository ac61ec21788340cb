//! Study configuration files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::DEFAULT_PAGE_SIZE;
use crate::gateway::{ModelConfig, DEFAULT_ENDPOINT};
use crate::prompt::{PromptError, StudyFocus};
use crate::trace::{TraceConfig, DEFAULT_FUZZY_THRESHOLD};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },
    #[error("{path}: field {field:?} looks like a credential; API keys are read from the THEMATICA_API_KEY environment variable only")]
    CredentialInFile { path: String, field: String },
    #[error(transparent)]
    Focus(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_endpoint")]
    pub endpoint_url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_model() -> String {
    ModelConfig::default().model_id
}
fn default_temperature() -> f64 {
    ModelConfig::default().temperature
}
fn default_max_tokens() -> u32 {
    ModelConfig::default().max_tokens
}
fn default_endpoint() -> String {
    DEFAULT_ENDPOINT.to_string()
}
fn default_timeout() -> u64 {
    ModelConfig::default().timeout_secs
}
fn default_page_size() -> usize {
    DEFAULT_PAGE_SIZE
}
fn default_threshold() -> f64 {
    DEFAULT_FUZZY_THRESHOLD
}
fn default_parallelism() -> usize {
    1
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            model_id: m.model_id,
            temperature: m.temperature,
            max_tokens: m.max_tokens,
            endpoint_url: m.endpoint_url,
            timeout_secs: m.timeout_secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    pub focus_description: String,
    pub research_question: String,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "default_threshold")]
    pub fuzzy_threshold: f64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl Default for StudyConfig {
    /// Defaults with an empty study focus, which must be filled in before
    /// the config validates.
    fn default() -> Self {
        StudyConfig {
            page_size: DEFAULT_PAGE_SIZE,
            focus_description: String::new(),
            research_question: String::new(),
            model: ModelSection::default(),
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            parallelism: 1,
        }
    }
}

const CREDENTIAL_WORDS: [&str; 5] = ["api_key", "apikey", "secret", "token_value", "password"];

fn find_credential(v: &Value) -> Option<String> {
    match v {
        Value::Object(map) => map.iter().find_map(|(k, v)| {
            let lower = k.to_lowercase().replace('-', "_");
            if CREDENTIAL_WORDS.iter().any(|w| lower.contains(w)) {
                Some(k.clone())
            } else {
                find_credential(v)
            }
        }),
        Value::Array(items) => items.iter().find_map(find_credential),
        _ => None,
    }
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: p.clone(),
            detail: e.to_string(),
        })?;
        Self::from_json(&text, &p)
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let invalid = |detail: String| ConfigError::Invalid {
            path: origin.to_string(),
            detail,
        };
        let value: Value = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if let Some(field) = find_credential(&value) {
            return Err(ConfigError::CredentialInFile {
                path: origin.to_string(),
                field,
            });
        }
        let cfg: StudyConfig = serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    /// Checks ranges and that the study focus is filled in. `origin` names
    /// where the values came from in error messages.
    pub fn validate(&self, origin: &str) -> Result<(), ConfigError> {
        let invalid = |detail: String| ConfigError::Invalid {
            path: origin.to_string(),
            detail,
        };
        if self.page_size == 0 {
            return Err(invalid("page_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fuzzy_threshold) {
            return Err(invalid(format!("fuzzy_threshold {} is outside [0, 1]", self.fuzzy_threshold)));
        }
        self.model_config().validate().map_err(|e| invalid(e.to_string()))?;
        self.focus()?;
        Ok(())
    }

    pub fn focus(&self) -> Result<StudyFocus, PromptError> {
        StudyFocus::new(self.focus_description.clone(), self.research_question.clone())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            model_id: self.model.model_id.clone(),
            temperature: self.model.temperature,
            max_tokens: self.model.max_tokens,
            endpoint_url: self.model.endpoint_url.clone(),
            timeout_secs: self.model.timeout_secs,
        }
    }

    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            fuzzy_threshold: self.fuzzy_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"focus_description": "f", "research_question": "q?"}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = StudyConfig::from_json(MINIMAL, "t").unwrap();
        assert_eq!(cfg.page_size, 10);
        assert_eq!(cfg.model_config(), ModelConfig::default());
        assert_eq!(cfg.fuzzy_threshold, 0.85);
    }

    #[test]
    fn credentials_are_refused() {
        for text in [
            r#"{"focus_description": "f", "research_question": "q", "api_key": "sk-1"}"#,
            r#"{"focus_description": "f", "research_question": "q", "model": {"openai_api_key": "sk-1"}}"#,
        ] {
            assert!(matches!(
                StudyConfig::from_json(text, "t"),
                Err(ConfigError::CredentialInFile { .. })
            ));
        }
    }

    #[test]
    fn unknown_and_invalid_fields() {
        let unknown = r#"{"focus_description": "f", "research_question": "q", "colour": 1}"#;
        assert!(matches!(StudyConfig::from_json(unknown, "t"), Err(ConfigError::Invalid { .. })));
        let bad = r#"{"focus_description": "f", "research_question": "q", "model": {"temperature": 3.0}}"#;
        assert!(matches!(StudyConfig::from_json(bad, "t"), Err(ConfigError::Invalid { .. })));
        let empty = r#"{"focus_description": " ", "research_question": "q"}"#;
        assert!(matches!(StudyConfig::from_json(empty, "t"), Err(ConfigError::Focus(_))));
    }

    #[test]
    fn bundled_sample_loads() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample/config.json");
        let cfg = StudyConfig::load(&path).unwrap();
        assert_eq!(cfg.focus().unwrap(), StudyFocus::sample());
    }
}
