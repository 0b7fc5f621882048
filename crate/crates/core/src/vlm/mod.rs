//! Vision-language model backends.
//!
//! [`RemoteBackend`] speaks the chat-completions wire format. The scripted
//! and oracle backends answer offline: the former replays fixed strings, the
//! latter answers every pipeline stage from synthetic ground truth.

mod json;
mod oracle;
mod remote;
mod scripted;

use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

pub use json::{parse_json_payload, PayloadError};
pub use oracle::OracleBackend;
pub use remote::{build_request_body, encode_image_data_url, RemoteBackend, RemoteConfig, RetryPolicy, API_KEY_ENV};
pub use scripted::ScriptedBackend;

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum VlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("scripted backend has no responses left")]
    ScriptExhausted,
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("oracle cannot answer: {0}")]
    Oracle(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub enum ContentPart {
    Text(String),
    Image(Arc<RgbImage>),
}

/// An ordered multimodal prompt sent as a single user message.
#[derive(Debug, Clone)]
pub struct VlmRequest {
    pub parts: Vec<ContentPart>,
    pub temperature: f64,
    pub max_attempts: u32,
}

impl VlmRequest {
    pub fn new(parts: Vec<ContentPart>, temperature: f64, max_attempts: u32) -> Result<Self, VlmError> {
        let req = Self {
            parts,
            temperature,
            max_attempts,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), VlmError> {
        if !self.parts.iter().any(|p| matches!(p, ContentPart::Text(_))) {
            return Err(VlmError::InvalidRequest("at least one text part is required".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(VlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_attempts == 0 {
            return Err(VlmError::InvalidRequest("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// All text parts joined with newlines.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text(t) => Some(t.as_str()),
                ContentPart::Image(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.parts.iter().filter(|p| matches!(p, ContentPart::Image(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Transport retries spent before this answer.
    pub retries: u32,
}

pub trait VlmBackend: Send + Sync {
    fn complete(&self, request: &VlmRequest) -> Result<Completion, VlmError>;

    fn kind(&self) -> &'static str;
}
