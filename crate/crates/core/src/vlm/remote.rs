//! Chat-completions transport: `POST <endpoint>/chat/completions` with one
//! multimodal user message, images inlined as base64 `data:` URLs.

use std::io::Cursor;
use std::thread;
use std::time::Duration;

use base64::Engine;
use image::{imageops, RgbImage};
use rand::Rng;
use serde_json::{json, Value};

use super::{Completion, ContentPart, VlmBackend, VlmError, VlmRequest};

pub const API_KEY_ENV: &str = "VLM_API_KEY";

/// Exponential backoff between transport attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: f64,
    /// Each delay is stretched by a uniform factor in `[1, 1 + jitter]`.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    /// Delay to wait after failed attempt number `attempt` (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let nominal = self.base_delay.as_secs_f64() * self.factor.powi(attempt.saturating_sub(1) as i32);
        let stretch = if self.jitter > 0.0 {
            1.0 + rand::thread_rng().gen_range(0.0..self.jitter)
        } else {
            1.0
        };
        Duration::from_secs_f64(nominal * stretch)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
    /// Images whose longer side exceeds this are downscaled before sending.
    pub max_image_px: Option<u32>,
    pub retry: RetryPolicy,
}

impl RemoteConfig {
    /// Reads the credential from `VLM_API_KEY`.
    pub fn from_env(endpoint: &str, model: &str) -> Result<Self, VlmError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(VlmError::MissingCredential(API_KEY_ENV))?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            timeout: Duration::from_secs(120),
            max_image_px: None,
            retry: RetryPolicy::default(),
        })
    }
}

pub fn encode_image_data_url(image: &RgbImage, max_image_px: Option<u32>) -> String {
    let scaled;
    let img = match max_image_px {
        Some(limit) if image.width().max(image.height()) > limit && limit > 0 => {
            let s = limit as f64 / image.width().max(image.height()) as f64;
            let w = ((image.width() as f64 * s).round() as u32).max(1);
            let h = ((image.height() as f64 * s).round() as u32).max(1);
            scaled = imageops::resize(image, w, h, imageops::FilterType::Triangle);
            &scaled
        }
        _ => image,
    };
    let mut png = Vec::new();
    img.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
        .expect("PNG encoding into memory");
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png)
    )
}

/// JSON body for one chat-completions call.
pub fn build_request_body(model: &str, request: &VlmRequest, max_image_px: Option<u32>) -> Value {
    let content: Vec<Value> = request
        .parts
        .iter()
        .map(|part| match part {
            ContentPart::Text(t) => json!({"type": "text", "text": t}),
            ContentPart::Image(img) => json!({
                "type": "image_url",
                "image_url": {"url": encode_image_data_url(img, max_image_px)}
            }),
        })
        .collect();
    json!({
        "model": model,
        "temperature": request.temperature,
        "messages": [{"role": "user", "content": content}],
    })
}

fn response_text(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content")?.as_str().map(str::to_string)
}

#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

enum AttemptError {
    Retryable(String),
    Fatal(String),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, VlmError> {
        if config.api_key.trim().is_empty() {
            return Err(VlmError::MissingCredential(API_KEY_ENV));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| VlmError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> Result<String, AttemptError> {
        let resp = self
            .client
            .post(self.url())
            .bearer_auth(&self.config.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() || e.is_request() {
                    AttemptError::Retryable(e.to_string())
                } else {
                    AttemptError::Fatal(e.to_string())
                }
            })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(AttemptError::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .json()
            .map_err(|e| AttemptError::Fatal(format!("response is not JSON: {e}")))?;
        response_text(&value).ok_or_else(|| AttemptError::Fatal("response lacks choices[0].message.content".into()))
    }
}

impl VlmBackend for RemoteBackend {
    fn complete(&self, request: &VlmRequest) -> Result<Completion, VlmError> {
        request.validate()?;
        let body = build_request_body(&self.config.model, request, self.config.max_image_px);
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        retries: attempt - 1,
                    })
                }
                Err(AttemptError::Retryable(msg)) if attempt < request.max_attempts => {
                    let wait = self.config.retry.delay(attempt);
                    log::warn!("VLM attempt {attempt} failed ({msg}); retrying in {wait:?}");
                    thread::sleep(wait);
                    attempt += 1;
                }
                Err(AttemptError::Retryable(message)) | Err(AttemptError::Fatal(message)) => {
                    return Err(VlmError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
            }
        }
    }

    fn kind(&self) -> &'static str {
        "remote"
    }
}
