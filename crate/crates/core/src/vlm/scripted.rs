use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use super::{Completion, VlmBackend, VlmError, VlmRequest};

/// Replays a fixed list of responses in order, one per call.
#[derive(Debug)]
pub struct ScriptedBackend {
    responses: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
        }
    }

    /// Reads a JSON array of strings.
    pub fn from_file(path: &Path) -> Result<Self, VlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| VlmError::Config(format!("{}: {e}", path.display())))?;
        let items: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| VlmError::Config(format!("{}: expected a JSON array of strings: {e}", path.display())))?;
        Ok(Self::new(items))
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("script lock").len()
    }
}

impl VlmBackend for ScriptedBackend {
    fn complete(&self, request: &VlmRequest) -> Result<Completion, VlmError> {
        request.validate()?;
        let text = self
            .responses
            .lock()
            .expect("script lock")
            .pop_front()
            .ok_or(VlmError::ScriptExhausted)?;
        Ok(Completion { text, retries: 0 })
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}
