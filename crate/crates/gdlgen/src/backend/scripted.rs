//! Scripted backend: canned responses keyed by request kind and per-kind
//! call index. Used for tests, replay, and adversarial fixtures.
//!
//! The file format is a JSON map from `"<kind>#<call-index>"` to the
//! response string. Two fallback keys are supported: `"<kind>#*"` answers
//! any call of that kind without an exact entry, and `"*"` answers
//! anything else.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Backend, BackendError, BackendResponse, GenerationRequest, RequestKind};

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    responses: BTreeMap<String, String>,
    counters: BTreeMap<RequestKind, usize>,
}

impl ScriptedBackend {
    pub fn from_map(responses: BTreeMap<String, String>) -> ScriptedBackend {
        ScriptedBackend {
            responses,
            counters: BTreeMap::new(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<ScriptedBackend, BackendError> {
        let responses: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| BackendError::Config {
                message: format!("scripted backend file is not a JSON string map: {}", e),
            })?;
        Ok(ScriptedBackend::from_map(responses))
    }

    pub fn from_path(path: &Path) -> Result<ScriptedBackend, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Config {
            message: format!(
                "cannot read scripted backend file {}: {}",
                path.display(),
                e
            ),
        })?;
        ScriptedBackend::from_json_str(&text)
    }

    /// Number of calls answered so far for `kind`.
    pub fn calls(&self, kind: RequestKind) -> usize {
        self.counters.get(&kind).copied().unwrap_or(0)
    }
}

impl Backend for ScriptedBackend {
    fn generate(&mut self, req: &GenerationRequest) -> Result<BackendResponse, BackendError> {
        let kind = req.kind();
        let index = self.counters.entry(kind).or_insert(0);
        let key = format!("{}#{}", kind.name(), index);
        *index += 1;
        let text = self
            .responses
            .get(&key)
            .or_else(|| self.responses.get(&format!("{}#*", kind.name())))
            .or_else(|| self.responses.get("*"))
            .ok_or(BackendError::MissingScript { key })?;
        Ok(BackendResponse {
            text: text.clone(),
            latency_ms: 0,
        })
    }

    fn label(&self) -> &'static str {
        "scripted"
    }
}
