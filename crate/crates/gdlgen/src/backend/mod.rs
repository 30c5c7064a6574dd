//! The text-generation contract shared by both decoding loops, and its three
//! implementations: an HTTP chat-completions client, a scripted backend for
//! tests and replay, and the seeded random baseline.

mod extract;
mod http;
pub mod prompt;
mod random;
mod scripted;

pub use extract::{extract_completion, extract_grammar, extract_sexpr, extract_token};
pub use http::{HttpBackend, HttpConfig, RetryPolicy};
pub use prompt::{build_prompt, TEMPLATE_VERSION};
pub use random::{random_expand, ExpandError, RandomBackend};
pub use scripted::ScriptedBackend;

use thiserror::Error;

use crate::earley::TerminalExpectation;
use crate::grammar::Grammar;

/// One in-context demonstration. The grammar is omitted for methods that
/// prompt with plain (query, description) pairs.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub query: String,
    pub grammar: Option<Grammar>,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RequestKind {
    GenerateGrammar,
    CompleteRules,
    GenerateDescription,
    SelectTerminal,
    CompleteDescription,
}

impl RequestKind {
    pub fn name(self) -> &'static str {
        match self {
            RequestKind::GenerateGrammar => "GenerateGrammar",
            RequestKind::CompleteRules => "CompleteRules",
            RequestKind::GenerateDescription => "GenerateDescription",
            RequestKind::SelectTerminal => "SelectTerminal",
            RequestKind::CompleteDescription => "CompleteDescription",
        }
    }
}

/// Kind-specific payload; the variant is the request kind.
#[derive(Debug, Clone)]
pub enum RequestPayload {
    GenerateGrammar,
    CompleteRules {
        valid: Grammar,
        candidates: Grammar,
    },
    GenerateDescription {
        grammar: Option<Grammar>,
    },
    SelectTerminal {
        grammar: Grammar,
        prefix: String,
        candidates: Vec<TerminalExpectation>,
    },
    CompleteDescription {
        grammar: Grammar,
        prefix: String,
    },
}

impl RequestPayload {
    pub fn kind(&self) -> RequestKind {
        match self {
            RequestPayload::GenerateGrammar => RequestKind::GenerateGrammar,
            RequestPayload::CompleteRules { .. } => RequestKind::CompleteRules,
            RequestPayload::GenerateDescription { .. } => RequestKind::GenerateDescription,
            RequestPayload::SelectTerminal { .. } => RequestKind::SelectTerminal,
            RequestPayload::CompleteDescription { .. } => RequestKind::CompleteDescription,
        }
    }
}

/// Sampling parameters forwarded to backends that sample.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub demos: Vec<Demonstration>,
    pub query: String,
    pub payload: RequestPayload,
    pub params: GenParams,
}

impl GenerationRequest {
    pub fn kind(&self) -> RequestKind {
        self.payload.kind()
    }
}

/// Raw backend output. Deterministic backends report zero latency so runs
/// replaying the same script stay byte-identical.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Error)]
pub enum BackendError {
    #[error("no scripted response for {key}")]
    MissingScript { key: String },
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("http {status}: {message}")]
    Http { status: u16, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("backend configuration error: {message}")]
    Config { message: String },
}

/// The generation contract. Callers own extraction and validation of the
/// returned text.
pub trait Backend {
    fn generate(&mut self, req: &GenerationRequest) -> Result<BackendResponse, BackendError>;

    fn label(&self) -> &'static str;
}
