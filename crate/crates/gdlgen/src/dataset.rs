//! Dataset loading and demonstration selection.
//!
//! Records live in JSONL: one object per line with `id`, `category`,
//! `query`, `description`, and an optional `grammar` in the grammar text
//! format. Loading validates that descriptions lex and that a bundled
//! grammar is closed and derives its description.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::earley;
use crate::grammar::Grammar;
use crate::lexer::tokenize;

#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub category: String,
    pub query: String,
    pub description: String,
    pub grammar: Option<Grammar>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate id {id} (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("example {id}: description does not lex: {message}")]
    BadDescription { id: String, message: String },
    #[error("example {id}: bundled grammar is invalid: {message}")]
    BadGrammar { id: String, message: String },
    #[error("example {id}: description is not derivable from its bundled grammar")]
    GrammarMismatch { id: String },
    #[error("max_tokens must be at least 1")]
    BadLengthBound,
    #[error("not enough demonstrations for {id}: category {category} has {available} other example(s), need {needed}")]
    InsufficientPool {
        id: String,
        category: String,
        available: usize,
        needed: usize,
    },
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    category: String,
    query: String,
    description: String,
    #[serde(default)]
    grammar: Option<String>,
}

pub fn load_dataset(path: &Path) -> Result<Vec<Example>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut out: Vec<Example> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if out.iter().any(|e| e.id == raw.id) {
            return Err(DatasetError::DuplicateId {
                id: raw.id,
                line: line_no,
            });
        }
        let stream = tokenize(&raw.description).map_err(|e| DatasetError::BadDescription {
            id: raw.id.clone(),
            message: e.to_string(),
        })?;
        let grammar = match &raw.grammar {
            Some(gtext) => {
                let g = Grammar::parse(gtext, false).map_err(|e| DatasetError::BadGrammar {
                    id: raw.id.clone(),
                    message: e.to_string(),
                })?;
                let ok = earley::recognize(&g, &stream).map_err(|e| DatasetError::BadGrammar {
                    id: raw.id.clone(),
                    message: e.to_string(),
                })?;
                if !ok {
                    return Err(DatasetError::GrammarMismatch { id: raw.id });
                }
                Some(g)
            }
            None => None,
        };
        out.push(Example {
            id: raw.id,
            category: raw.category,
            query: raw.query,
            description: raw.description,
            grammar,
        });
    }
    Ok(out)
}

/// Default token counter: lexer token count of the description.
pub fn lexer_token_count(text: &str) -> usize {
    tokenize(text).map(|ts| ts.len()).unwrap_or(usize::MAX)
}

/// Keeps examples whose description counts at most `max_tokens` tokens
/// (inclusive bound) under the supplied counter.
pub fn filter_by_length(
    examples: Vec<Example>,
    max_tokens: usize,
    counter: &dyn Fn(&str) -> usize,
) -> Result<Vec<Example>, DatasetError> {
    if max_tokens == 0 {
        return Err(DatasetError::BadLengthBound);
    }
    Ok(examples
        .into_iter()
        .filter(|e| counter(&e.description) <= max_tokens)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoMode {
    /// Demonstrations share the test example's category.
    Same,
    /// Demonstrations come from every other category.
    Cross,
}

/// Selects `n` demonstrations for `test` from `pool` without replacement,
/// seeded Fisher-Yates order. The pool must not contain the test example.
pub fn select_demonstrations(
    pool: &[Example],
    test: &Example,
    n: usize,
    mode: DemoMode,
    seed: u64,
) -> Result<Vec<Example>, DatasetError> {
    let eligible: Vec<&Example> = pool
        .iter()
        .filter(|e| e.id != test.id)
        .filter(|e| match mode {
            DemoMode::Same => e.category == test.category,
            DemoMode::Cross => e.category != test.category,
        })
        .collect();
    if eligible.len() < n {
        return Err(DatasetError::InsufficientPool {
            id: test.id.clone(),
            category: test.category.clone(),
            available: eligible.len(),
            needed: n,
        });
    }
    let mut indices: Vec<usize> = (0..eligible.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Hand-rolled Fisher-Yates keeps the order stable across rand versions.
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    Ok(indices[..n].iter().map(|&i| eligible[i].clone()).collect())
}
