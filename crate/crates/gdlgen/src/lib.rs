//! Grammar-guided generation of game descriptions.
//!
//! The crate builds up from a small CFG toolkit (grammar format, lexer,
//! Earley engine with longest-valid-prefix recovery, minimal-grammar
//! extraction) to the two iterative decoding loops that repair model output
//! against a grammar, plus dataset handling, evaluation metrics, and the
//! `gdlgen` command-line surface that ties them together.
//!
//! ```
//! use gdlgen::{parse_prefix, tokenize, Grammar, PrefixStatus};
//!
//! let g = Grammar::parse(r#"game: "(" "game" players ")"
//! players: "(" "players" NUMBER ")""#, false)?;
//!
//! // A truncated description: the parser reports how far it stays valid
//! // and what may come next.
//! let stream = tokenize("( game ( players")?;
//! let analysis = parse_prefix(&g, &stream)?;
//! assert_eq!(analysis.status, PrefixStatus::Prefix);
//! assert_eq!(analysis.valid_len, 4);
//! assert_eq!(analysis.candidates.len(), 1); // a NUMBER must follow
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod backend;
pub mod cli;
pub mod dataset;
pub mod earley;
pub mod grammar;
pub mod lexer;
pub mod metrics;
pub mod minimal;
pub mod pipeline;

pub use earley::{
    derivation_rules, parse_prefix, recognize, DerivationUse, ParseError, PrefixAnalysis,
    PrefixStatus, TerminalExpectation,
};
pub use grammar::{merge, validate_subset, Grammar, GrammarError, RuleAlt, Symbol};
pub use lexer::{tokenize, LexError, TermClass, Token, TokenClass, TokenStream};
pub use minimal::{check_minimality, extract_minimal, MinimalError};
