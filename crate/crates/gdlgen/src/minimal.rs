//! Minimal grammar extraction: the subset of a grammar containing exactly
//! the rules needed to derive a given description, with a certificate-style
//! minimality check.

use thiserror::Error;

use crate::earley::{self, ParseError};
use crate::grammar::{validate_subset, Grammar, RuleAlt};
use crate::lexer::TokenStream;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MinimalError {
    #[error("description is not a sentence of the grammar")]
    NotASentence,
    #[error("grammar is not a subset of the reference: {} foreign alternative(s)", .rejected.len())]
    NotASubset { rejected: Vec<RuleAlt> },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Extracts the minimal grammar for `ts`: the description stays derivable,
/// every alternative comes from `g`, and removing any single alternative
/// breaks derivability.
///
/// The canonical derivation seeds the subset; a reduction pass then drops
/// any alternative whose removal leaves the description parseable, visiting
/// alternatives in reverse grammar order and repeating until a full pass
/// removes nothing. Derivation-based extraction alone is not minimal under
/// ambiguity, which is why the reduction pass exists.
pub fn extract_minimal(g: &Grammar, ts: &TokenStream) -> Result<Grammar, MinimalError> {
    let derivation = match earley::derivation_rules(g, ts) {
        Ok(d) => d,
        Err(ParseError::NotASentence) => return Err(MinimalError::NotASentence),
        Err(e) => return Err(MinimalError::Parse(e)),
    };
    let seed = derivation.to_grammar(g, g.start().map(str::to_string));
    Ok(reduce(seed, ts))
}

fn reduce(mut current: Grammar, ts: &TokenStream) -> Grammar {
    loop {
        let mut removed_any = false;
        let mut idx = current.alts().len();
        while idx > 0 {
            idx -= 1;
            let mut alts: Vec<RuleAlt> = current.alts().to_vec();
            alts.remove(idx);
            let candidate = Grammar::from_alts(current.start().map(str::to_string), alts, true);
            if earley::recognize_lenient(&candidate, ts) {
                current = candidate;
                removed_any = true;
                // idx now points past the removed slot; continue downward.
            }
        }
        if !removed_any {
            return Grammar::from_alts(
                current.start().map(str::to_string),
                current.alts().to_vec(),
                false,
            );
        }
    }
}

/// Returns every alternative of `gy` whose removal leaves `ts` derivable.
/// An empty result certifies minimality. Precondition violations are
/// reported distinctly: `ts` must be a sentence of `gy`, and `gy` must be a
/// subset of `g`.
pub fn check_minimality(
    gy: &Grammar,
    g: &Grammar,
    ts: &TokenStream,
) -> Result<Vec<RuleAlt>, MinimalError> {
    let validation = validate_subset(gy, g);
    if !validation.rejected.is_empty() {
        return Err(MinimalError::NotASubset {
            rejected: validation.rejected.into_iter().map(|r| r.alt).collect(),
        });
    }
    if !earley::recognize_lenient(gy, ts) {
        return Err(MinimalError::NotASentence);
    }
    let mut removable = Vec::new();
    for idx in 0..gy.alts().len() {
        let mut alts: Vec<RuleAlt> = gy.alts().to_vec();
        let alt = alts.remove(idx);
        let candidate = Grammar::from_alts(gy.start().map(str::to_string), alts, true);
        if earley::recognize_lenient(&candidate, ts) {
            removable.push(alt);
        }
    }
    Ok(removable)
}
