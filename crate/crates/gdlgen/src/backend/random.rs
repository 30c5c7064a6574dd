//! The random baseline: seeded uniform expansion of a grammar, plus a
//! backend whose terminal selection is a seeded uniform pick.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Backend, BackendError, BackendResponse, GenerationRequest, RequestPayload};
use crate::grammar::{Grammar, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error("grammar generates no sentences from its start symbol")]
    EmptyLanguage,
    #[error("expansion does not terminate under the depth-limit policy")]
    PolicyLoop,
}

/// Expands `g` from its start symbol into a sentence, choosing uniformly
/// among alternatives while below `depth_limit` and falling back to the
/// alternative with the fewest nonterminals (ties by index) beyond it.
/// Open lexical classes concretize to their fixed placeholders. The result
/// always recognizes against `g`.
pub fn random_expand(g: &Grammar, seed: u64, depth_limit: usize) -> Result<String, ExpandError> {
    let expander = Expander::new(g, depth_limit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Vec::new();
    let start = expander.start;
    expander.expand(start, 0, &mut rng, &mut words)?;
    Ok(words.join(" "))
}

struct Expander<'g> {
    g: &'g Grammar,
    nt_names: Vec<&'g str>,
    /// Per nonterminal: indices of alternatives whose right-hand sides only
    /// reach productive symbols. Unproductive branches are never entered.
    useful_alts: Vec<Vec<usize>>,
    start: usize,
    /// Beyond the depth limit every path is forced; if it has not bottomed
    /// out after one forced choice per nonterminal it never will.
    hard_cap: usize,
    depth_limit: usize,
}

impl<'g> Expander<'g> {
    fn new(g: &'g Grammar, depth_limit: usize) -> Result<Expander<'g>, ExpandError> {
        let mut nt_names: Vec<&str> = Vec::new();
        let id_of = |n: &'g str, names: &mut Vec<&'g str>| -> usize {
            match names.iter().position(|x| *x == n) {
                Some(i) => i,
                None => {
                    names.push(n);
                    names.len() - 1
                }
            }
        };
        let mut alt_lhs = Vec::new();
        let mut alt_nts: Vec<Vec<usize>> = Vec::new();
        for alt in g.alts() {
            alt_lhs.push(id_of(&alt.lhs, &mut nt_names));
            alt_nts.push(
                alt.rhs
                    .iter()
                    .filter_map(|s| s.nonterminal_name())
                    .map(|n| id_of(n, &mut nt_names))
                    .collect(),
            );
        }
        let nt_count = nt_names.len();
        let mut productive = vec![false; nt_count];
        loop {
            let mut changed = false;
            for (idx, nts) in alt_nts.iter().enumerate() {
                let lhs = alt_lhs[idx];
                if !productive[lhs] && nts.iter().all(|b| productive[*b]) {
                    productive[lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut useful_alts = vec![Vec::new(); nt_count];
        for (idx, nts) in alt_nts.iter().enumerate() {
            if nts.iter().all(|b| productive[*b]) {
                useful_alts[alt_lhs[idx]].push(idx);
            }
        }
        let start = g
            .start()
            .and_then(|s| nt_names.iter().position(|n| *n == s))
            .ok_or(ExpandError::EmptyLanguage)?;
        if !productive[start] {
            return Err(ExpandError::EmptyLanguage);
        }
        Ok(Expander {
            g,
            nt_names,
            useful_alts,
            start,
            hard_cap: nt_count + 1,
            depth_limit,
        })
    }

    fn expand(
        &self,
        nt: usize,
        depth: usize,
        rng: &mut ChaCha8Rng,
        words: &mut Vec<String>,
    ) -> Result<(), ExpandError> {
        if depth > self.depth_limit + self.hard_cap {
            return Err(ExpandError::PolicyLoop);
        }
        let options = &self.useful_alts[nt];
        debug_assert!(!options.is_empty(), "productive nonterminal has options");
        let alt_idx = if depth < self.depth_limit {
            options[rng.gen_range(0..options.len())]
        } else {
            *options
                .iter()
                .min_by_key(|idx| self.nonterminal_count(**idx))
                .expect("non-empty options")
        };
        for sym in &self.g.alts()[alt_idx].rhs {
            match sym {
                Symbol::Literal(text) => words.push(text.clone()),
                Symbol::Class(c) => words.push(c.placeholder().to_string()),
                Symbol::Nonterminal(n) => {
                    let id = self
                        .nt_names
                        .iter()
                        .position(|x| x == n)
                        .expect("interned nonterminal");
                    self.expand(id, depth + 1, rng, words)?;
                }
            }
        }
        Ok(())
    }

    fn nonterminal_count(&self, alt_idx: usize) -> usize {
        self.g.alts()[alt_idx]
            .rhs
            .iter()
            .filter(|s| s.is_nonterminal())
            .count()
    }
}

/// Backend for the random baseline. Terminal selection picks uniformly from
/// the candidate list; every other request kind yields an empty response,
/// which the decoding loops treat as an unusable answer.
#[derive(Debug)]
pub struct RandomBackend {
    rng: ChaCha8Rng,
}

impl RandomBackend {
    pub fn new(seed: u64) -> RandomBackend {
        RandomBackend {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Backend for RandomBackend {
    fn generate(&mut self, req: &GenerationRequest) -> Result<BackendResponse, BackendError> {
        let text = match &req.payload {
            RequestPayload::SelectTerminal { candidates, .. } if !candidates.is_empty() => {
                let pick = self.rng.gen_range(0..candidates.len());
                candidates[pick].concretize()
            }
            _ => String::new(),
        };
        Ok(BackendResponse {
            text,
            latency_ms: 0,
        })
    }

    fn label(&self) -> &'static str {
        "random"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earley::{recognize, TerminalExpectation};
    use crate::lexer::tokenize;

    #[test]
    fn no_choice_grammar_is_seed_independent() {
        let g = Grammar::parse("s: \"a\"", false).unwrap();
        for seed in 0..5 {
            assert_eq!(random_expand(&g, seed, 8).unwrap(), "a");
        }
    }

    #[test]
    fn depth_limit_bounds_the_reachable_set() {
        let g = Grammar::parse("s: \"a\" s | \"b\"", false).unwrap();
        let allowed = ["b", "a b", "a a b", "a a a b"];
        for seed in 0..50 {
            let out = random_expand(&g, seed, 3).unwrap();
            assert!(allowed.contains(&out.as_str()), "unexpected output {out:?}");
            assert!(recognize(&g, &tokenize(&out).unwrap()).unwrap());
        }
    }

    #[test]
    fn fixed_seed_reproduces() {
        let g = Grammar::parse("s: \"a\" s | \"b\" s | ", false).unwrap();
        let a = random_expand(&g, 42, 16).unwrap();
        let b = random_expand(&g, 42, 16).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classes_concretize_to_placeholders() {
        let g = Grammar::parse("s: STRING NUMBER IDENTIFIER \"lit:\"", false).unwrap();
        assert_eq!(random_expand(&g, 0, 8).unwrap(), "\"s\" 1 id lit:");
    }

    #[test]
    fn empty_language_is_an_error() {
        let g = Grammar::parse("s: s \"a\"", false).unwrap();
        assert_eq!(
            random_expand(&g, 0, 8).unwrap_err(),
            ExpandError::EmptyLanguage
        );
    }

    #[test]
    fn expansion_avoids_unproductive_branches() {
        let g = Grammar::parse("s: dead | \"ok\"\ndead: dead \"x\"", false).unwrap();
        for seed in 0..20 {
            assert_eq!(random_expand(&g, seed, 4).unwrap(), "ok");
        }
    }

    #[test]
    fn random_backend_select_terminal_is_seeded() {
        let g = Grammar::parse("s: \"a\"", false).unwrap();
        let candidates = vec![
            TerminalExpectation::Literal(")".to_string()),
            TerminalExpectation::Literal("x".to_string()),
            TerminalExpectation::Class(crate::lexer::TermClass::Number),
        ];
        let make_req = || GenerationRequest {
            demos: vec![],
            query: String::new(),
            payload: RequestPayload::SelectTerminal {
                grammar: g.clone(),
                prefix: String::new(),
                candidates: candidates.clone(),
            },
            params: crate::backend::GenParams::default(),
        };
        let run = || {
            let mut backend = RandomBackend::new(7);
            (0..5)
                .map(|_| backend.generate(&make_req()).unwrap().text)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn random_backend_other_kinds_answer_empty() {
        let mut backend = RandomBackend::new(0);
        let req = GenerationRequest {
            demos: vec![],
            query: "q".to_string(),
            payload: RequestPayload::GenerateGrammar,
            params: crate::backend::GenParams::default(),
        };
        assert_eq!(backend.generate(&req).unwrap().text, "");
    }
}
