//! Prompt assembly. The template text is a versioned artifact under
//! `templates/<version>/`, compiled into the binary; logic only fills
//! placeholders, so identical requests always produce byte-identical
//! prompts.

use super::{GenerationRequest, RequestPayload};

pub const TEMPLATE_VERSION: &str = "v1";

const GENERATE_GRAMMAR: &str = include_str!("../../templates/v1/generate_grammar.tmpl");
const COMPLETE_RULES: &str = include_str!("../../templates/v1/complete_rules.tmpl");
const GENERATE_DESCRIPTION: &str = include_str!("../../templates/v1/generate_description.tmpl");
const GENERATE_DESCRIPTION_PLAIN: &str =
    include_str!("../../templates/v1/generate_description_plain.tmpl");
const SELECT_TERMINAL: &str = include_str!("../../templates/v1/select_terminal.tmpl");
const COMPLETE_DESCRIPTION: &str = include_str!("../../templates/v1/complete_description.tmpl");
const DEMO_WITH_GRAMMAR: &str = include_str!("../../templates/v1/demo_with_grammar.tmpl");
const DEMO_PLAIN: &str = include_str!("../../templates/v1/demo_plain.tmpl");

/// Renders the prompt for a request. Deterministic: same request, same
/// bytes.
pub fn build_prompt(req: &GenerationRequest) -> String {
    let demos = render_demos(req);
    match &req.payload {
        RequestPayload::GenerateGrammar => fill(
            GENERATE_GRAMMAR,
            &[("demonstrations", &demos), ("query", &req.query)],
        ),
        RequestPayload::CompleteRules { valid, candidates } => fill(
            COMPLETE_RULES,
            &[
                ("demonstrations", &demos),
                ("query", &req.query),
                ("valid_rules", &valid.render()),
                ("candidate_rules", &candidates.render()),
            ],
        ),
        RequestPayload::GenerateDescription { grammar } => match grammar {
            Some(g) => fill(
                GENERATE_DESCRIPTION,
                &[
                    ("demonstrations", &demos),
                    ("query", &req.query),
                    ("grammar", &g.render()),
                ],
            ),
            None => fill(
                GENERATE_DESCRIPTION_PLAIN,
                &[("demonstrations", &demos), ("query", &req.query)],
            ),
        },
        RequestPayload::SelectTerminal {
            grammar,
            prefix,
            candidates,
        } => {
            let numbered: Vec<String> = candidates
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{}. {}", i + 1, c))
                .collect();
            fill(
                SELECT_TERMINAL,
                &[
                    ("demonstrations", &demos),
                    ("query", &req.query),
                    ("grammar", &grammar.render()),
                    ("prefix", prefix),
                    ("candidates", &numbered.join("\n")),
                ],
            )
        }
        RequestPayload::CompleteDescription { grammar, prefix } => fill(
            COMPLETE_DESCRIPTION,
            &[
                ("demonstrations", &demos),
                ("query", &req.query),
                ("grammar", &grammar.render()),
                ("prefix", prefix),
            ],
        ),
    }
}

fn render_demos(req: &GenerationRequest) -> String {
    let mut out = String::new();
    for demo in &req.demos {
        let block = match &demo.grammar {
            Some(g) => fill(
                DEMO_WITH_GRAMMAR,
                &[
                    ("query", &demo.query),
                    ("grammar", &g.render()),
                    ("description", &demo.description),
                ],
            ),
            None => fill(
                DEMO_PLAIN,
                &[("query", &demo.query), ("description", &demo.description)],
            ),
        };
        out.push_str(&block);
    }
    out
}

/// Single-pass placeholder substitution; `{name}` sequences inside the
/// substituted values are left untouched.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        if let Some(close) = rest[open..].find('}') {
            let name = &rest[open + 1..open + close];
            for (key, value) in values {
                if name == *key {
                    out.push_str(&rest[..open]);
                    out.push_str(value);
                    rest = &rest[open + close + 1..];
                    continue 'outer;
                }
            }
        }
        // Not a known placeholder: emit the brace verbatim and move on.
        out.push_str(&rest[..open + 1]);
        rest = &rest[open + 1..];
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Demonstration, GenParams, RequestPayload};
    use crate::earley::TerminalExpectation;
    use crate::grammar::Grammar;
    use crate::lexer::TermClass;

    fn demo(i: usize, with_grammar: bool) -> Demonstration {
        Demonstration {
            query: format!("query {}", i),
            grammar: with_grammar.then(|| Grammar::parse("s: \"a\"", false).unwrap()),
            description: format!("( demo {} )", i),
        }
    }

    fn request(payload: RequestPayload, demos: Vec<Demonstration>) -> GenerationRequest {
        GenerationRequest {
            demos,
            query: "the test query".to_string(),
            payload,
            params: GenParams::default(),
        }
    }

    #[test]
    fn three_demo_blocks_in_input_order() {
        let req = request(
            RequestPayload::GenerateGrammar,
            vec![demo(0, true), demo(1, true), demo(2, true)],
        );
        let prompt = build_prompt(&req);
        assert_eq!(prompt.matches("Query:").count(), 4); // 3 demos + test query
        let p0 = prompt.find("query 0").unwrap();
        let p1 = prompt.find("query 1").unwrap();
        let p2 = prompt.find("query 2").unwrap();
        assert!(p0 < p1 && p1 < p2);
    }

    #[test]
    fn empty_demos_omit_demonstration_section() {
        let req = request(RequestPayload::GenerateGrammar, vec![]);
        let prompt = build_prompt(&req);
        assert_eq!(prompt.matches("Query:").count(), 1);
        assert!(prompt.contains("the test query"));
    }

    #[test]
    fn select_terminal_numbers_candidates_in_order() {
        let g = Grammar::parse("s: \"a\"", false).unwrap();
        let req = request(
            RequestPayload::SelectTerminal {
                grammar: g,
                prefix: "( game".to_string(),
                candidates: vec![
                    TerminalExpectation::Literal(")".to_string()),
                    TerminalExpectation::Literal("x".to_string()),
                    TerminalExpectation::Class(TermClass::Str),
                ],
            },
            vec![],
        );
        let prompt = build_prompt(&req);
        assert!(prompt.contains("1. )"));
        assert!(prompt.contains("2. x"));
        assert!(prompt.contains("3. <STRING>"));
        let c1 = prompt.find("1. )").unwrap();
        let c3 = prompt.find("3. <STRING>").unwrap();
        assert!(c1 < c3);
    }

    #[test]
    fn plain_description_prompt_has_no_grammar_section() {
        let req = request(
            RequestPayload::GenerateDescription { grammar: None },
            vec![demo(0, false)],
        );
        let prompt = build_prompt(&req);
        assert!(!prompt.contains("Grammar:"));
    }

    #[test]
    fn identical_requests_build_identical_prompts() {
        let g = Grammar::parse("s: \"a\"", false).unwrap();
        let make = || {
            request(
                RequestPayload::CompleteDescription {
                    grammar: g.clone(),
                    prefix: "( a".to_string(),
                },
                vec![demo(0, true)],
            )
        };
        assert_eq!(build_prompt(&make()), build_prompt(&make()));
    }

    #[test]
    fn placeholders_in_user_text_are_not_reexpanded() {
        let mut req = request(RequestPayload::GenerateGrammar, vec![]);
        req.query = "contains {demonstrations} literally".to_string();
        let prompt = build_prompt(&req);
        assert!(prompt.contains("contains {demonstrations} literally"));
    }
}
