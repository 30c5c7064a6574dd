//! The two iterative decoding loops and the end-to-end generation methods.
//!
//! Rule decoding grows a predicted grammar until it has no undefined
//! nonterminals, keeping only rules present in the reference grammar.
//! Description decoding repairs a predicted description by re-prompting
//! from the longest grammatically valid prefix. Both loops survive
//! arbitrary backend garbage: fallbacks keep them progressing and every
//! termination is recorded in the trace.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    build_prompt, extract_completion, extract_grammar, extract_sexpr, extract_token, random_expand,
    Backend, BackendError, Demonstration, ExpandError, GenParams, GenerationRequest,
    RequestPayload, TEMPLATE_VERSION,
};
use crate::earley::{parse_prefix, PrefixStatus, TerminalExpectation};
use crate::grammar::{merge, validate_subset, Grammar};
use crate::lexer::tokenize;

/// Loop limits and prompt-shaping knobs, read from the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodingConfig {
    #[serde(default = "default_rule_iter_limit")]
    pub rule_iter_limit: usize,
    #[serde(default = "default_desc_iter_limit")]
    pub desc_iter_limit: usize,
    #[serde(default = "default_demo_count")]
    pub demo_count: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_desc_tokens")]
    pub max_desc_tokens: usize,
    /// When set, demonstrations are dropped oldest-first until the built
    /// prompt fits this many characters; each drop is flagged in the trace.
    #[serde(default)]
    pub prompt_char_budget: Option<usize>,
}

fn default_rule_iter_limit() -> usize {
    20
}

fn default_desc_iter_limit() -> usize {
    10
}

fn default_demo_count() -> usize {
    3
}

fn default_max_desc_tokens() -> usize {
    1024
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            rule_iter_limit: default_rule_iter_limit(),
            desc_iter_limit: default_desc_iter_limit(),
            demo_count: default_demo_count(),
            temperature: 0.0,
            max_desc_tokens: default_max_desc_tokens(),
            prompt_char_budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    Limit,
    BackendError,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleIteration {
    pub iteration: usize,
    /// Alternatives in the working grammar before validation.
    pub candidate_alts: usize,
    pub valid_alts: usize,
    pub rejected_alts: usize,
    pub undefined: Vec<String>,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescIteration {
    pub iteration: usize,
    pub valid_len: usize,
    pub candidates: usize,
    /// The terminal appended this round, if the loop got that far.
    pub chosen: Option<String>,
    /// Byte length of the working description after the round.
    pub desc_bytes: usize,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Per-pipeline observability record: every backend call appears exactly
/// once in `calls`, and each loop logs one record per iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodingTrace {
    pub template_version: String,
    pub calls: Vec<CallRecord>,
    pub rule_iterations: Vec<RuleIteration>,
    pub desc_iterations: Vec<DescIteration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_termination: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub desc_termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DecodingTrace {
    fn new() -> DecodingTrace {
        DecodingTrace {
            template_version: TEMPLATE_VERSION.to_string(),
            calls: Vec::new(),
            rule_iterations: Vec::new(),
            desc_iterations: Vec::new(),
            rule_termination: None,
            desc_termination: None,
            notes: Vec::new(),
        }
    }

    /// Concatenates stage traces into one pipeline trace.
    pub fn merged(mut self, other: DecodingTrace) -> DecodingTrace {
        self.calls.extend(other.calls);
        self.rule_iterations.extend(other.rule_iterations);
        self.desc_iterations.extend(other.desc_iterations);
        self.rule_termination = self.rule_termination.or(other.rule_termination);
        self.desc_termination = self.desc_termination.or(other.desc_termination);
        self.notes.extend(other.notes);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gdg,
    Ggdg,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gdg => "gdg",
            Method::Ggdg => "ggdg",
            Method::Random => "random",
        }
    }
}

/// Parameters for the random-expansion stage of the random baseline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RandomParams {
    pub seed: u64,
    #[serde(default = "default_depth_limit")]
    pub depth_limit: usize,
}

fn default_depth_limit() -> usize {
    64
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("random expansion failed: {0}")]
    Expand(#[from] ExpandError),
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub grammar: Option<Grammar>,
    pub description: String,
    pub trace: DecodingTrace,
}

struct Caller<'a> {
    backend: &'a mut dyn Backend,
    params: GenParams,
    budget: Option<usize>,
}

impl Caller<'_> {
    /// Builds the request, enforcing the prompt budget by shedding the
    /// oldest demonstrations, then calls the backend and logs the call.
    fn call(
        &mut self,
        demos: &[Demonstration],
        query: &str,
        payload: RequestPayload,
        trace: &mut DecodingTrace,
    ) -> Result<String, BackendError> {
        let mut req = GenerationRequest {
            demos: demos.to_vec(),
            query: query.to_string(),
            payload,
            params: self.params,
        };
        if let Some(budget) = self.budget {
            while !req.demos.is_empty() && build_prompt(&req).chars().count() > budget {
                req.demos.remove(0);
                trace.notes.push(format!(
                    "dropped oldest demo to fit prompt budget ({})",
                    budget
                ));
            }
        }
        let kind = req.kind().name().to_string();
        match self.backend.generate(&req) {
            Ok(response) => {
                trace.calls.push(CallRecord {
                    kind,
                    latency_ms: response.latency_ms,
                });
                Ok(response.text)
            }
            Err(e) => {
                trace.calls.push(CallRecord {
                    kind,
                    latency_ms: 0,
                });
                trace.notes.push(format!("backend error: {}", e));
                Err(e)
            }
        }
    }
}

/// Rule decoding: starts from a generated grammar and iterates until its
/// valid subset has no undefined nonterminals, asking the backend to define
/// the missing symbols from the reference definitions each round. Hitting
/// the iteration limit closes the grammar from the reference wholesale, so
/// the output is always closed. Backend failures terminate the loop with
/// the best grammar so far.
pub fn run_rule_decoding(
    backend: &mut dyn Backend,
    g_full: &Grammar,
    demos: &[Demonstration],
    query: &str,
    cfg: &DecodingConfig,
) -> (Grammar, DecodingTrace) {
    let mut trace = DecodingTrace::new();
    let mut caller = Caller {
        backend,
        params: GenParams {
            temperature: cfg.temperature,
            max_tokens: cfg.max_desc_tokens,
        },
        budget: cfg.prompt_char_budget,
    };

    let mut working = match caller.call(demos, query, RequestPayload::GenerateGrammar, &mut trace) {
        Ok(text) => {
            let (g, notes) = Grammar::parse_lenient(&extract_grammar(&text));
            trace.notes.extend(notes);
            g
        }
        Err(_) => {
            trace.rule_termination = Some(Termination::BackendError);
            return (Grammar::empty(), trace);
        }
    };

    for iteration in 0..cfg.rule_iter_limit {
        let candidate_alts = working.alts().len();
        let validation = validate_subset(&working, g_full);
        let valid = validation.valid;
        let undefined = valid.undefined_nonterminals();
        let mut record = RuleIteration {
            iteration,
            candidate_alts,
            valid_alts: valid.alts().len(),
            rejected_alts: validation.rejected.len(),
            undefined: undefined.iter().cloned().collect(),
            latency_ms: 0,
            notes: Vec::new(),
        };

        if undefined.is_empty() {
            trace.rule_iterations.push(record);
            trace.rule_termination = Some(Termination::Converged);
            return (valid, trace);
        }

        // Names the reference cannot define would never be repaired; prune
        // the alternatives that use them. With a closed reference this is a
        // no-op, since valid alternatives only mention defined names.
        let defined: BTreeSet<String> =
            g_full.defined_lhs().iter().map(|s| s.to_string()).collect();
        let definable: BTreeSet<String> = undefined.intersection(&defined).cloned().collect();
        let hallucinated: Vec<&String> = undefined.difference(&defined).collect();
        let valid = if hallucinated.is_empty() {
            valid
        } else {
            record.notes.push(format!(
                "pruned alternatives using unrepairable names: {}",
                hallucinated
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
            let keep: Vec<_> = valid
                .alts()
                .iter()
                .filter(|alt| {
                    alt.rhs.iter().all(|sym| match sym.nonterminal_name() {
                        Some(n) => defined.contains(n) || valid.defined_lhs().contains(n),
                        None => true,
                    })
                })
                .cloned()
                .collect();
            Grammar::from_alts(valid.start().map(str::to_string), keep, true)
        };

        let reference_rules = g_full
            .rules_for(&definable)
            .expect("definable names are defined in the reference");

        let response = caller.call(
            demos,
            query,
            RequestPayload::CompleteRules {
                valid: valid.clone(),
                candidates: reference_rules.clone(),
            },
            &mut trace,
        );
        let generated = match response {
            Ok(text) => {
                record.latency_ms = trace.calls.last().map(|c| c.latency_ms).unwrap_or(0);
                let (g, notes) = Grammar::parse_lenient(&extract_grammar(&text));
                record.notes.extend(notes);
                g
            }
            Err(_) => {
                trace.rule_iterations.push(record);
                trace.rule_termination = Some(Termination::BackendError);
                return (close_from_reference(&valid, g_full), trace);
            }
        };
        let mut addition = validate_subset(&generated, &reference_rules).valid;
        if addition.alts().is_empty() {
            // Guarantee progress: take every reference definition for the
            // missing names.
            record
                .notes
                .push("empty completion; falling back to all reference definitions".to_string());
            addition = reference_rules;
        }
        working = merge(&valid, &addition);
        trace.rule_iterations.push(record);
    }

    let validation = validate_subset(&working, g_full);
    let closed = close_from_reference(&validation.valid, g_full);
    trace.rule_termination = Some(Termination::Limit);
    (closed, trace)
}

/// Deterministically closes a partial grammar by pulling definitions for
/// every undefined name from the reference, repeating until closed.
fn close_from_reference(g: &Grammar, reference: &Grammar) -> Grammar {
    let mut current = g.clone();
    loop {
        let undefined = current.undefined_nonterminals();
        if undefined.is_empty() {
            return current;
        }
        let defined: BTreeSet<String> = reference
            .defined_lhs()
            .iter()
            .map(|s| s.to_string())
            .collect();
        let pull: BTreeSet<String> = undefined.intersection(&defined).cloned().collect();
        if pull.is_empty() {
            // Nothing left to pull; drop the alternatives using orphans.
            let keep: Vec<_> = current
                .alts()
                .iter()
                .filter(|alt| {
                    alt.rhs.iter().all(|sym| match sym.nonterminal_name() {
                        Some(n) => !undefined.contains(n),
                        None => true,
                    })
                })
                .cloned()
                .collect();
            return Grammar::from_alts(current.start().map(str::to_string), keep, false);
        }
        let addition = reference
            .rules_for(&pull)
            .expect("pulled names are defined in the reference");
        current = merge(&current, &addition);
    }
}

/// Description decoding: starts from a generated description; each round
/// finds the longest valid prefix, asks the backend to pick the next
/// terminal from the candidate set (falling back to the first candidate in
/// deterministic order when the answer is not in the set), and asks for the
/// remainder. Converges when the description parses completely.
pub fn run_description_decoding(
    backend: &mut dyn Backend,
    gy: &Grammar,
    demos: &[Demonstration],
    query: &str,
    cfg: &DecodingConfig,
) -> (String, DecodingTrace) {
    let mut trace = DecodingTrace::new();
    let mut caller = Caller {
        backend,
        params: GenParams {
            temperature: cfg.temperature,
            max_tokens: cfg.max_desc_tokens,
        },
        budget: cfg.prompt_char_budget,
    };

    let mut description = match caller.call(
        demos,
        query,
        RequestPayload::GenerateDescription {
            grammar: Some(gy.clone()),
        },
        &mut trace,
    ) {
        Ok(text) => extract_sexpr(&text),
        Err(_) => {
            trace.desc_termination = Some(Termination::BackendError);
            return (String::new(), trace);
        }
    };

    for iteration in 0..cfg.desc_iter_limit {
        let mut record = DescIteration {
            iteration,
            valid_len: 0,
            candidates: 0,
            chosen: None,
            desc_bytes: description.len(),
            latency_ms: 0,
            notes: Vec::new(),
        };

        let analysis = match tokenize(&description) {
            Ok(stream) => {
                let pa = parse_prefix(gy, &stream)
                    .expect("description decoding requires a closed grammar");
                if pa.status == PrefixStatus::Complete {
                    record.valid_len = pa.valid_len;
                    trace.desc_iterations.push(record);
                    trace.desc_termination = Some(Termination::Converged);
                    return (description, trace);
                }
                Some((stream, pa))
            }
            Err(e) => {
                record
                    .notes
                    .push(format!("description does not lex: {}", e));
                None
            }
        };

        // A lexing failure counts as an empty valid prefix; candidates are
        // whatever may start a sentence.
        let (stream, pa) = match analysis {
            Some(pair) => pair,
            None => {
                let empty = crate::lexer::TokenStream::empty();
                let pa = parse_prefix(gy, &empty)
                    .expect("description decoding requires a closed grammar");
                (empty, pa)
            }
        };
        record.valid_len = pa.valid_len;
        record.candidates = pa.candidates.len();

        let prefix_text = stream.detokenize(pa.valid_len.min(stream.len()));

        if pa.candidates.is_empty() {
            // Dead end: the valid prefix admits no extension. Truncating to
            // it either completes next round or the limit ends the loop.
            record
                .notes
                .push("no candidates after valid prefix; truncating".to_string());
            description = prefix_text;
            record.desc_bytes = description.len();
            trace.desc_iterations.push(record);
            continue;
        }

        let omega = match caller.call(
            demos,
            query,
            RequestPayload::SelectTerminal {
                grammar: gy.clone(),
                prefix: prefix_text.clone(),
                candidates: pa.candidates.clone(),
            },
            &mut trace,
        ) {
            Ok(text) => {
                record.latency_ms = trace.calls.last().map(|c| c.latency_ms).unwrap_or(0);
                resolve_omega(&extract_token(&text), &pa.candidates, &mut record)
            }
            Err(_) => {
                trace.desc_iterations.push(record);
                trace.desc_termination = Some(Termination::BackendError);
                return (description, trace);
            }
        };
        record.chosen = Some(omega.clone());

        let prefix_with_omega = if prefix_text.is_empty() {
            omega
        } else {
            format!("{} {}", prefix_text, omega)
        };

        let completion = match caller.call(
            demos,
            query,
            RequestPayload::CompleteDescription {
                grammar: gy.clone(),
                prefix: prefix_with_omega.clone(),
            },
            &mut trace,
        ) {
            Ok(text) => extract_completion(&text),
            Err(_) => {
                description = prefix_with_omega;
                record.desc_bytes = description.len();
                trace.desc_iterations.push(record);
                trace.desc_termination = Some(Termination::BackendError);
                return (description, trace);
            }
        };
        description = if completion.is_empty() {
            prefix_with_omega
        } else {
            format!("{} {}", prefix_with_omega, completion)
        };
        record.desc_bytes = description.len();
        trace.desc_iterations.push(record);
    }

    trace.desc_termination = Some(Termination::Limit);
    (description, trace)
}

/// Applies the selected terminal if it belongs to the candidate set; falls
/// back to the first candidate in deterministic order otherwise, with
/// classes concretized to placeholders.
fn resolve_omega(
    answer: &str,
    candidates: &[TerminalExpectation],
    record: &mut DescIteration,
) -> String {
    if !answer.is_empty() {
        if let Ok(stream) = tokenize(answer) {
            if stream.len() == 1 {
                let token = &stream.tokens()[0];
                if candidates.iter().any(|c| c.admits(token)) {
                    return token.text.clone();
                }
            }
        }
    }
    record.notes.push(format!(
        "selection {:?} not in candidate set; using first candidate",
        answer
    ));
    candidates[0].concretize()
}

/// One end-to-end generation for a single query.
///
/// GDG is a single ungrammared description call; GGDG is rule decoding then
/// description decoding; Random is rule decoding then seeded expansion of
/// the predicted grammar.
pub fn run_pipeline(
    method: Method,
    backend: &mut dyn Backend,
    g_full: &Grammar,
    demos: &[Demonstration],
    query: &str,
    cfg: &DecodingConfig,
    random: RandomParams,
) -> Result<PipelineResult, PipelineError> {
    match method {
        Method::Gdg => {
            let mut trace = DecodingTrace::new();
            let mut caller = Caller {
                backend,
                params: GenParams {
                    temperature: cfg.temperature,
                    max_tokens: cfg.max_desc_tokens,
                },
                budget: cfg.prompt_char_budget,
            };
            let plain_demos: Vec<Demonstration> = demos
                .iter()
                .map(|d| Demonstration {
                    query: d.query.clone(),
                    grammar: None,
                    description: d.description.clone(),
                })
                .collect();
            let description = match caller.call(
                &plain_demos,
                query,
                RequestPayload::GenerateDescription { grammar: None },
                &mut trace,
            ) {
                Ok(text) => {
                    trace.desc_termination = Some(Termination::Converged);
                    extract_sexpr(&text)
                }
                Err(_) => {
                    trace.desc_termination = Some(Termination::BackendError);
                    String::new()
                }
            };
            Ok(PipelineResult {
                grammar: None,
                description,
                trace,
            })
        }
        Method::Ggdg => {
            let (grammar, rule_trace) = run_rule_decoding(backend, g_full, demos, query, cfg);
            let grammar = reroot_to_reference(grammar, g_full);
            let (description, desc_trace) =
                run_description_decoding(backend, &grammar, demos, query, cfg);
            Ok(PipelineResult {
                grammar: Some(grammar),
                description,
                trace: rule_trace.merged(desc_trace),
            })
        }
        Method::Random => {
            let (grammar, mut trace) = run_rule_decoding(backend, g_full, demos, query, cfg);
            let grammar = reroot_to_reference(grammar, g_full);
            let description = random_expand(&grammar, random.seed, random.depth_limit)?;
            trace
                .notes
                .push(format!("random expansion with seed {}", random.seed));
            Ok(PipelineResult {
                grammar: Some(grammar),
                description,
                trace,
            })
        }
    }
}

/// Predicted grammars anchor at the reference start symbol whenever they
/// define it; the prediction's own first rule is an accident of generation
/// order.
fn reroot_to_reference(g: Grammar, reference: &Grammar) -> Grammar {
    match reference.start() {
        Some(start) if g.defined_lhs().contains(start) => g.rerooted(start),
        _ => g,
    }
}
