//! Evaluation metrics: compilability (parse proxy or external command),
//! functionality (external command), ROUGE-L F1 over lexer tokens, and
//! normalized concept distance, aggregated per seed with mean and standard
//! error across seeds.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::earley;
use crate::grammar::Grammar;
use crate::lexer::tokenize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("concept vectors have mismatching labels")]
    LabelMismatch,
    #[error("concept distance is undefined for a zero vector")]
    ZeroVector,
    #[error("concept vector is malformed: {0}")]
    BadVector(String),
    #[error("no seeds to aggregate")]
    NoSeeds,
    #[error("instance {id}: functional=true requires compilable=true")]
    FunctionalWithoutCompilable { id: String },
}

/// Numeric game-feature vector with labeled dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVector {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl ConceptVector {
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<ConceptVector, MetricsError> {
        let v = ConceptVector { labels, values };
        v.validate()?;
        Ok(v)
    }

    pub fn from_json_file(path: &Path) -> Result<ConceptVector, MetricsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MetricsError::BadVector(format!("{}: {}", path.display(), e)))?;
        let v: ConceptVector = serde_json::from_str(&text)
            .map_err(|e| MetricsError::BadVector(format!("{}: {}", path.display(), e)))?;
        v.validate()?;
        Ok(v)
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if self.labels.len() != self.values.len() {
            return Err(MetricsError::BadVector(format!(
                "{} labels vs {} values",
                self.labels.len(),
                self.values.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &self.labels {
            if !seen.insert(label) {
                return Err(MetricsError::BadVector(format!(
                    "duplicate label {:?}",
                    label
                )));
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::BadVector("non-finite value".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompileMode {
    ParseProxy,
    External,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompilabilityResult {
    pub compilable: bool,
    pub mode: CompileMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// External check command: run through the shell with the candidate text on
/// stdin. Exit 0 means pass, 1 means fail, anything else is an error.
#[derive(Debug, Clone)]
pub struct ExternalCmd {
    pub command: String,
    pub timeout: Duration,
}

impl ExternalCmd {
    pub fn new(command: &str) -> ExternalCmd {
        ExternalCmd {
            command: command.to_string(),
            timeout: Duration::from_secs(60),
        }
    }

    /// Returns Ok(exit-is-zero), or an error string on timeout, spawn
    /// failure, or a non-0/1 exit code.
    fn run(&self, input: &str) -> Result<bool, String> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("cannot spawn {:?}: {}", self.command, e))?;
        if let Some(mut stdin) = child.stdin.take() {
            // A closed pipe from a fast-exiting command is not an error.
            let _ = stdin.write_all(input.as_bytes());
        }
        let started = Instant::now();
        loop {
            match child.try_wait() {
                Ok(Some(status)) => {
                    return match status.code() {
                        Some(0) => Ok(true),
                        Some(1) => Ok(false),
                        other => Err(format!("command exited with {:?}", other)),
                    }
                }
                Ok(None) => {
                    if started.elapsed() > self.timeout {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(format!("command timed out after {:?}", self.timeout));
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(format!("wait failed: {}", e)),
            }
        }
    }
}

/// Whether the description is accepted: by the external command when given,
/// otherwise by the full-grammar parse proxy. Command trouble counts as not
/// compilable, with the reason noted.
pub fn compilability(
    g_full: &Grammar,
    description: &str,
    external: Option<&ExternalCmd>,
) -> CompilabilityResult {
    match external {
        Some(cmd) => match cmd.run(description) {
            Ok(ok) => CompilabilityResult {
                compilable: ok,
                mode: CompileMode::External,
                note: None,
            },
            Err(note) => CompilabilityResult {
                compilable: false,
                mode: CompileMode::External,
                note: Some(note),
            },
        },
        None => {
            let compilable = tokenize(description)
                .ok()
                .map(|ts| earley::recognize(g_full, &ts).unwrap_or(false))
                .unwrap_or(false);
            CompilabilityResult {
                compilable,
                mode: CompileMode::ParseProxy,
                note: None,
            }
        }
    }
}

/// Runs the functionality hook. `None` when the command errors (as opposed
/// to cleanly failing).
pub fn functionality(description: &str, cmd: &ExternalCmd) -> (Option<bool>, Option<String>) {
    match cmd.run(description) {
        Ok(ok) => (Some(ok), None),
        Err(note) => (None, Some(note)),
    }
}

fn rouge_tokens(text: &str) -> Vec<String> {
    match tokenize(text) {
        Ok(ts) => ts.tokens().iter().map(|t| t.text.clone()).collect(),
        // The metric is total: fall back to whitespace/paren splitting for
        // text the lexer rejects.
        Err(_) => {
            let mut out = Vec::new();
            let mut word = String::new();
            for c in text.chars() {
                if c.is_whitespace() {
                    if !word.is_empty() {
                        out.push(std::mem::take(&mut word));
                    }
                } else if matches!(c, '(' | ')' | '{' | '}') {
                    if !word.is_empty() {
                        out.push(std::mem::take(&mut word));
                    }
                    out.push(c.to_string());
                } else {
                    word.push(c);
                }
            }
            if !word.is_empty() {
                out.push(word);
            }
            out
        }
    }
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// ROUGE-L F1 in [0, 100] over lexer tokens. Both inputs empty scores 100
/// by convention; exactly one empty scores 0.
pub fn rouge_l_f1(reference: &str, hypothesis: &str) -> f64 {
    let r = rouge_tokens(reference);
    let h = rouge_tokens(hypothesis);
    if r.is_empty() && h.is_empty() {
        return 100.0;
    }
    if r.is_empty() || h.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&r, &h) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / h.len() as f64;
    let recall = lcs / r.len() as f64;
    100.0 * 2.0 * precision * recall / (precision + recall)
}

/// Cosine distance in [0, 1] between two concept vectors with identical
/// label lists.
pub fn concept_distance(a: &ConceptVector, b: &ConceptVector) -> Result<f64, MetricsError> {
    if a.labels != b.labels {
        return Err(MetricsError::LabelMismatch);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na: f64 = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 1.0))
}

/// Per-instance evaluation row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceReport {
    pub id: String,
    pub compilable: bool,
    pub compile_mode: CompileMode,
    /// None when no functionality hook ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functional: Option<bool>,
    pub rouge_l_f1: f64,
    /// Present only when functionality is resolved: 1.0 for non-functional
    /// games, the cosine distance otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ncd: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

/// Cross-seed mean and standard error (sample stddev over sqrt(n); zero
/// for a single seed).
pub fn mean_stderr(values: &[f64]) -> MeanStderr {
    let n = values.len();
    assert!(n > 0, "mean_stderr needs at least one value");
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanStderr { mean, stderr: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanStderr {
        mean,
        stderr: var.sqrt() / (n as f64).sqrt(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSummary {
    pub instances: usize,
    pub compilability_pct: f64,
    /// None when no instance resolved functionality.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functionality_pct: Option<f64>,
    pub rouge_mean: f64,
    /// Mean over instances with a distance; count reported alongside.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ncd_mean: Option<f64>,
    pub ncd_instances: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub seeds: Vec<SeedSummary>,
    pub compilability: MeanStderr,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functionality: Option<MeanStderr>,
    pub rouge_l_f1: MeanStderr,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ncd: Option<MeanStderr>,
}

/// Aggregates per-seed instance rows: per-seed means first, then mean and
/// standard error across seeds. Rows violating functional ⇒ compilable are
/// rejected.
pub fn aggregate(seeds: &[Vec<InstanceReport>]) -> Result<AggregateReport, MetricsError> {
    if seeds.is_empty() {
        return Err(MetricsError::NoSeeds);
    }
    for seed in seeds {
        for row in seed {
            if row.functional == Some(true) && !row.compilable {
                return Err(MetricsError::FunctionalWithoutCompilable { id: row.id.clone() });
            }
        }
    }
    let mut summaries = Vec::new();
    for seed in seeds {
        let n = seed.len().max(1) as f64;
        let compilable = seed.iter().filter(|r| r.compilable).count() as f64;
        let resolved = seed.iter().filter(|r| r.functional.is_some()).count();
        let functional = seed.iter().filter(|r| r.functional == Some(true)).count() as f64;
        let rouge_mean = seed.iter().map(|r| r.rouge_l_f1).sum::<f64>() / n;
        let ncds: Vec<f64> = seed.iter().filter_map(|r| r.ncd).collect();
        summaries.push(SeedSummary {
            instances: seed.len(),
            compilability_pct: 100.0 * compilable / n,
            functionality_pct: (resolved > 0).then(|| 100.0 * functional / n),
            rouge_mean,
            ncd_mean: (!ncds.is_empty()).then(|| ncds.iter().sum::<f64>() / ncds.len() as f64),
            ncd_instances: ncds.len(),
        });
    }
    let compilability = mean_stderr(
        &summaries
            .iter()
            .map(|s| s.compilability_pct)
            .collect::<Vec<_>>(),
    );
    let func_values: Vec<f64> = summaries
        .iter()
        .filter_map(|s| s.functionality_pct)
        .collect();
    let functionality = (func_values.len() == summaries.len()).then(|| mean_stderr(&func_values));
    let rouge_l_f1 = mean_stderr(&summaries.iter().map(|s| s.rouge_mean).collect::<Vec<_>>());
    let ncd_values: Vec<f64> = summaries.iter().filter_map(|s| s.ncd_mean).collect();
    let ncd = (ncd_values.len() == summaries.len()).then(|| mean_stderr(&ncd_values));
    Ok(AggregateReport {
        seeds: summaries,
        compilability,
        functionality,
        rouge_l_f1,
        ncd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, compilable: bool, functional: Option<bool>, rouge: f64) -> InstanceReport {
        InstanceReport {
            id: id.to_string(),
            compilable,
            compile_mode: CompileMode::ParseProxy,
            functional,
            rouge_l_f1: rouge,
            ncd: functional.map(|f| if f { 0.2 } else { 1.0 }),
            notes: Vec::new(),
        }
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        assert_eq!(rouge_l_f1("( a b )", "( a b )"), 100.0);
        assert_eq!(rouge_l_f1("a b c", "x y z"), 0.0);
        assert_eq!(rouge_l_f1("", ""), 100.0);
        assert_eq!(rouge_l_f1("a", ""), 0.0);
        assert_eq!(rouge_l_f1("", "a"), 0.0);
    }

    #[test]
    fn rouge_hand_computed_example() {
        // LCS("a b c", "a c") = 2; P = 1, R = 2/3, F1 = 0.8.
        let v = rouge_l_f1("a b c", "a c");
        assert!((v - 80.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn rouge_survives_unlexable_text() {
        let v = rouge_l_f1("( a \"unterminated", "( a \"unterminated");
        assert_eq!(v, 100.0);
    }

    #[test]
    fn concept_distance_examples() {
        let labels = vec!["x".to_string(), "y".to_string()];
        let a = ConceptVector::new(labels.clone(), vec![1.0, 0.0]).unwrap();
        let b = ConceptVector::new(labels.clone(), vec![1.0, 1.0]).unwrap();
        assert_eq!(concept_distance(&a, &a).unwrap(), 0.0);
        let d = concept_distance(&a, &b).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-9);

        let ortho = ConceptVector::new(labels.clone(), vec![0.0, 1.0]).unwrap();
        assert!((concept_distance(&a, &ortho).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concept_distance_errors() {
        let a = ConceptVector::new(vec!["x".to_string()], vec![1.0]).unwrap();
        let zero = ConceptVector::new(vec!["x".to_string()], vec![0.0]).unwrap();
        assert_eq!(
            concept_distance(&a, &zero).unwrap_err(),
            MetricsError::ZeroVector
        );
        let other = ConceptVector::new(vec!["y".to_string()], vec![1.0]).unwrap();
        assert_eq!(
            concept_distance(&a, &other).unwrap_err(),
            MetricsError::LabelMismatch
        );
    }

    #[test]
    fn concept_distance_is_scale_invariant_and_symmetric() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let v = ConceptVector::new(labels.clone(), vec![0.3, 1.2, 0.0]).unwrap();
        let w = ConceptVector::new(labels.clone(), vec![1.0, 0.4, 2.0]).unwrap();
        let scaled =
            ConceptVector::new(labels, v.values.iter().map(|x| 7.0 * x).collect()).unwrap();
        let d = concept_distance(&v, &w).unwrap();
        assert!((concept_distance(&scaled, &w).unwrap() - d).abs() < 1e-12);
        assert!((concept_distance(&w, &v).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn vector_validation() {
        assert!(ConceptVector::new(vec!["a".to_string()], vec![1.0, 2.0]).is_err());
        assert!(
            ConceptVector::new(vec!["a".to_string(), "a".to_string()], vec![1.0, 2.0]).is_err()
        );
        assert!(ConceptVector::new(vec!["a".to_string()], vec![f64::NAN]).is_err());
    }

    #[test]
    fn mean_stderr_matches_hand_computation() {
        let single = mean_stderr(&[27.0]);
        assert_eq!(single.mean, 27.0);
        assert_eq!(single.stderr, 0.0);

        let flat = mean_stderr(&[27.0, 27.0, 27.0]);
        assert_eq!(flat.mean, 27.0);
        assert_eq!(flat.stderr, 0.0);

        let spread = mean_stderr(&[62.0, 64.0, 66.0]);
        assert_eq!(spread.mean, 64.0);
        assert!((spread.stderr - 2.0 / 3f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn aggregate_rejects_functional_without_compilable() {
        let seeds = vec![vec![row("x", false, Some(true), 10.0)]];
        assert!(matches!(
            aggregate(&seeds).unwrap_err(),
            MetricsError::FunctionalWithoutCompilable { .. }
        ));
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let a = row("a", true, Some(true), 80.0);
        let b = row("b", true, Some(false), 40.0);
        let c = row("c", false, Some(false), 20.0);
        let one = aggregate(&[vec![a.clone(), b.clone(), c.clone()]]).unwrap();
        let two = aggregate(&[vec![c, a, b]]).unwrap();
        assert_eq!(one.compilability.mean, two.compilability.mean);
        assert_eq!(one.rouge_l_f1.mean, two.rouge_l_f1.mean);
        assert_eq!(one.ncd.map(|m| m.mean), two.ncd.map(|m| m.mean));
    }

    #[test]
    fn aggregate_skips_ncd_when_functionality_unknown() {
        let seeds = vec![vec![row("a", true, None, 50.0)]];
        let report = aggregate(&seeds).unwrap();
        assert!(report.functionality.is_none());
        assert!(report.ncd.is_none());
        assert_eq!(report.compilability.mean, 100.0);
    }

    #[test]
    fn compilability_proxy_examples() {
        let g = Grammar::parse("s: \"(\" \"a\" \")\"", false).unwrap();
        assert!(compilability(&g, "( a )", None).compilable);
        assert!(!compilability(&g, "( a", None).compilable);
        assert!(!compilability(&g, "", None).compilable);
        assert!(!compilability(&g, "\"unterminated", None).compilable);
    }

    #[test]
    fn external_command_modes() {
        let g = Grammar::parse("s: \"x\"", false).unwrap();
        let pass = ExternalCmd::new("exit 0");
        let fail = ExternalCmd::new("exit 1");
        let weird = ExternalCmd::new("exit 3");
        assert!(compilability(&g, "anything", Some(&pass)).compilable);
        assert!(!compilability(&g, "anything", Some(&fail)).compilable);
        let err = compilability(&g, "anything", Some(&weird));
        assert!(!err.compilable);
        assert!(err.note.is_some());
    }

    #[test]
    fn external_command_timeout_is_an_error_note() {
        let mut cmd = ExternalCmd::new("sleep 5");
        cmd.timeout = Duration::from_millis(50);
        let (functional, note) = functionality("x", &cmd);
        assert_eq!(functional, None);
        assert!(note.unwrap().contains("timed out"));
    }

    #[test]
    fn functionality_consumes_stdin() {
        let cmd = ExternalCmd::new("grep -q game");
        assert_eq!(functionality("( game )", &cmd).0, Some(true));
        assert_eq!(functionality("( nope )", &cmd).0, Some(false));
    }
}
