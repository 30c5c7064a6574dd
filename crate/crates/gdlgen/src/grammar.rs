//! Context-free grammars in BNF normal form, plus the text format they are
//! loaded from and rendered to.
//!
//! The text format is line oriented: one production per logical line
//! (`lhs : alt | alt`), indented lines continue the previous production,
//! `//` starts a comment, an empty alternative is epsilon. EBNF sugar
//! (`?`, `*`, `+`, parenthesized groups) is accepted on load and lowered to
//! plain BNF with synthesized nonterminals, so everything downstream of the
//! loader only ever sees flat alternatives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::lexer::TermClass;

/// One grammar symbol: a quoted literal, an open lexical class, or a
/// nonterminal reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Literal(String),
    Class(TermClass),
    Nonterminal(String),
}

impl Symbol {
    pub fn is_nonterminal(&self) -> bool {
        matches!(self, Symbol::Nonterminal(_))
    }

    pub fn nonterminal_name(&self) -> Option<&str> {
        match self {
            Symbol::Nonterminal(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Literal(text) => write!(f, "\"{}\"", escape_literal(text)),
            Symbol::Class(c) => f.write_str(c.name()),
            Symbol::Nonterminal(n) => f.write_str(n),
        }
    }
}

fn escape_literal(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

/// A single alternative of a production: `lhs -> rhs`. An empty `rhs` is
/// epsilon.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleAlt {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
}

impl fmt::Display for RuleAlt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.lhs)?;
        for sym in &self.rhs {
            write!(f, " {}", sym)?;
        }
        Ok(())
    }
}

/// A BNF grammar. Alternative order is preserved from source and acts as the
/// deterministic tie-break order everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    start: Option<String>,
    alts: Vec<RuleAlt>,
    provenance: BTreeMap<String, String>,
    partial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("grammar syntax error at line {line}, column {col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("grammar is empty")]
    Empty,
    #[error("undefined nonterminals: {}", names.join(", "))]
    UndefinedNonterminals { names: Vec<String> },
    #[error("unknown rule names: {}", names.join(", "))]
    UnknownRuleNames { names: Vec<String> },
}

/// Why a candidate alternative was rejected by [`validate_subset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// The left-hand side is not defined anywhere in the reference grammar.
    LhsUnknown,
    /// The left-hand side exists, but this exact alternative does not.
    AltNotInReference,
}

impl RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectReason::LhsUnknown => "lhs-unknown",
            RejectReason::AltNotInReference => "alt-not-in-reference",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RejectedAlt {
    pub alt: RuleAlt,
    pub reason: RejectReason,
}

#[derive(Debug, Clone)]
pub struct SubsetValidation {
    pub valid: Grammar,
    pub rejected: Vec<RejectedAlt>,
}

impl Grammar {
    pub fn empty() -> Grammar {
        Grammar {
            start: None,
            alts: Vec::new(),
            provenance: BTreeMap::new(),
            partial: true,
        }
    }

    /// Builds a grammar from explicit alternatives, deduplicating identical
    /// entries while preserving first-occurrence order.
    pub fn from_alts(start: Option<String>, alts: Vec<RuleAlt>, partial: bool) -> Grammar {
        let mut seen = BTreeSet::new();
        let mut deduped = Vec::new();
        for alt in alts {
            if seen.insert(alt.clone()) {
                deduped.push(alt);
            }
        }
        Grammar {
            start,
            alts: deduped,
            provenance: BTreeMap::new(),
            partial,
        }
    }

    /// Parses the grammar text format. With `partial=false`, undefined
    /// nonterminals and an empty grammar are errors.
    pub fn parse(text: &str, partial: bool) -> Result<Grammar, GrammarError> {
        Self::parse_with_warnings(text, partial).map(|(g, _)| g)
    }

    /// Like [`Grammar::parse`] but also returns non-fatal diagnostics
    /// (currently: deduplicated alternatives).
    pub fn parse_with_warnings(
        text: &str,
        partial: bool,
    ) -> Result<(Grammar, Vec<String>), GrammarError> {
        let lines = logical_lines(text)?;
        let mut warnings = Vec::new();
        let mut productions = Vec::new();
        for line in &lines {
            productions.push(parse_production(line)?);
        }
        let grammar = lower_productions(productions, partial, &mut warnings)?;
        Ok((grammar, warnings))
    }

    /// Best-effort parse for model output: logical lines that fail to parse
    /// are dropped with a note instead of failing the whole text. The result
    /// is always a partial grammar.
    pub fn parse_lenient(text: &str) -> (Grammar, Vec<String>) {
        let mut notes = Vec::new();
        let lines = match logical_lines(text) {
            Ok(lines) => lines,
            Err(e) => {
                // Line assembly itself cannot fail today; keep the guard in
                // case the format grows stricter.
                notes.push(format!("dropped grammar text: {}", e));
                return (Grammar::empty(), notes);
            }
        };
        let mut productions = Vec::new();
        for line in &lines {
            match parse_production(line) {
                Ok(p) => productions.push(p),
                Err(e) => notes.push(format!("dropped line {}: {}", line.start_line, e)),
            }
        }
        let mut warnings = Vec::new();
        let grammar = lower_productions(productions, true, &mut warnings)
            .unwrap_or_else(|_| Grammar::empty());
        notes.extend(warnings);
        (grammar, notes)
    }

    /// Canonical text: one production per lhs (first-occurrence order),
    /// alternatives `|`-separated in stored order. Epsilon renders as an
    /// empty alternative. `parse(render(g))` yields an identical alt set.
    pub fn render(&self) -> String {
        let mut order: Vec<&str> = Vec::new();
        let mut grouped: BTreeMap<&str, Vec<&RuleAlt>> = BTreeMap::new();
        for alt in &self.alts {
            if !grouped.contains_key(alt.lhs.as_str()) {
                order.push(&alt.lhs);
            }
            grouped.entry(&alt.lhs).or_default().push(alt);
        }
        let mut out = String::new();
        for lhs in order {
            out.push_str(lhs);
            out.push(':');
            for (i, alt) in grouped[lhs].iter().enumerate() {
                if i > 0 {
                    out.push_str(" |");
                }
                for sym in &alt.rhs {
                    out.push(' ');
                    out.push_str(&sym.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn start(&self) -> Option<&str> {
        self.start.as_deref()
    }

    /// Returns a copy rooted at `name`. Used to re-anchor predicted grammars
    /// at the reference start symbol before description decoding.
    pub fn rerooted(&self, name: &str) -> Grammar {
        let mut g = self.clone();
        g.start = Some(name.to_string());
        g
    }

    pub fn alts(&self) -> &[RuleAlt] {
        &self.alts
    }

    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.provenance
    }

    pub fn defined_lhs(&self) -> BTreeSet<&str> {
        self.alts.iter().map(|a| a.lhs.as_str()).collect()
    }

    pub fn contains_alt(&self, alt: &RuleAlt) -> bool {
        self.alts.iter().any(|a| a == alt)
    }

    pub fn alt_set(&self) -> BTreeSet<&RuleAlt> {
        self.alts.iter().collect()
    }

    /// Nonterminals used on some right-hand side but never defined, in
    /// sorted order.
    pub fn undefined_nonterminals(&self) -> BTreeSet<String> {
        let defined = self.defined_lhs();
        let mut out = BTreeSet::new();
        for alt in &self.alts {
            for sym in &alt.rhs {
                if let Symbol::Nonterminal(n) = sym {
                    if !defined.contains(n.as_str()) {
                        out.insert(n.clone());
                    }
                }
            }
        }
        out
    }

    pub fn is_closed(&self) -> bool {
        self.undefined_nonterminals().is_empty()
    }

    /// Extracts the partial grammar defining `names`: every alternative
    /// whose lhs is in `names`, in this grammar's order, rooted at the first
    /// name in sorted order. Every name must be defined here.
    pub fn rules_for(&self, names: &BTreeSet<String>) -> Result<Grammar, GrammarError> {
        let defined = self.defined_lhs();
        let missing: Vec<String> = names
            .iter()
            .filter(|n| !defined.contains(n.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(GrammarError::UnknownRuleNames { names: missing });
        }
        let alts: Vec<RuleAlt> = self
            .alts
            .iter()
            .filter(|a| names.contains(&a.lhs))
            .cloned()
            .collect();
        Ok(Grammar {
            start: names.iter().next().cloned(),
            alts,
            provenance: BTreeMap::new(),
            partial: true,
        })
    }
}

/// Splits a candidate grammar into the alternatives present verbatim in
/// `reference` and the rejected remainder. Matching is per single
/// alternative: same lhs and the same symbol sequence after lowering.
pub fn validate_subset(candidate: &Grammar, reference: &Grammar) -> SubsetValidation {
    let ref_alts: BTreeSet<&RuleAlt> = reference.alts.iter().collect();
    let ref_lhs = reference.defined_lhs();
    let mut valid_alts = Vec::new();
    let mut rejected = Vec::new();
    for alt in &candidate.alts {
        if ref_alts.contains(alt) {
            valid_alts.push(alt.clone());
        } else if ref_lhs.contains(alt.lhs.as_str()) {
            rejected.push(RejectedAlt {
                alt: alt.clone(),
                reason: RejectReason::AltNotInReference,
            });
        } else {
            rejected.push(RejectedAlt {
                alt: alt.clone(),
                reason: RejectReason::LhsUnknown,
            });
        }
    }
    let start = match &candidate.start {
        Some(s) if valid_alts.iter().any(|a| &a.lhs == s) => Some(s.clone()),
        _ => valid_alts.first().map(|a| a.lhs.clone()),
    };
    SubsetValidation {
        valid: Grammar {
            start,
            alts: valid_alts,
            provenance: BTreeMap::new(),
            partial: true,
        },
        rejected,
    }
}

/// Union of alternatives, deduplicated, base order first. The start symbol
/// follows the base unless the base is empty.
pub fn merge(base: &Grammar, addition: &Grammar) -> Grammar {
    let mut alts = base.alts.clone();
    let mut seen: BTreeSet<&RuleAlt> = base.alts.iter().collect();
    for alt in &addition.alts {
        if !seen.contains(alt) {
            alts.push(alt.clone());
            seen.insert(alt);
        }
    }
    let start = if base.alts.is_empty() {
        addition.start.clone().or_else(|| base.start.clone())
    } else {
        base.start.clone()
    };
    let mut provenance = base.provenance.clone();
    for (k, v) in &addition.provenance {
        provenance.entry(k.clone()).or_insert_with(|| v.clone());
    }
    Grammar {
        start,
        alts,
        provenance,
        partial: base.partial || addition.partial,
    }
}

// ---------------------------------------------------------------------------
// Text format: logical lines -> productions -> lowered BNF
// ---------------------------------------------------------------------------

struct LogicalLine {
    start_line: usize,
    text: String,
}

/// Assembles logical lines: a production starts on an unindented line and
/// indented lines continue it. Comments are stripped outside quotes.
fn logical_lines(text: &str) -> Result<Vec<LogicalLine>, GrammarError> {
    let mut out: Vec<LogicalLine> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = strip_comment(raw);
        if stripped.trim().is_empty() {
            continue;
        }
        let continuation = stripped.starts_with(|c: char| c.is_whitespace());
        if continuation {
            if let Some(last) = out.last_mut() {
                last.text.push(' ');
                last.text.push_str(stripped.trim());
                continue;
            }
        }
        out.push(LogicalLine {
            start_line: line_no,
            text: stripped.trim().to_string(),
        });
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    let mut in_string = false;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => {
                if in_string && i > 0 && bytes[i - 1] == b'\\' {
                    // escaped quote inside a literal
                } else {
                    in_string = !in_string;
                }
            }
            b'/' if !in_string && i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                return &line[..i];
            }
            _ => {}
        }
        i += 1;
    }
    line
}

/// Pre-lowering element of an alternative.
#[derive(Debug, Clone)]
enum Elem {
    Lit(String),
    Class(TermClass),
    Nt(String),
    Group(Vec<Vec<Elem>>),
    Opt(Box<Elem>),
    Star(Box<Elem>),
    Plus(Box<Elem>),
}

impl Elem {
    /// Source-shaped text, used for provenance entries.
    fn describe(&self) -> String {
        match self {
            Elem::Lit(t) => format!("\"{}\"", escape_literal(t)),
            Elem::Class(c) => c.name().to_string(),
            Elem::Nt(n) => n.clone(),
            Elem::Group(alts) => {
                let rendered: Vec<String> = alts
                    .iter()
                    .map(|seq| seq.iter().map(Elem::describe).collect::<Vec<_>>().join(" "))
                    .collect();
                format!("({})", rendered.join(" | "))
            }
            Elem::Opt(e) => format!("{}?", e.describe()),
            Elem::Star(e) => format!("{}*", e.describe()),
            Elem::Plus(e) => format!("{}+", e.describe()),
        }
    }
}

struct Production {
    lhs: String,
    alts: Vec<Vec<Elem>>,
}

#[derive(Debug, PartialEq)]
enum GTok {
    Name(String),
    Quoted(String),
    Colon,
    Pipe,
    LParen,
    RParen,
    Question,
    Star,
    Plus,
}

struct GTokAt {
    tok: GTok,
    line: usize,
    col: usize,
}

fn lex_grammar_line(line: &LogicalLine) -> Result<Vec<GTokAt>, GrammarError> {
    let chars: Vec<char> = line.text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    // Logical lines are joined with spaces, so line numbers all map to the
    // production's first physical line; columns are 1-based chars.
    let line_no = line.start_line;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            ':' => Some(GTok::Colon),
            '|' => Some(GTok::Pipe),
            '(' => Some(GTok::LParen),
            ')' => Some(GTok::RParen),
            '?' => Some(GTok::Question),
            '*' => Some(GTok::Star),
            '+' => Some(GTok::Plus),
            _ => None,
        };
        if let Some(tok) = single {
            toks.push(GTokAt {
                tok,
                line: line_no,
                col,
            });
            i += 1;
            continue;
        }
        if c == '"' {
            let mut text = String::new();
            let mut j = i + 1;
            let mut closed = false;
            while j < chars.len() {
                match chars[j] {
                    '\\' if j + 1 < chars.len() => {
                        text.push(chars[j + 1]);
                        j += 2;
                    }
                    '"' => {
                        closed = true;
                        j += 1;
                        break;
                    }
                    other => {
                        text.push(other);
                        j += 1;
                    }
                }
            }
            if !closed {
                return Err(GrammarError::Syntax {
                    line: line_no,
                    col,
                    msg: "unterminated literal".to_string(),
                });
            }
            toks.push(GTokAt {
                tok: GTok::Quoted(text),
                line: line_no,
                col,
            });
            i = j;
            continue;
        }
        if c.is_alphani() {
            let mut j = i;
            while j < chars.len() && chars[j].is_alphani() {
                j += 1;
            }
            let name: String = chars[i..j].iter().collect();
            toks.push(GTokAt {
                tok: GTok::Name(name),
                line: line_no,
                col,
            });
            i = j;
            continue;
        }
        return Err(GrammarError::Syntax {
            line: line_no,
            col,
            msg: format!("unexpected character {:?}", c),
        });
    }
    Ok(toks)
}

trait AlphaNi {
    fn is_alphani(&self) -> bool;
}

impl AlphaNi for char {
    fn is_alphani(&self) -> bool {
        self.is_alphanumeric() || *self == '_'
    }
}

fn parse_production(line: &LogicalLine) -> Result<Production, GrammarError> {
    let toks = lex_grammar_line(line)?;
    let mut pos = 0;
    let lhs = match toks.first() {
        Some(GTokAt {
            tok: GTok::Name(n), ..
        }) => n.clone(),
        _ => {
            return Err(GrammarError::Syntax {
                line: line.start_line,
                col: 1,
                msg: "expected a nonterminal name".to_string(),
            })
        }
    };
    if TermClass::from_name(&lhs).is_some() {
        return Err(GrammarError::Syntax {
            line: line.start_line,
            col: 1,
            msg: format!("{} is a reserved terminal class name", lhs),
        });
    }
    if lhs.starts_with(|c: char| c.is_ascii_digit()) {
        return Err(GrammarError::Syntax {
            line: line.start_line,
            col: 1,
            msg: "nonterminal names may not start with a digit".to_string(),
        });
    }
    pos += 1;
    match toks.get(pos) {
        Some(GTokAt {
            tok: GTok::Colon, ..
        }) => pos += 1,
        other => {
            let (l, c) = other
                .map(|t| (t.line, t.col))
                .unwrap_or((line.start_line, line.text.chars().count() + 1));
            return Err(GrammarError::Syntax {
                line: l,
                col: c,
                msg: "expected ':' after nonterminal name".to_string(),
            });
        }
    }
    let (alts, end) = parse_alternation(&toks, pos, line.start_line)?;
    if end != toks.len() {
        return Err(GrammarError::Syntax {
            line: toks[end].line,
            col: toks[end].col,
            msg: "unexpected trailing tokens".to_string(),
        });
    }
    Ok(Production { lhs, alts })
}

/// Parses `alt (| alt)*` until end of input or an unmatched `)`.
fn parse_alternation(
    toks: &[GTokAt],
    mut pos: usize,
    line_no: usize,
) -> Result<(Vec<Vec<Elem>>, usize), GrammarError> {
    let mut alts = Vec::new();
    loop {
        let (seq, next) = parse_sequence(toks, pos, line_no)?;
        alts.push(seq);
        pos = next;
        match toks.get(pos) {
            Some(GTokAt {
                tok: GTok::Pipe, ..
            }) => pos += 1,
            _ => break,
        }
    }
    Ok((alts, pos))
}

fn parse_sequence(
    toks: &[GTokAt],
    mut pos: usize,
    line_no: usize,
) -> Result<(Vec<Elem>, usize), GrammarError> {
    let mut seq = Vec::new();
    loop {
        let elem = match toks.get(pos) {
            Some(GTokAt {
                tok: GTok::Quoted(t),
                line,
                col,
            }) => {
                if t.is_empty() {
                    return Err(GrammarError::Syntax {
                        line: *line,
                        col: *col,
                        msg: "empty literal".to_string(),
                    });
                }
                pos += 1;
                Elem::Lit(t.clone())
            }
            Some(GTokAt {
                tok: GTok::Name(n), ..
            }) => {
                pos += 1;
                match TermClass::from_name(n) {
                    Some(c) => Elem::Class(c),
                    None => Elem::Nt(n.clone()),
                }
            }
            Some(GTokAt {
                tok: GTok::LParen, ..
            }) => {
                pos += 1;
                let (alts, next) = parse_alternation(toks, pos, line_no)?;
                match toks.get(next) {
                    Some(GTokAt {
                        tok: GTok::RParen, ..
                    }) => {
                        pos = next + 1;
                        Elem::Group(alts)
                    }
                    other => {
                        let (l, c) = other.map(|t| (t.line, t.col)).unwrap_or((line_no, 0));
                        return Err(GrammarError::Syntax {
                            line: l,
                            col: c,
                            msg: "unclosed group".to_string(),
                        });
                    }
                }
            }
            _ => break,
        };
        let elem = apply_postfix(toks, &mut pos, elem);
        seq.push(elem);
    }
    Ok((seq, pos))
}

fn apply_postfix(toks: &[GTokAt], pos: &mut usize, mut elem: Elem) -> Elem {
    loop {
        match toks.get(*pos).map(|t| &t.tok) {
            Some(GTok::Question) => {
                elem = Elem::Opt(Box::new(elem));
                *pos += 1;
            }
            Some(GTok::Star) => {
                elem = Elem::Star(Box::new(elem));
                *pos += 1;
            }
            Some(GTok::Plus) => {
                elem = Elem::Plus(Box::new(elem));
                *pos += 1;
            }
            _ => return elem,
        }
    }
}

struct Lowerer {
    taken: BTreeSet<String>,
    counters: BTreeMap<(String, &'static str), usize>,
    synthesized: Vec<(String, Vec<Vec<Symbol>>)>,
    provenance: BTreeMap<String, String>,
}

impl Lowerer {
    fn fresh_name(&mut self, base: &str, kind: &'static str) -> String {
        loop {
            let count = self.counters.entry((base.to_string(), kind)).or_insert(0);
            *count += 1;
            let name = match (kind, *count) {
                ("grp", k) => format!("{}__grp{}", base, k),
                (_, 1) => format!("{}__{}", base, kind),
                (_, k) => format!("{}__{}{}", base, kind, k),
            };
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }

    fn lower_elem(&mut self, base: &str, elem: &Elem) -> Symbol {
        match elem {
            Elem::Lit(t) => Symbol::Literal(t.clone()),
            Elem::Class(c) => Symbol::Class(*c),
            Elem::Nt(n) => Symbol::Nonterminal(n.clone()),
            Elem::Opt(inner) => {
                let sym = self.lower_elem(base, inner);
                let name = self.fresh_name(base, "opt");
                self.provenance.insert(name.clone(), elem.describe());
                self.synthesized
                    .push((name.clone(), vec![vec![sym], vec![]]));
                Symbol::Nonterminal(name)
            }
            Elem::Star(inner) => {
                let sym = self.lower_elem(base, inner);
                let name = self.fresh_name(base, "star");
                self.provenance.insert(name.clone(), elem.describe());
                let rec = vec![sym, Symbol::Nonterminal(name.clone())];
                self.synthesized.push((name.clone(), vec![rec, vec![]]));
                Symbol::Nonterminal(name)
            }
            Elem::Plus(inner) => {
                let sym = self.lower_elem(base, inner);
                let name = self.fresh_name(base, "plus");
                self.provenance.insert(name.clone(), elem.describe());
                let rec = vec![sym.clone(), Symbol::Nonterminal(name.clone())];
                self.synthesized.push((name.clone(), vec![rec, vec![sym]]));
                Symbol::Nonterminal(name)
            }
            Elem::Group(alts) => {
                let lowered: Vec<Vec<Symbol>> = alts
                    .iter()
                    .map(|seq| seq.iter().map(|e| self.lower_elem(base, e)).collect())
                    .collect();
                let name = self.fresh_name(base, "grp");
                self.provenance.insert(name.clone(), elem.describe());
                self.synthesized.push((name.clone(), lowered));
                Symbol::Nonterminal(name)
            }
        }
    }
}

fn lower_productions(
    productions: Vec<Production>,
    partial: bool,
    warnings: &mut Vec<String>,
) -> Result<Grammar, GrammarError> {
    let mut taken: BTreeSet<String> = BTreeSet::new();
    for p in &productions {
        taken.insert(p.lhs.clone());
        for alt in &p.alts {
            collect_names(alt, &mut taken);
        }
    }
    let mut lowerer = Lowerer {
        taken,
        counters: BTreeMap::new(),
        synthesized: Vec::new(),
        provenance: BTreeMap::new(),
    };

    let start = productions.first().map(|p| p.lhs.clone());
    let mut alts: Vec<RuleAlt> = Vec::new();
    let mut seen: BTreeSet<RuleAlt> = BTreeSet::new();
    let mut push_alt = |alt: RuleAlt, warnings: &mut Vec<String>| {
        if seen.insert(alt.clone()) {
            alts.push(alt);
        } else {
            warnings.push(format!("duplicate alternative deduplicated: {}", alt));
        }
    };

    for p in productions {
        for alt in &p.alts {
            let rhs: Vec<Symbol> = alt.iter().map(|e| lowerer.lower_elem(&p.lhs, e)).collect();
            push_alt(
                RuleAlt {
                    lhs: p.lhs.clone(),
                    rhs,
                },
                warnings,
            );
        }
        // Definitions synthesized while lowering this production follow it
        // immediately, in creation order.
        for (name, bodies) in std::mem::take(&mut lowerer.synthesized) {
            for rhs in bodies {
                push_alt(
                    RuleAlt {
                        lhs: name.clone(),
                        rhs,
                    },
                    warnings,
                );
            }
        }
    }

    let grammar = Grammar {
        start,
        alts,
        provenance: lowerer.provenance,
        partial,
    };
    if !partial {
        if grammar.alts.is_empty() {
            return Err(GrammarError::Empty);
        }
        let undefined = grammar.undefined_nonterminals();
        if !undefined.is_empty() {
            return Err(GrammarError::UndefinedNonterminals {
                names: undefined.into_iter().collect(),
            });
        }
    }
    Ok(grammar)
}

fn collect_names(seq: &[Elem], out: &mut BTreeSet<String>) {
    for elem in seq {
        match elem {
            Elem::Nt(n) => {
                out.insert(n.clone());
            }
            Elem::Group(alts) => {
                for alt in alts {
                    collect_names(alt, out);
                }
            }
            Elem::Opt(e) | Elem::Star(e) | Elem::Plus(e) => {
                collect_names(std::slice::from_ref(e.as_ref()), out)
            }
            _ => {}
        }
    }
}
