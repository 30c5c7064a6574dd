//! Earley chart parser over [`Grammar`] and [`TokenStream`]: full
//! recognition, longest-valid-prefix recovery with candidate terminal sets,
//! and extraction of the rules used by one canonical derivation.
//!
//! Epsilon rules are handled with a precomputed nullable set applied at
//! prediction time. Alternatives whose right-hand side mentions an
//! unproductive nonterminal are excluded up front; that exclusion makes a
//! non-empty chart column equivalent to "this prefix extends to a
//! sentence", the property prefix recovery depends on.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::grammar::{Grammar, RuleAlt, Symbol};
use crate::lexer::{TermClass, Token, TokenStream};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("grammar has undefined nonterminals: {}", names.join(", "))]
    PartialGrammar { names: Vec<String> },
    #[error("input is not a sentence of the grammar")]
    NotASentence,
}

/// A terminal the parser is prepared to scan next: either an exact literal
/// or any token of an open lexical class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TerminalExpectation {
    Literal(String),
    Class(TermClass),
}

impl TerminalExpectation {
    /// Concrete token text for this expectation; classes use their fixed
    /// placeholder spelling.
    pub fn concretize(&self) -> String {
        match self {
            TerminalExpectation::Literal(text) => text.clone(),
            TerminalExpectation::Class(c) => c.placeholder().to_string(),
        }
    }

    pub fn admits(&self, token: &Token) -> bool {
        match self {
            TerminalExpectation::Literal(text) => token.text == *text,
            TerminalExpectation::Class(c) => c.matches(token),
        }
    }
}

impl fmt::Display for TerminalExpectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalExpectation::Literal(text) => write!(f, "{}", text),
            TerminalExpectation::Class(c) => write!(f, "<{}>", c.name()),
        }
    }
}

// Literals sort before classes; literals by text, classes by name.
impl Ord for TerminalExpectation {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use TerminalExpectation::*;
        match (self, other) {
            (Literal(a), Literal(b)) => a.cmp(b),
            (Literal(_), Class(_)) => std::cmp::Ordering::Less,
            (Class(_), Literal(_)) => std::cmp::Ordering::Greater,
            (Class(a), Class(b)) => a.name().cmp(b.name()),
        }
    }
}

impl PartialOrd for TerminalExpectation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixStatus {
    Complete,
    Prefix,
}

/// Result of longest-valid-prefix recovery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixAnalysis {
    pub status: PrefixStatus,
    /// Token count of the longest prefix that extends to some sentence.
    pub valid_len: usize,
    /// Terminals scannable after the valid prefix, deduplicated, literals
    /// sorted by text then classes by name.
    pub candidates: Vec<TerminalExpectation>,
}

/// The alternatives used by one complete derivation, in first-use
/// (preorder) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationUse {
    alts: Vec<RuleAlt>,
}

impl DerivationUse {
    pub fn alts(&self) -> &[RuleAlt] {
        &self.alts
    }

    pub fn len(&self) -> usize {
        self.alts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alts.is_empty()
    }

    /// Packs the used alternatives into a grammar rooted at `start`,
    /// preserving the order the alternatives have in `reference`.
    pub fn to_grammar(&self, reference: &Grammar, start: Option<String>) -> Grammar {
        let used: HashSet<&RuleAlt> = self.alts.iter().collect();
        let alts: Vec<RuleAlt> = reference
            .alts()
            .iter()
            .filter(|a| used.contains(*a))
            .cloned()
            .collect();
        Grammar::from_alts(start, alts, false)
    }
}

/// True iff the token sequence is a sentence of the grammar. The grammar
/// must be closed.
pub fn recognize(g: &Grammar, ts: &TokenStream) -> Result<bool, ParseError> {
    ensure_closed(g)?;
    Ok(Engine::new(g).recognizes(ts.tokens()))
}

/// Recognition with partial-grammar semantics: an undefined nonterminal
/// derives nothing. Used by minimality checking, where deleting a rule may
/// leave dangling references on purpose.
pub(crate) fn recognize_lenient(g: &Grammar, ts: &TokenStream) -> bool {
    Engine::new(g).recognizes(ts.tokens())
}

/// Longest valid prefix plus the terminal expectations that may follow it.
/// The grammar must be closed.
pub fn parse_prefix(g: &Grammar, ts: &TokenStream) -> Result<PrefixAnalysis, ParseError> {
    ensure_closed(g)?;
    Ok(Engine::new(g).prefix(ts.tokens()))
}

/// The alternatives of one complete derivation of `ts`. Under ambiguity the
/// canonical derivation is returned: at every choice point the alternative
/// with the lowest grammar index wins, leftmost-first, with shorter spans
/// tried first for earlier symbols.
pub fn derivation_rules(g: &Grammar, ts: &TokenStream) -> Result<DerivationUse, ParseError> {
    ensure_closed(g)?;
    let engine = Engine::new(g);
    engine
        .derivation(ts.tokens())
        .ok_or(ParseError::NotASentence)
}

fn ensure_closed(g: &Grammar) -> Result<(), ParseError> {
    let undefined = g.undefined_nonterminals();
    if undefined.is_empty() {
        Ok(())
    } else {
        Err(ParseError::PartialGrammar {
            names: undefined.into_iter().collect(),
        })
    }
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    alt: usize,
    dot: usize,
    origin: usize,
}

enum ISym<'g> {
    Term(&'g Symbol),
    Nt(usize),
}

struct Engine<'g> {
    alt_lhs: Vec<usize>,
    alt_rhs: Vec<Vec<ISym<'g>>>,
    alts_by_nt: Vec<Vec<usize>>,
    useful: Vec<bool>,
    nullable: Vec<bool>,
    start: Option<usize>,
    alt_refs: Vec<&'g RuleAlt>,
}

struct Column {
    items: Vec<Item>,
    seen: HashSet<Item>,
    /// nt id -> indices into `items` whose dot sits before that nonterminal.
    wants: HashMap<usize, Vec<Item>>,
}

impl Column {
    fn new() -> Column {
        Column {
            items: Vec::new(),
            seen: HashSet::new(),
            wants: HashMap::new(),
        }
    }

    fn add(&mut self, item: Item) {
        if self.seen.insert(item) {
            self.items.push(item);
        }
    }
}

impl<'g> Engine<'g> {
    fn new(g: &'g Grammar) -> Engine<'g> {
        let mut nt_ids: HashMap<&str, usize> = HashMap::new();
        let mut intern = |name: &'g str, alts_by_nt: &mut Vec<Vec<usize>>| -> usize {
            *nt_ids.entry(name).or_insert_with(|| {
                alts_by_nt.push(Vec::new());
                alts_by_nt.len() - 1
            })
        };

        let mut alts_by_nt: Vec<Vec<usize>> = Vec::new();
        let mut alt_lhs = Vec::new();
        let mut alt_rhs: Vec<Vec<ISym>> = Vec::new();
        let mut alt_refs = Vec::new();
        for (idx, alt) in g.alts().iter().enumerate() {
            let lhs = intern(&alt.lhs, &mut alts_by_nt);
            let rhs: Vec<ISym> = alt
                .rhs
                .iter()
                .map(|sym| match sym {
                    Symbol::Nonterminal(n) => ISym::Nt(intern(n, &mut alts_by_nt)),
                    other => ISym::Term(other),
                })
                .collect();
            alts_by_nt[lhs].push(idx);
            alt_lhs.push(lhs);
            alt_rhs.push(rhs);
            alt_refs.push(alt);
        }
        let start = g.start().and_then(|s| nt_ids.get(s).copied());

        let nt_count = alts_by_nt.len();
        // Productive: derives at least one terminal string. Undefined
        // nonterminals have no alternatives and stay unproductive.
        let mut productive = vec![false; nt_count];
        loop {
            let mut changed = false;
            for (alt, rhs) in alt_rhs.iter().enumerate() {
                let lhs = alt_lhs[alt];
                if productive[lhs] {
                    continue;
                }
                let ok = rhs.iter().all(|s| match s {
                    ISym::Term(_) => true,
                    ISym::Nt(b) => productive[*b],
                });
                if ok {
                    productive[lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let useful: Vec<bool> = alt_rhs
            .iter()
            .map(|rhs| {
                rhs.iter().all(|s| match s {
                    ISym::Term(_) => true,
                    ISym::Nt(b) => productive[*b],
                })
            })
            .collect();

        let mut nullable = vec![false; nt_count];
        loop {
            let mut changed = false;
            for (alt, rhs) in alt_rhs.iter().enumerate() {
                let lhs = alt_lhs[alt];
                if nullable[lhs] {
                    continue;
                }
                let ok = rhs.iter().all(|s| match s {
                    ISym::Term(_) => false,
                    ISym::Nt(b) => nullable[*b],
                });
                if ok {
                    nullable[lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        Engine {
            alt_lhs,
            alt_rhs,
            alts_by_nt,
            useful,
            nullable,
            start,
            alt_refs,
        }
    }

    fn seed(&self) -> Column {
        let mut col = Column::new();
        if let Some(start) = self.start {
            for &alt in &self.alts_by_nt[start] {
                if self.useful[alt] {
                    col.add(Item {
                        alt,
                        dot: 0,
                        origin: 0,
                    });
                }
            }
        }
        col
    }

    /// Closes column `k` under prediction and completion, then returns the
    /// items that expect a terminal (for scanning).
    fn close_column(&self, chart: &mut [Column], k: usize) -> Vec<Item> {
        let mut scans = Vec::new();
        let mut cursor = 0;
        while cursor < chart[k].items.len() {
            let item = chart[k].items[cursor];
            cursor += 1;
            let rhs = &self.alt_rhs[item.alt];
            if item.dot < rhs.len() {
                match &rhs[item.dot] {
                    ISym::Term(_) => scans.push(item),
                    ISym::Nt(b) => {
                        let b = *b;
                        chart[k].wants.entry(b).or_default().push(item);
                        for &alt in &self.alts_by_nt[b] {
                            if self.useful[alt] {
                                chart[k].add(Item {
                                    alt,
                                    dot: 0,
                                    origin: k,
                                });
                            }
                        }
                        if self.nullable[b] {
                            chart[k].add(Item {
                                alt: item.alt,
                                dot: item.dot + 1,
                                origin: item.origin,
                            });
                        }
                    }
                }
            } else if item.origin < k {
                let lhs = self.alt_lhs[item.alt];
                let waiting = chart[item.origin]
                    .wants
                    .get(&lhs)
                    .cloned()
                    .unwrap_or_default();
                for parent in waiting {
                    chart[k].add(Item {
                        alt: parent.alt,
                        dot: parent.dot + 1,
                        origin: parent.origin,
                    });
                }
            }
            // Completions with origin == k are epsilon derivations; the
            // nullable advance at prediction time already covers them.
        }
        scans
    }

    fn scan_into(&self, scans: &[Item], token: &Token) -> Column {
        let mut next = Column::new();
        for item in scans {
            if let ISym::Term(sym) = &self.alt_rhs[item.alt][item.dot] {
                if terminal_matches(sym, token) {
                    next.add(Item {
                        alt: item.alt,
                        dot: item.dot + 1,
                        origin: item.origin,
                    });
                }
            }
        }
        next
    }

    fn run_chart(&self, tokens: &[Token]) -> (Vec<Column>, Vec<Vec<Item>>) {
        let mut chart = vec![self.seed()];
        let mut scan_lists = Vec::new();
        for (k, token) in tokens.iter().enumerate() {
            let scans = self.close_column(&mut chart, k);
            let next = self.scan_into(&scans, token);
            scan_lists.push(scans);
            if next.items.is_empty() {
                // Dead input: keep the chart truncated at the last live column.
                return (chart, scan_lists);
            }
            chart.push(next);
        }
        let last = chart.len() - 1;
        let scans = self.close_column(&mut chart, last);
        scan_lists.push(scans);
        (chart, scan_lists)
    }

    fn recognizes(&self, tokens: &[Token]) -> bool {
        let (chart, _) = self.run_chart(tokens);
        if chart.len() != tokens.len() + 1 {
            return false;
        }
        let Some(start) = self.start else {
            return false;
        };
        chart[tokens.len()].seen.iter().any(|item| {
            self.alt_lhs[item.alt] == start
                && item.origin == 0
                && item.dot == self.alt_rhs[item.alt].len()
        })
    }

    fn prefix(&self, tokens: &[Token]) -> PrefixAnalysis {
        let (chart, scan_lists) = self.run_chart(tokens);
        let valid_len = chart.len() - 1;
        let candidates: BTreeSet<TerminalExpectation> = scan_lists[valid_len]
            .iter()
            .map(|item| match &self.alt_rhs[item.alt][item.dot] {
                ISym::Term(Symbol::Literal(text)) => TerminalExpectation::Literal(text.clone()),
                ISym::Term(Symbol::Class(c)) => TerminalExpectation::Class(*c),
                _ => unreachable!("scan items stop at terminals"),
            })
            .collect();
        let complete = valid_len == tokens.len()
            && self.start.is_some_and(|start| {
                chart[valid_len].seen.iter().any(|item| {
                    self.alt_lhs[item.alt] == start
                        && item.origin == 0
                        && item.dot == self.alt_rhs[item.alt].len()
                })
            });
        PrefixAnalysis {
            status: if complete {
                PrefixStatus::Complete
            } else {
                PrefixStatus::Prefix
            },
            valid_len,
            candidates: candidates.into_iter().collect(),
        }
    }

    fn derivation(&self, tokens: &[Token]) -> Option<DerivationUse> {
        if !self.recognizes(tokens) {
            return None;
        }
        let (chart, _) = self.run_chart(tokens);
        // Spans of completed nonterminals: (nt, from) -> ends.
        let mut spans: HashMap<(usize, usize), BTreeSet<usize>> = HashMap::new();
        for (end, col) in chart.iter().enumerate() {
            for item in &col.items {
                if item.dot == self.alt_rhs[item.alt].len() {
                    spans
                        .entry((self.alt_lhs[item.alt], item.origin))
                        .or_default()
                        .insert(end);
                }
            }
        }
        let start = self.start?;
        let mut used: Vec<usize> = Vec::new();
        let mut active = HashSet::new();
        let ctx = DeriveCtx {
            engine: self,
            tokens,
            spans: &spans,
        };
        if !ctx.derive_nt(start, 0, tokens.len(), &mut active, &mut used) {
            return None;
        }
        let mut seen = HashSet::new();
        let alts: Vec<RuleAlt> = used
            .into_iter()
            .filter(|idx| seen.insert(*idx))
            .map(|idx| self.alt_refs[idx].clone())
            .collect();
        Some(DerivationUse { alts })
    }
}

fn terminal_matches(sym: &Symbol, token: &Token) -> bool {
    match sym {
        Symbol::Literal(text) => token.text == *text,
        Symbol::Class(c) => c.matches(token),
        Symbol::Nonterminal(_) => false,
    }
}

struct DeriveCtx<'a, 'g> {
    engine: &'a Engine<'g>,
    tokens: &'a [Token],
    spans: &'a HashMap<(usize, usize), BTreeSet<usize>>,
}

impl DeriveCtx<'_, '_> {
    fn derive_nt(
        &self,
        nt: usize,
        from: usize,
        to: usize,
        active: &mut HashSet<(usize, usize, usize)>,
        used: &mut Vec<usize>,
    ) -> bool {
        if !self
            .spans
            .get(&(nt, from))
            .is_some_and(|ends| ends.contains(&to))
        {
            return false;
        }
        if !active.insert((nt, from, to)) {
            return false;
        }
        for &alt in &self.engine.alts_by_nt[nt] {
            if !self.engine.useful[alt] {
                continue;
            }
            let mark = used.len();
            used.push(alt);
            if self.derive_seq(&self.engine.alt_rhs[alt], from, to, active, used) {
                active.remove(&(nt, from, to));
                return true;
            }
            used.truncate(mark);
        }
        active.remove(&(nt, from, to));
        false
    }

    fn derive_seq(
        &self,
        syms: &[ISym],
        from: usize,
        to: usize,
        active: &mut HashSet<(usize, usize, usize)>,
        used: &mut Vec<usize>,
    ) -> bool {
        let Some(first) = syms.first() else {
            return from == to;
        };
        match first {
            ISym::Term(sym) => {
                from < to
                    && terminal_matches(sym, &self.tokens[from])
                    && self.derive_seq(&syms[1..], from + 1, to, active, used)
            }
            ISym::Nt(b) => {
                let b = *b;
                if syms.len() == 1 {
                    return self.derive_nt(b, from, to, active, used);
                }
                let Some(ends) = self.spans.get(&(b, from)) else {
                    return false;
                };
                for &mid in ends.iter().filter(|&&m| m <= to) {
                    let mark = used.len();
                    if self.derive_nt(b, from, mid, active, used)
                        && self.derive_seq(&syms[1..], mid, to, active, used)
                    {
                        return true;
                    }
                    used.truncate(mark);
                }
                false
            }
        }
    }
}
