//! Brute-force oracles used by the integration and acceptance suites.
//!
//! Everything here recomputes language facts from first principles
//! (epsilon elimination plus exhaustive sentential-form search) and stays
//! off the chart-parser code paths it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use gdlgen::grammar::{Grammar, RuleAlt, Symbol};
use gdlgen::lexer::{tokenize, TermClass, Token, TokenStream};
use gdlgen::TerminalExpectation;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A terminal symbol as the oracle sees it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TermSym {
    Lit(String),
    Class(TermClass),
}

impl TermSym {
    pub fn matches_token(&self, token: &Token) -> bool {
        match self {
            TermSym::Lit(text) => token.text == *text,
            TermSym::Class(c) => c.matches(token),
        }
    }

    /// Concrete spelling used to build test input text.
    pub fn text(&self) -> String {
        match self {
            TermSym::Lit(text) => text.clone(),
            TermSym::Class(c) => c.placeholder().to_string(),
        }
    }

    pub fn to_expectation(&self) -> TerminalExpectation {
        match self {
            TermSym::Lit(text) => TerminalExpectation::Literal(text.clone()),
            TermSym::Class(c) => TerminalExpectation::Class(*c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum FormSym {
    T(TermSym),
    N(usize),
}

/// Epsilon-free, productive-only rewrite of a grammar, independent of the
/// engine's preprocessing. `accepts_empty` records whether the original
/// language contained the empty sentence.
pub struct OracleGrammar {
    rules_by_nt: Vec<Vec<Vec<FormSym>>>,
    start: Option<usize>,
    pub accepts_empty: bool,
}

impl OracleGrammar {
    pub fn build(g: &Grammar) -> OracleGrammar {
        let mut names: Vec<String> = Vec::new();
        let id = |n: &str, names: &mut Vec<String>| -> usize {
            match names.iter().position(|x| x == n) {
                Some(i) => i,
                None => {
                    names.push(n.to_string());
                    names.len() - 1
                }
            }
        };
        let mut raw: Vec<(usize, Vec<FormSym>)> = Vec::new();
        for alt in g.alts() {
            let lhs = id(&alt.lhs, &mut names);
            let rhs = alt
                .rhs
                .iter()
                .map(|s| match s {
                    Symbol::Literal(t) => FormSym::T(TermSym::Lit(t.clone())),
                    Symbol::Class(c) => FormSym::T(TermSym::Class(*c)),
                    Symbol::Nonterminal(n) => FormSym::N(id(n, &mut names)),
                })
                .collect();
            raw.push((lhs, rhs));
        }
        let start = g.start().and_then(|s| names.iter().position(|x| x == s));
        let nt_count = names.len();

        // Nullable fixpoint.
        let mut nullable = vec![false; nt_count];
        loop {
            let mut changed = false;
            for (lhs, rhs) in &raw {
                if !nullable[*lhs]
                    && rhs
                        .iter()
                        .all(|s| matches!(s, FormSym::N(b) if nullable[*b]))
                {
                    nullable[*lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let accepts_empty = start.map(|s| nullable[s]).unwrap_or(false);

        // Epsilon elimination: every way of dropping nullable occurrences,
        // minus the fully-empty body.
        let mut eps_free: BTreeSet<(usize, Vec<FormSym>)> = BTreeSet::new();
        for (lhs, rhs) in &raw {
            let nullable_positions: Vec<usize> = rhs
                .iter()
                .enumerate()
                .filter_map(|(i, s)| match s {
                    FormSym::N(b) if nullable[*b] => Some(i),
                    _ => None,
                })
                .collect();
            let k = nullable_positions.len();
            for mask in 0u32..(1 << k) {
                let dropped: BTreeSet<usize> = nullable_positions
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| mask & (1 << bit) != 0)
                    .map(|(_, pos)| *pos)
                    .collect();
                let body: Vec<FormSym> = rhs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !dropped.contains(i))
                    .map(|(_, s)| s.clone())
                    .collect();
                if !body.is_empty() {
                    eps_free.insert((*lhs, body.clone()));
                }
            }
        }

        // Productive fixpoint over the epsilon-free rules.
        let mut productive = vec![false; nt_count];
        loop {
            let mut changed = false;
            for (lhs, rhs) in &eps_free {
                if !productive[*lhs]
                    && rhs.iter().all(|s| match s {
                        FormSym::T(_) => true,
                        FormSym::N(b) => productive[*b],
                    })
                {
                    productive[*lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut rules_by_nt = vec![Vec::new(); nt_count];
        for (lhs, rhs) in eps_free {
            let ok = rhs.iter().all(|s| match s {
                FormSym::T(_) => true,
                FormSym::N(b) => productive[*b],
            });
            if ok {
                rules_by_nt[lhs].push(rhs);
            }
        }
        OracleGrammar {
            rules_by_nt,
            start,
            accepts_empty,
        }
    }

    fn language_nonempty(&self) -> bool {
        self.accepts_empty
            || self
                .start
                .map(|s| !self.rules_by_nt[s].is_empty())
                .unwrap_or(false)
    }

    /// All sentences of length at most `max_len`, as terminal-symbol
    /// sequences, by exhaustive leftmost expansion with deduplication.
    pub fn enumerate(&self, max_len: usize) -> BTreeSet<Vec<TermSym>> {
        let mut out = BTreeSet::new();
        if self.accepts_empty {
            out.insert(Vec::new());
        }
        let Some(start) = self.start else { return out };
        if self.rules_by_nt[start].is_empty() {
            return out;
        }
        let mut visited: BTreeSet<Vec<FormSym>> = BTreeSet::new();
        let mut queue: VecDeque<Vec<FormSym>> = VecDeque::new();
        let seed = vec![FormSym::N(start)];
        visited.insert(seed.clone());
        queue.push_back(seed);
        while let Some(form) = queue.pop_front() {
            match form.iter().position(|s| matches!(s, FormSym::N(_))) {
                None => {
                    let sentence: Vec<TermSym> = form
                        .into_iter()
                        .map(|s| match s {
                            FormSym::T(t) => t,
                            FormSym::N(_) => unreachable!(),
                        })
                        .collect();
                    out.insert(sentence);
                }
                Some(pos) => {
                    let FormSym::N(nt) = form[pos] else {
                        unreachable!()
                    };
                    for rhs in &self.rules_by_nt[nt] {
                        // Epsilon-free: every symbol yields at least one
                        // token, so longer forms cannot shrink back.
                        if form.len() - 1 + rhs.len() > max_len {
                            continue;
                        }
                        let mut next = Vec::with_capacity(form.len() - 1 + rhs.len());
                        next.extend_from_slice(&form[..pos]);
                        next.extend(rhs.iter().cloned());
                        next.extend_from_slice(&form[pos + 1..]);
                        if visited.insert(next.clone()) {
                            queue.push_back(next);
                        }
                    }
                }
            }
        }
        out
    }

    /// Does any sentence start with the given probes? Tokens match by text
    /// or class; symbol probes match terminals exactly.
    pub fn viable(&self, probes: &[Probe]) -> bool {
        if probes.is_empty() {
            return self.language_nonempty();
        }
        let Some(start) = self.start else {
            return false;
        };
        let budget = probes.len();
        let mut visited: BTreeSet<(Vec<FormSym>, usize)> = BTreeSet::new();
        let mut stack: Vec<(Vec<FormSym>, usize)> = vec![(vec![FormSym::N(start)], 0)];
        while let Some((mut form, mut matched)) = stack.pop() {
            // Consume leading terminals against the probes.
            loop {
                if matched == budget {
                    return true;
                }
                match form.first() {
                    Some(FormSym::T(t)) => {
                        if probes[matched].admits(t) {
                            form.remove(0);
                            matched += 1;
                        } else {
                            break;
                        }
                    }
                    Some(FormSym::N(_)) => {
                        // Expand below.
                        let FormSym::N(nt) = form[0] else {
                            unreachable!()
                        };
                        form.truncate(budget - matched + 1);
                        if !visited.insert((form.clone(), matched)) {
                            break;
                        }
                        for rhs in &self.rules_by_nt[nt] {
                            let mut next = rhs.clone();
                            next.extend_from_slice(&form[1..]);
                            next.truncate(budget - matched + 1);
                            stack.push((next, matched));
                        }
                        break;
                    }
                    None => break,
                }
            }
        }
        false
    }
}

impl OracleGrammar {
    /// Exact membership by exhaustive leftmost search: the whole token
    /// sequence must be consumed with an empty form left over. Unlike
    /// [`OracleGrammar::viable`], forms are only pruned, never truncated,
    /// so this works on sentences far beyond enumeration range.
    pub fn matches(&self, tokens: &[Token]) -> bool {
        if tokens.is_empty() {
            return self.accepts_empty;
        }
        let Some(start) = self.start else {
            return false;
        };
        let budget = tokens.len();
        let mut visited: BTreeSet<(Vec<FormSym>, usize)> = BTreeSet::new();
        let mut stack: Vec<(Vec<FormSym>, usize)> = vec![(vec![FormSym::N(start)], 0)];
        while let Some((mut form, mut matched)) = stack.pop() {
            loop {
                match form.first() {
                    None => {
                        if matched == budget {
                            return true;
                        }
                        break;
                    }
                    Some(FormSym::T(t)) => {
                        if matched < budget && t.matches_token(&tokens[matched]) {
                            form.remove(0);
                            matched += 1;
                        } else {
                            break;
                        }
                    }
                    Some(FormSym::N(_)) => {
                        let FormSym::N(nt) = form[0] else {
                            unreachable!()
                        };
                        if !visited.insert((form.clone(), matched)) {
                            break;
                        }
                        for rhs in &self.rules_by_nt[nt] {
                            // Epsilon-free rules: every symbol yields at
                            // least one token.
                            if rhs.len() + form.len() - 1 > budget - matched {
                                continue;
                            }
                            let mut next = rhs.clone();
                            next.extend_from_slice(&form[1..]);
                            stack.push((next, matched));
                        }
                        break;
                    }
                }
            }
        }
        false
    }
}

/// One matching query against a sentence position: an actual token (matched
/// by text/class) or an exact terminal symbol.
#[derive(Debug, Clone)]
pub enum Probe {
    Tok(Token),
    Sym(TermSym),
}

impl Probe {
    fn admits(&self, sym: &TermSym) -> bool {
        match self {
            Probe::Tok(token) => sym.matches_token(token),
            Probe::Sym(s) => s == sym,
        }
    }
}

/// Exhaustive membership check against the enumerated language.
pub fn oracle_recognize(sentences: &BTreeSet<Vec<TermSym>>, tokens: &[Token]) -> bool {
    sentences.iter().any(|sentence| {
        sentence.len() == tokens.len()
            && sentence
                .iter()
                .zip(tokens)
                .all(|(sym, tok)| sym.matches_token(tok))
    })
}

/// Longest k such that tokens[..k] starts some sentence.
pub fn oracle_valid_len(og: &OracleGrammar, tokens: &[Token]) -> usize {
    let mut best = 0;
    for k in 0..=tokens.len() {
        let probes: Vec<Probe> = tokens[..k].iter().cloned().map(Probe::Tok).collect();
        if og.viable(&probes) {
            best = k;
        } else {
            break;
        }
    }
    best
}

/// Terminals of `g` that may legally follow the prefix, checked one symbol
/// at a time.
pub fn oracle_candidates(
    og: &OracleGrammar,
    g: &Grammar,
    tokens: &[Token],
    valid_len: usize,
) -> BTreeSet<TerminalExpectation> {
    let mut alphabet: BTreeSet<TermSym> = BTreeSet::new();
    for alt in g.alts() {
        for sym in &alt.rhs {
            match sym {
                Symbol::Literal(t) => {
                    alphabet.insert(TermSym::Lit(t.clone()));
                }
                Symbol::Class(c) => {
                    alphabet.insert(TermSym::Class(*c));
                }
                Symbol::Nonterminal(_) => {}
            }
        }
    }
    let mut out = BTreeSet::new();
    for sym in alphabet {
        let mut probes: Vec<Probe> = tokens[..valid_len]
            .iter()
            .cloned()
            .map(Probe::Tok)
            .collect();
        probes.push(Probe::Sym(sym.clone()));
        if og.viable(&probes) {
            out.insert(sym.to_expectation());
        }
    }
    out
}

/// Canonical-derivation oracle: chartless exhaustive search that walks
/// choice points in the same canonical order the engine promises
/// (alternatives by grammar index, splits shortest-first, leftmost-first)
/// and returns the rule indices of the first complete derivation.
pub fn oracle_canonical_derivation(g: &Grammar, tokens: &[Token]) -> Option<Vec<usize>> {
    let alts = g.alts();
    let start = g.start()?;
    let mut used = Vec::new();
    let mut active = BTreeSet::new();
    if derive_nt(
        g,
        alts,
        start,
        0,
        tokens.len(),
        tokens,
        &mut active,
        &mut used,
    ) {
        let mut seen = BTreeSet::new();
        Some(used.into_iter().filter(|i| seen.insert(*i)).collect())
    } else {
        None
    }
}

#[allow(clippy::too_many_arguments)]
fn derive_nt(
    g: &Grammar,
    alts: &[RuleAlt],
    nt: &str,
    from: usize,
    to: usize,
    tokens: &[Token],
    active: &mut BTreeSet<(String, usize, usize)>,
    used: &mut Vec<usize>,
) -> bool {
    if !active.insert((nt.to_string(), from, to)) {
        return false;
    }
    for (idx, alt) in alts.iter().enumerate() {
        if alt.lhs != nt {
            continue;
        }
        let mark = used.len();
        used.push(idx);
        if derive_seq(g, alts, &alt.rhs, from, to, tokens, active, used) {
            active.remove(&(nt.to_string(), from, to));
            return true;
        }
        used.truncate(mark);
    }
    active.remove(&(nt.to_string(), from, to));
    false
}

#[allow(clippy::too_many_arguments)]
fn derive_seq(
    g: &Grammar,
    alts: &[RuleAlt],
    syms: &[Symbol],
    from: usize,
    to: usize,
    tokens: &[Token],
    active: &mut BTreeSet<(String, usize, usize)>,
    used: &mut Vec<usize>,
) -> bool {
    let Some(first) = syms.first() else {
        return from == to;
    };
    match first {
        Symbol::Literal(t) => {
            from < to
                && tokens[from].text == *t
                && derive_seq(g, alts, &syms[1..], from + 1, to, tokens, active, used)
        }
        Symbol::Class(c) => {
            from < to
                && c.matches(&tokens[from])
                && derive_seq(g, alts, &syms[1..], from + 1, to, tokens, active, used)
        }
        Symbol::Nonterminal(b) => {
            if syms.len() == 1 {
                return derive_nt(g, alts, b, from, to, tokens, active, used);
            }
            for mid in from..=to {
                let mark = used.len();
                if derive_nt(g, alts, b, from, mid, tokens, active, used)
                    && derive_seq(g, alts, &syms[1..], mid, to, tokens, active, used)
                {
                    return true;
                }
                used.truncate(mark);
            }
            false
        }
    }
}

// ---------------------------------------------------------------------------
// Random grammar and input generation
// ---------------------------------------------------------------------------

pub struct CaseGen {
    pub rng: ChaCha8Rng,
}

impl CaseGen {
    pub fn new(seed: u64) -> CaseGen {
        CaseGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Random closed grammar within the oracle-suite size bounds:
    /// at most 5 nonterminals, at most 3 alternatives each, right-hand
    /// sides of length at most 3.
    pub fn grammar(&mut self) -> Grammar {
        let nt_count = self.rng.gen_range(1..=5);
        let names: Vec<String> = (0..nt_count).map(|i| format!("n{}", i)).collect();
        let literals = ["a", "b", "c"];
        let mut alts = Vec::new();
        for name in &names {
            let alt_count = self.rng.gen_range(1..=3);
            for _ in 0..alt_count {
                let len = self.rng.gen_range(0..=3);
                let rhs: Vec<Symbol> = (0..len)
                    .map(|_| {
                        let roll = self.rng.gen_range(0..10);
                        if roll < 5 {
                            Symbol::Literal(
                                literals[self.rng.gen_range(0..literals.len())].to_string(),
                            )
                        } else if roll < 6 {
                            Symbol::Class(TermClass::Number)
                        } else {
                            Symbol::Nonterminal(names[self.rng.gen_range(0..names.len())].clone())
                        }
                    })
                    .collect();
                alts.push(RuleAlt {
                    lhs: name.clone(),
                    rhs,
                });
            }
        }
        Grammar::from_alts(Some(names[0].clone()), alts, false)
    }

    /// A token string over the grammar's terminal spellings: either a
    /// sampled sentence, a corrupted sentence, or uniform noise.
    pub fn input(&mut self, sentences: &BTreeSet<Vec<TermSym>>, max_len: usize) -> TokenStream {
        let pool = ["a", "b", "c", "1", "x"];
        let sentence_list: Vec<&Vec<TermSym>> = sentences.iter().collect();
        let mode = self.rng.gen_range(0..3);
        let text = if mode < 2 && !sentence_list.is_empty() {
            let sentence = sentence_list[self.rng.gen_range(0..sentence_list.len())];
            let mut words: Vec<String> = sentence.iter().map(|s| s.text()).collect();
            if mode == 1 {
                // Corrupt: drop, swap in noise, or append.
                match self.rng.gen_range(0..3) {
                    0 if !words.is_empty() => {
                        let at = self.rng.gen_range(0..words.len());
                        words.remove(at);
                    }
                    1 if !words.is_empty() => {
                        let at = self.rng.gen_range(0..words.len());
                        words[at] = pool[self.rng.gen_range(0..pool.len())].to_string();
                    }
                    _ => words.push(pool[self.rng.gen_range(0..pool.len())].to_string()),
                }
            }
            // Stay within the oracle's enumeration bound.
            words.truncate(max_len);
            words.join(" ")
        } else {
            let len = self.rng.gen_range(0..=max_len);
            (0..len)
                .map(|_| pool[self.rng.gen_range(0..pool.len())])
                .collect::<Vec<_>>()
                .join(" ")
        };
        tokenize(&text).expect("generated inputs lex")
    }
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn load_fixture_grammar() -> Grammar {
    let path = fixtures_dir().join("minigdl.grammar");
    let text = std::fs::read_to_string(path).expect("fixture grammar readable");
    Grammar::parse(&text, false).expect("fixture grammar parses closed")
}
