//! Tokenizer for s-expression style game description text.
//!
//! The token classes here are the terminal alphabet the grammar layer and the
//! Earley engine work over: punctuation, identifiers (which include operator
//! spellings like `<` and `!=`), numbers, quoted strings, and named parameters
//! such as `if:`.

use thiserror::Error;

/// Classes produced by [`tokenize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenClass {
    LParen,
    RParen,
    LBrace,
    RBrace,
    Identifier,
    Number,
    Str,
    NamedParam,
}

impl TokenClass {
    pub fn name(self) -> &'static str {
        match self {
            TokenClass::LParen => "LPAREN",
            TokenClass::RParen => "RPAREN",
            TokenClass::LBrace => "LBRACE",
            TokenClass::RBrace => "RBRACE",
            TokenClass::Identifier => "IDENTIFIER",
            TokenClass::Number => "NUMBER",
            TokenClass::Str => "STRING",
            TokenClass::NamedParam => "NAMED_PARAM",
        }
    }
}

/// The open lexical classes a grammar may name as terminal classes.
///
/// Punctuation classes are excluded on purpose: grammars spell those as
/// quoted literals (`"("`, `"}"`), which match tokens by exact text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermClass {
    Identifier,
    Number,
    Str,
    NamedParam,
}

impl TermClass {
    pub const ALL: [TermClass; 4] = [
        TermClass::Identifier,
        TermClass::Number,
        TermClass::Str,
        TermClass::NamedParam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TermClass::Identifier => "IDENTIFIER",
            TermClass::Number => "NUMBER",
            TermClass::Str => "STRING",
            TermClass::NamedParam => "NAMED_PARAM",
        }
    }

    pub fn from_name(name: &str) -> Option<TermClass> {
        match name {
            "IDENTIFIER" => Some(TermClass::Identifier),
            "NUMBER" => Some(TermClass::Number),
            "STRING" => Some(TermClass::Str),
            "NAMED_PARAM" => Some(TermClass::NamedParam),
            _ => None,
        }
    }

    pub fn token_class(self) -> TokenClass {
        match self {
            TermClass::Identifier => TokenClass::Identifier,
            TermClass::Number => TokenClass::Number,
            TermClass::Str => TokenClass::Str,
            TermClass::NamedParam => TokenClass::NamedParam,
        }
    }

    /// Fixed placeholder text used when an open class must be concretized
    /// without a generator (random expansion, candidate fallback).
    pub fn placeholder(self) -> &'static str {
        match self {
            TermClass::Identifier => "id",
            TermClass::Number => "1",
            TermClass::Str => "\"s\"",
            TermClass::NamedParam => "p:",
        }
    }

    pub fn matches(self, token: &Token) -> bool {
        token.class == self.token_class()
    }
}

/// Byte range of a token in the source string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub class: TokenClass,
    pub text: String,
    pub span: Span,
}

/// A lexed description plus the source it came from.
#[derive(Debug, Clone, Default)]
pub struct TokenStream {
    tokens: Vec<Token>,
    source: String,
}

impl TokenStream {
    pub fn empty() -> TokenStream {
        TokenStream::default()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Canonical text of the first `upto` tokens, single-space joined.
    ///
    /// Panics if `upto` exceeds the stream length.
    pub fn detokenize(&self, upto: usize) -> String {
        assert!(upto <= self.tokens.len(), "detokenize past end of stream");
        let mut out = String::new();
        for (i, tok) in self.tokens[..upto].iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&tok.text);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated string starting at byte {start}")]
    UnterminatedString { start: usize },
    #[error("illegal character {ch:?} at byte {offset}")]
    IllegalChar { ch: char, offset: usize },
}

const IDENT_SYMBOLS: &str = "_.<>=+-*/^%!&";

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || IDENT_SYMBOLS.contains(c)
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || IDENT_SYMBOLS.contains(c)
}

/// Greedy longest-match lexer. Whitespace and `//` line comments are skipped.
pub fn tokenize(text: &str) -> Result<TokenStream, LexError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let byte_len = text.len();
    let at = |i: usize| -> char { chars[i].1 };
    let off = |i: usize| -> usize {
        if i < n {
            chars[i].0
        } else {
            byte_len
        }
    };

    let mut tokens = Vec::new();
    let mut i = 0;
    while i < n {
        let c = at(i);
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && i + 1 < n && at(i + 1) == '/' {
            while i < n && at(i) != '\n' {
                i += 1;
            }
            continue;
        }
        let start = off(i);
        let punct = match c {
            '(' => Some(TokenClass::LParen),
            ')' => Some(TokenClass::RParen),
            '{' => Some(TokenClass::LBrace),
            '}' => Some(TokenClass::RBrace),
            _ => None,
        };
        if let Some(class) = punct {
            tokens.push(Token {
                class,
                text: c.to_string(),
                span: Span {
                    start,
                    end: off(i + 1),
                },
            });
            i += 1;
            continue;
        }
        if c == '"' {
            let mut j = i + 1;
            while j < n && at(j) != '"' {
                j += 1;
            }
            if j >= n {
                return Err(LexError::UnterminatedString { start });
            }
            let end = off(j + 1);
            tokens.push(Token {
                class: TokenClass::Str,
                text: text[start..end].to_string(),
                span: Span { start, end },
            });
            i = j + 1;
            continue;
        }

        // Longest-match contest between NUMBER, NAMED_PARAM, and IDENTIFIER;
        // NUMBER wins ties so `-3` lexes as a number, not an identifier.
        let num_len = number_len(&chars, i);
        let ident_len = ident_len(&chars, i);
        let named_len = if ident_len > 0 && i + ident_len < n && at(i + ident_len) == ':' {
            ident_len + 1
        } else {
            0
        };
        let best = num_len.max(ident_len).max(named_len);
        if best == 0 {
            return Err(LexError::IllegalChar {
                ch: c,
                offset: start,
            });
        }
        let class = if num_len == best {
            TokenClass::Number
        } else if named_len == best {
            TokenClass::NamedParam
        } else {
            TokenClass::Identifier
        };
        let end = off(i + best);
        tokens.push(Token {
            class,
            text: text[start..end].to_string(),
            span: Span { start, end },
        });
        i += best;
    }

    Ok(TokenStream {
        tokens,
        source: text.to_string(),
    })
}

/// Length in chars of a NUMBER match at `i`: optional sign, digits,
/// optional `.` followed by digits.
fn number_len(chars: &[(usize, char)], i: usize) -> usize {
    let n = chars.len();
    let mut j = i;
    if j < n && (chars[j].1 == '+' || chars[j].1 == '-') {
        j += 1;
    }
    let digits_start = j;
    while j < n && chars[j].1.is_ascii_digit() {
        j += 1;
    }
    if j == digits_start {
        return 0;
    }
    if j + 1 < n && chars[j].1 == '.' && chars[j + 1].1.is_ascii_digit() {
        j += 1;
        while j < n && chars[j].1.is_ascii_digit() {
            j += 1;
        }
    }
    j - i
}

fn ident_len(chars: &[(usize, char)], i: usize) -> usize {
    if i >= chars.len() || !is_ident_start(chars[i].1) {
        return 0;
    }
    let mut j = i + 1;
    while j < chars.len() && is_ident_continue(chars[j].1) {
        j += 1;
    }
    j - i
}
