//! Extraction of payloads from model responses, which tend to wrap the
//! answer in prose or markdown fences.

/// Content of the first fenced code block, if any, with an optional
/// language tag stripped.
fn fenced_block(text: &str) -> Option<String> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let line_end = after.find('\n')?;
    let body = &after[line_end + 1..];
    let close = body.find("```")?;
    Some(body[..close].to_string())
}

/// Grammar responses: the first fenced block, otherwise the raw text. The
/// lenient grammar parser downstream drops non-production lines.
pub fn extract_grammar(text: &str) -> String {
    fenced_block(text).unwrap_or_else(|| text.to_string())
}

/// Description responses: the first paren-balanced s-expression, searched
/// inside a fenced block first, then in the raw text. Falls back to
/// everything from the first `(` (unbalanced output), then to the trimmed
/// text.
pub fn extract_sexpr(text: &str) -> String {
    let haystack = fenced_block(text).unwrap_or_else(|| text.to_string());
    match balanced_sexpr(&haystack) {
        Some(found) => found,
        None => haystack.trim().to_string(),
    }
}

fn balanced_sexpr(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut start = None;
    let mut in_string = false;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'"' => in_string = !in_string,
            b'(' if !in_string => {
                if start.is_none() {
                    start = Some(i);
                }
                depth += 1;
            }
            b')' if !in_string && depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[start.unwrap()..=i].to_string());
                }
            }
            _ => {}
        }
    }
    start.map(|s| text[s..].trim_end().to_string())
}

/// Single-token responses (terminal selection): strips fences, enumeration
/// prefixes like `2.`, and backticks, then takes the first token.
pub fn extract_token(text: &str) -> String {
    let body = fenced_block(text).unwrap_or_else(|| text.to_string());
    let mut trimmed = body.trim();
    // Drop a leading "N." or "N)" echoed from the numbered candidate list.
    let no_enum = trimmed
        .split_once(['.', ')'])
        .filter(|(head, _)| !head.is_empty() && head.chars().all(|c| c.is_ascii_digit()))
        .map(|(_, rest)| rest.trim());
    if let Some(rest) = no_enum {
        trimmed = rest;
    }
    let trimmed = trimmed.trim_matches('`').trim();
    match crate::lexer::tokenize(trimmed) {
        Ok(ts) if !ts.is_empty() => ts.tokens()[0].text.clone(),
        _ => trimmed
            .split_whitespace()
            .next()
            .unwrap_or_default()
            .to_string(),
    }
}

/// Continuation responses: fenced content if present, otherwise the raw
/// text, trimmed. Continuations are usually unbalanced tails, so no
/// balancing is attempted.
pub fn extract_completion(text: &str) -> String {
    fenced_block(text)
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| text.trim().to_string())
}
