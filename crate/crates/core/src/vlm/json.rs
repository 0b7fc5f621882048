//! Recovering the JSON object from a free-form model reply.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PayloadError {
    #[error("no JSON object in response")]
    NoJsonFound,
    #[error("unbalanced braces in response")]
    UnbalancedBraces,
    #[error("invalid JSON: {0}")]
    Invalid(String),
}

/// Byte range of the first balanced `{...}` starting at or after `from`.
fn balanced_object(text: &str, from: usize) -> Result<(usize, usize), PayloadError> {
    let bytes = text.as_bytes();
    let start = text[from..]
        .find('{')
        .map(|i| i + from)
        .ok_or(PayloadError::NoJsonFound)?;
    let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((start, i + 1));
                }
            }
            _ => {}
        }
    }
    Err(PayloadError::UnbalancedBraces)
}

/// Drops `// ...` line comments outside string literals. Models sometimes
/// echo the annotated examples from the prompt verbatim.
fn strip_line_comments(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let (mut in_str, mut escaped) = (false, false);
    let mut chars = src.chars().peekable();
    while let Some(c) = chars.next() {
        if in_str {
            out.push(c);
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        if c == '/' && chars.peek() == Some(&'/') {
            for n in chars.by_ref() {
                if n == '\n' {
                    out.push('\n');
                    break;
                }
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        out.push(c);
    }
    out
}

fn parse_object(slice: &str) -> Result<Value, PayloadError> {
    serde_json::from_str(slice).or_else(|first| {
        serde_json::from_str(&strip_line_comments(slice)).map_err(|_| PayloadError::Invalid(first.to_string()))
    })
}

/// Contents of the first fenced code block, if any.
fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

/// Extracts and parses the first balanced top-level JSON object in `text`.
///
/// A fenced code block is tried first when present; otherwise (or when the
/// block holds no usable object) the whole text is scanned. Surrounding
/// prose is ignored.
pub fn parse_json_payload(text: &str) -> Result<Value, PayloadError> {
    if let Some(block) = fenced_block(text) {
        if let Ok((s, e)) = balanced_object(block, 0) {
            if let Ok(v) = parse_object(&block[s..e]) {
                return Ok(v);
            }
        }
    }
    let (s, e) = balanced_object(text, 0)?;
    parse_object(&text[s..e])
}
