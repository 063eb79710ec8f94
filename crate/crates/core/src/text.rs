//! Small text helpers shared by the parser, corpus and prompt layers.

use sha2::{Digest, Sha256};

/// Collapses every run of whitespace to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Hex-encoded SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// First 16 hex digits of the SHA-256, used for compact payload hashes in logs.
pub fn short_hash(text: &str) -> String {
    let mut h = sha256_hex(text);
    h.truncate(16);
    h
}

pub(crate) fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Byte offset of the first whole-word occurrence of any of `words` in `text`.
pub(crate) fn find_keyword<'w>(text: &str, words: &[&'w str]) -> Option<(usize, &'w str)> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if is_word_byte(bytes[i]) && (i == 0 || !is_word_byte(bytes[i - 1])) {
            let mut j = i;
            while j < bytes.len() && is_word_byte(bytes[j]) {
                j += 1;
            }
            let word = &text[i..j];
            if let Some(w) = words.iter().find(|w| **w == word) {
                return Some((i, *w));
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}

/// The whitespace-separated first word of `text`.
pub(crate) fn first_word(text: &str) -> &str {
    let t = text.trim_start();
    let end = t
        .bytes()
        .position(|b| !is_word_byte(b))
        .unwrap_or(t.len());
    &t[..end]
}

/// Splits `text` on commas that are not nested inside brackets.
pub(crate) fn split_top_level_commas(text: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            _ => {}
        }
        if c == ',' && depth == 0 {
            parts.push(current.trim().to_string());
            current.clear();
        } else {
            current.push(c);
        }
    }
    if !current.trim().is_empty() {
        parts.push(current.trim().to_string());
    }
    parts
}

/// Replaces TLA+ comments with spaces while keeping every newline, so line
/// numbers and columns of the remaining text are unchanged.
pub(crate) fn blank_comments(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut depth = 0usize;
    let mut in_string = false;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if depth > 0 {
            if c == '(' && next == Some('*') {
                depth += 1;
                out.push_str("  ");
                i += 2;
            } else if c == '*' && next == Some(')') {
                depth -= 1;
                out.push_str("  ");
                i += 2;
            } else {
                out.push(if c == '\n' { '\n' } else { ' ' });
                i += 1;
            }
            continue;
        }
        if in_string {
            out.push(c);
            if c == '\\' {
                if let Some(n) = next {
                    out.push(n);
                    i += 2;
                    continue;
                }
            } else if c == '"' || c == '\n' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        match (c, next) {
            ('"', _) => {
                in_string = true;
                out.push(c);
                i += 1;
            }
            ('(', Some('*')) => {
                depth = 1;
                out.push_str("  ");
                i += 2;
            }
            ('\\', Some('*')) => {
                while i < chars.len() && chars[i] != '\n' {
                    out.push(' ');
                    i += 1;
                }
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// Rewrites every step reference `<n>` (not part of a `<<` / `>>` tuple
/// bracket) to `<f(n)>`.
pub(crate) fn map_step_refs(text: &str, f: impl Fn(u32) -> u32) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len() + 8);
    let mut i = 0;
    let mut last = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' && (i == 0 || bytes[i - 1] != b'<') {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let closes = j > i + 1
                && j < bytes.len()
                && bytes[j] == b'>'
                && bytes.get(j + 1) != Some(&b'>');
            if closes {
                if let Ok(level) = text[i + 1..j].parse::<u32>() {
                    out.push_str(&text[last..i]);
                    out.push('<');
                    out.push_str(&f(level).to_string());
                    out.push('>');
                    i = j + 1;
                    last = i;
                    continue;
                }
            }
        }
        i += 1;
    }
    out.push_str(&text[last..]);
    out
}

/// Adds `delta` to the level of every step reference.
pub(crate) fn shift_step_refs(text: &str, delta: u32) -> String {
    if delta == 0 {
        return text.to_string();
    }
    map_step_refs(text, |l| l + delta)
}
