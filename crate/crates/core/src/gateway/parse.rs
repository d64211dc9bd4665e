//! Parsers that turn free-form model replies into structured values.
//!
//! Every parser is total: failures come back as [`ReplyError`] carrying the
//! raw reply so callers can log it and pick a fallback.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplyError {
    #[error("unparseable reply: {reply:?}")]
    UnparseableReply { reply: String },
    #[error("reply contains no list items: {reply:?}")]
    EmptyList { reply: String },
}

impl ReplyError {
    pub fn reply(&self) -> &str {
        match self {
            ReplyError::UnparseableReply { reply } | ReplyError::EmptyList { reply } => reply,
        }
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

pub fn parse_bool(reply: &str) -> Result<bool, ReplyError> {
    for w in words(reply) {
        match w.as_str() {
            "yes" | "true" | "sufficient" => return Ok(true),
            "no" | "not" | "false" | "insufficient" => return Ok(false),
            _ => {}
        }
    }
    Err(ReplyError::UnparseableReply {
        reply: reply.to_string(),
    })
}

/// A selectable label plus phrases that also select it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice {
    pub label: String,
    pub synonyms: Vec<String>,
}

impl Choice {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            synonyms: Vec::new(),
        }
    }

    pub fn with_synonyms<S: Into<String>>(mut self, synonyms: impl IntoIterator<Item = S>) -> Self {
        self.synonyms.extend(synonyms.into_iter().map(Into::into));
        self
    }
}

/// Byte offset of the first whole-word occurrence of `needle` in `haystack`.
/// Both arguments must already be lowercase.
pub(crate) fn find_phrase(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        if boundary(haystack[..start].chars().next_back()) && boundary(haystack[end..].chars().next()) {
            return Some(start);
        }
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// Picks the option mentioned earliest in `reply` (labels and synonyms,
/// case-insensitive, whole words). At equal positions the longer phrase wins,
/// so "not true" beats "true".
pub fn parse_choice<'a>(reply: &str, options: &'a [Choice]) -> Result<&'a Choice, ReplyError> {
    let text = reply.to_lowercase();
    let mut best: Option<(usize, usize, &Choice)> = None;
    for option in options {
        for phrase in std::iter::once(&option.label).chain(&option.synonyms) {
            let phrase = phrase.to_lowercase();
            if let Some(pos) = find_phrase(&text, &phrase) {
                let better = match best {
                    None => true,
                    Some((p, len, _)) => pos < p || (pos == p && phrase.len() > len),
                };
                if better {
                    best = Some((pos, phrase.len(), option));
                }
            }
        }
    }
    best.map(|(_, _, c)| c).ok_or_else(|| ReplyError::UnparseableReply {
        reply: reply.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DelimitedList {
    pub items: Vec<String>,
    /// Items that were not part of the expected universe.
    pub dropped: Vec<String>,
}

fn clean_item(raw: &str) -> &str {
    let mut s = raw.trim();
    loop {
        let before = s;
        s = s.trim_start_matches(['-', '*', '•', '+']).trim_start();
        // "1." / "2)" list numbering
        let digits = s.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 && s[digits..].starts_with(['.', ')']) && s.len() > digits + 1 {
            s = s[digits + 1..].trim_start();
        }
        s = s
            .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '[' | ']'))
            .trim();
        if s == before {
            return s;
        }
    }
}

fn match_universe<'u>(item: &str, universe: &'u [String]) -> Option<&'u String> {
    let lowered = item.to_lowercase();
    universe
        .iter()
        .find(|u| *u == item)
        .or_else(|| universe.iter().find(|u| u.to_lowercase() == lowered))
}

/// Splits a reply on newlines, commas and pipes. With a universe, items are
/// matched case-insensitively to their canonical spelling and anything else is
/// reported in `dropped`.
pub fn parse_delimited_list(
    reply: &str,
    universe: Option<&[String]>,
) -> Result<DelimitedList, ReplyError> {
    let mut out = DelimitedList::default();
    for line in reply.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("```") {
            continue;
        }
        if let Some(universe) = universe {
            if let Some(hit) = match_universe(clean_item(line), universe) {
                out.items.push(hit.clone());
                continue;
            }
        }
        for piece in line.split([',', '|']) {
            let item = clean_item(piece);
            if item.is_empty() || item.chars().all(|c| matches!(c, '-' | ':')) {
                continue;
            }
            match universe {
                None => out.items.push(item.to_string()),
                Some(universe) => {
                    let hit = match_universe(item, universe).or_else(|| {
                        item.rsplit_once(':')
                            .and_then(|(_, tail)| match_universe(clean_item(tail), universe))
                    });
                    match hit {
                        Some(h) => out.items.push(h.clone()),
                        None => out.dropped.push(item.to_string()),
                    }
                }
            }
        }
    }
    if out.items.is_empty() {
        return Err(ReplyError::EmptyList {
            reply: reply.to_string(),
        });
    }
    Ok(out)
}

/// Contents of the first triple-backtick fence with its language tag removed,
/// or the whole reply when there is no fence.
pub fn extract_code_block(reply: &str) -> String {
    let Some(open) = reply.find("```") else {
        return reply.trim().to_string();
    };
    let after = &reply[open + 3..];
    let body = match after.find("```") {
        Some(close) => &after[..close],
        None => after,
    };
    let body = match body.split_once('\n') {
        Some((first, rest))
            if first
                .trim()
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '+' | '-')) =>
        {
            rest
        }
        _ => body,
    };
    body.trim().to_string()
}
