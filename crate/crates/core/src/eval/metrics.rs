use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::parse_number;

pub const RELATIVE_TOLERANCE: f64 = 1e-6;

const QUOTES: &[(char, char)] = &[('"', '"'), ('\'', '\''), ('“', '”'), ('‘', '’'), ('`', '`')];

fn normalize_once(text: &str) -> String {
    let mut s = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    loop {
        let before = s.len();
        if let Some(rest) = s.strip_suffix('.') {
            s = rest.trim_end().to_string();
        }
        for &(open, close) in QUOTES {
            if s.len() >= open.len_utf8() + close.len_utf8() && s.starts_with(open) && s.ends_with(close) {
                s = s[open.len_utf8()..s.len() - close.len_utf8()].trim().to_string();
            }
        }
        if s.len() == before {
            break;
        }
    }
    if let Some(n) = parse_number(&s) {
        let mut c = n.canonical;
        if c.contains('.') {
            c = c.trim_end_matches('0').trim_end_matches('.').to_string();
            if c == "-0" {
                c = "0".into();
            }
        }
        s = c;
    }
    s
}

/// Canonical form used for exact-match comparison.
pub fn normalize_answer(text: &str) -> String {
    let mut current = normalize_once(text);
    for _ in 0..8 {
        let next = normalize_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn parts(answer: &str) -> Vec<String> {
    let mut p: Vec<String> = answer.split('|').map(normalize_answer).collect();
    p.sort();
    p
}

fn part_matches(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => {
            (x - y).abs() <= RELATIVE_TOLERANCE * x.abs().max(y.abs())
        }
        _ => false,
    }
}

fn multiset_match(pred: &[String], gold: &[String]) -> bool {
    if pred.len() != gold.len() {
        return false;
    }
    let mut used = vec![false; gold.len()];
    pred.iter().all(|p| {
        let hit = (0..gold.len())
            .find(|&i| !used[i] && gold[i] == *p)
            .or_else(|| (0..gold.len()).find(|&i| !used[i] && part_matches(p, &gold[i])));
        hit.map(|i| used[i] = true).is_some()
    })
}

/// True when `prediction` matches any of `golds` after normalization.
/// `|`-separated answers are compared as multisets.
pub fn exact_match(prediction: &str, golds: &[String]) -> bool {
    let pred = parts(prediction);
    if pred.iter().all(|p| p.is_empty()) {
        return false;
    }
    golds.iter().any(|g| multiset_match(&pred, &parts(g)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Small,
    Medium,
    Large,
    Xl,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [Bucket::Small, Bucket::Medium, Bucket::Large, Bucket::Xl];

    pub fn label(self) -> &'static str {
        match self {
            Bucket::Small => "small",
            Bucket::Medium => "medium",
            Bucket::Large => "large",
            Bucket::Xl => "xl",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("bucketing needs at least 4 values, got {0}")]
pub struct TooFewValues(pub usize);

/// Assigns each value to a quartile using nearest-rank boundaries.
/// A value equal to a boundary goes to the lower bucket.
pub fn bucketize(values: &[f64]) -> Result<Vec<Bucket>, TooFewValues> {
    if values.len() < 4 {
        return Err(TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = |p: f64| sorted[((p * sorted.len() as f64).ceil() as usize).max(1) - 1];
    let (q1, q2, q3) = (rank(0.25), rank(0.5), rank(0.75));
    Ok(values
        .iter()
        .map(|&v| {
            if v <= q1 {
                Bucket::Small
            } else if v <= q2 {
                Bucket::Medium
            } else if v <= q3 {
                Bucket::Large
            } else {
                Bucket::Xl
            }
        })
        .collect())
}
