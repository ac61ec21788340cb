//! Checks that each code's supporting quote occurs on the page it cites.
//!
//! A quote is tried at three strictness levels: a literal substring, a
//! match after text normalization, and an approximate alignment scored by
//! edit distance. A quote that fails on its cited page is looked up on the
//! other pages for diagnosis only; it is never moved to another page.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::Codebook;
use crate::corpus::Corpus;
use crate::parse::CodeRecord;

pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.85;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("codebook {0} has no codes to verify")]
    EmptyCodebook(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TraceLevel {
    Exact,
    Normalized,
    Fuzzy,
    Failed,
}

impl fmt::Display for TraceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceLevel::Exact => "Exact",
            TraceLevel::Normalized => "Normalized",
            TraceLevel::Fuzzy => "Fuzzy",
            TraceLevel::Failed => "Failed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub fuzzy_threshold: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub label: String,
    pub page: usize,
    pub level: TraceLevel,
    /// Character range `[start, end)` in the cited page's text.
    pub matched_span: Option<(usize, usize)>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub exact: usize,
    pub normalized: usize,
    pub fuzzy: usize,
    pub failed: usize,
}

impl LevelCounts {
    pub fn get(&self, level: TraceLevel) -> usize {
        match level {
            TraceLevel::Exact => self.exact,
            TraceLevel::Normalized => self.normalized,
            TraceLevel::Fuzzy => self.fuzzy,
            TraceLevel::Failed => self.failed,
        }
    }

    pub fn total(&self) -> usize {
        self.exact + self.normalized + self.fuzzy + self.failed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceabilityReport {
    pub results: Vec<TraceResult>,
    pub counts: LevelCounts,
    /// Indices into `results` of the failed quotes.
    pub failures: Vec<usize>,
}

impl TraceabilityReport {
    pub fn from_results(results: Vec<TraceResult>) -> Self {
        let mut counts = LevelCounts::default();
        let mut failures = Vec::new();
        for (i, r) in results.iter().enumerate() {
            match r.level {
                TraceLevel::Exact => counts.exact += 1,
                TraceLevel::Normalized => counts.normalized += 1,
                TraceLevel::Fuzzy => counts.fuzzy += 1,
                TraceLevel::Failed => {
                    counts.failed += 1;
                    failures.push(i);
                }
            }
        }
        TraceabilityReport {
            results,
            counts,
            failures,
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = &TraceResult> {
        self.failures.iter().map(|&i| &self.results[i])
    }
}

/// Text folded for comparison, with a map from each folded character back
/// to the character index it came from in the original.
struct Folded {
    chars: Vec<char>,
    origin: Vec<usize>,
}

fn fold_char(c: char) -> Option<char> {
    Some(match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '`' | '\u{00B4}' => '\'',
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' => '"',
        '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}' | '\u{2212}' => '-',
        '\u{00A0}' => ' ',
        _ => return None,
    })
}

fn fold(text: &str) -> Folded {
    let mut chars = Vec::with_capacity(text.len());
    let mut origin = Vec::with_capacity(text.len());
    let mut last_space = true;
    for (i, c) in text.chars().enumerate() {
        let c = fold_char(c).unwrap_or(c);
        if c.is_whitespace() {
            if !last_space {
                chars.push(' ');
                origin.push(i);
                last_space = true;
            }
            continue;
        }
        last_space = false;
        if c == '\u{2026}' {
            for _ in 0..3 {
                chars.push('.');
                origin.push(i);
            }
            continue;
        }
        for l in c.to_lowercase() {
            chars.push(l);
            origin.push(i);
        }
    }
    if chars.last() == Some(&' ') {
        chars.pop();
        origin.pop();
    }
    Folded { chars, origin }
}

/// Normalized form used for the `Normalized` level: lowercase, single
/// spaces, unified quotes, apostrophes and dashes.
pub fn normalize_text(text: &str) -> String {
    fold(text).chars.into_iter().collect()
}

fn find_chars(hay: &[char], needle: &[char]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Best semi-global alignment of `pattern` inside `text`: the pattern must
/// be consumed in full, the text match may start and end anywhere.
/// Returns `(edit_distance, start, end)` over `text` indices.
pub fn best_alignment(pattern: &[char], text: &[char]) -> (usize, usize, usize) {
    let m = pattern.len();
    if m == 0 {
        return (0, 0, 0);
    }
    if text.is_empty() {
        return (m, 0, 0);
    }
    // prev[j]: distance aligning pattern[..i] ending at text[..j];
    // start[j]: text index where that alignment begins.
    let n = text.len();
    let mut prev: Vec<usize> = vec![0; n + 1];
    let mut prev_start: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0; n + 1];
    let mut cur_start = vec![0; n + 1];
    for i in 1..=m {
        cur[0] = i;
        cur_start[0] = 0;
        for j in 1..=n {
            let sub = prev[j - 1] + usize::from(pattern[i - 1] != text[j - 1]);
            let del = prev[j] + 1;
            let ins = cur[j - 1] + 1;
            let (d, s) = if sub <= del && sub <= ins {
                (sub, prev_start[j - 1])
            } else if del <= ins {
                (del, prev_start[j])
            } else {
                (ins, cur_start[j - 1])
            };
            cur[j] = d;
            cur_start[j] = s;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut prev_start, &mut cur_start);
    }
    let (mut best, mut end) = (usize::MAX, 0);
    for (j, &d) in prev.iter().enumerate().take(n + 1) {
        if d < best {
            best = d;
            end = j;
        }
    }
    (best, prev_start[end], end)
}

struct Hit {
    level: TraceLevel,
    span: Option<(usize, usize)>,
    score: f64,
}

fn match_on_page(quote: &str, page_text: &str, cfg: &TraceConfig) -> Hit {
    let failed = Hit {
        level: TraceLevel::Failed,
        span: None,
        score: 0.0,
    };
    let q = quote.trim();
    if q.is_empty() {
        return failed;
    }
    if let Some(b) = page_text.find(q) {
        let start = page_text[..b].chars().count();
        return Hit {
            level: TraceLevel::Exact,
            span: Some((start, start + q.chars().count())),
            score: 1.0,
        };
    }
    let fq = fold(q);
    let fp = fold(page_text);
    if fq.chars.is_empty() || fp.chars.is_empty() {
        return failed;
    }
    let span_of = |s: usize, e: usize| (fp.origin[s], fp.origin[e - 1] + 1);
    if let Some(s) = find_chars(&fp.chars, &fq.chars) {
        return Hit {
            level: TraceLevel::Normalized,
            span: Some(span_of(s, s + fq.chars.len())),
            score: 1.0,
        };
    }
    let (d, s, e) = best_alignment(&fq.chars, &fp.chars);
    let similarity = 1.0 - d as f64 / fq.chars.len() as f64;
    if similarity >= cfg.fuzzy_threshold && e > s {
        return Hit {
            level: TraceLevel::Fuzzy,
            span: Some(span_of(s, e)),
            score: similarity,
        };
    }
    failed
}

fn sentences(quote: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes: Vec<(usize, char)> = quote.char_indices().collect();
    for (k, &(i, c)) in bytes.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let next_is_space = bytes.get(k + 1).is_none_or(|&(_, n)| n.is_whitespace());
            if next_is_space {
                let s = quote[start..i + c.len_utf8()].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = i + c.len_utf8();
            }
        }
    }
    let tail = quote[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Verifies one record against the corpus.
pub fn verify_quote(record: &CodeRecord, corpus: &Corpus, cfg: &TraceConfig) -> TraceResult {
    let mut result = TraceResult {
        label: record.label.clone(),
        page: record.page,
        level: TraceLevel::Failed,
        matched_span: None,
        score: 0.0,
        notes: Vec::new(),
    };
    if record.quote.trim().is_empty() {
        result.notes.push("no supporting quote".into());
        return result;
    }
    let cited = corpus.page(record.page).ok();
    match cited {
        Some(page) => {
            let hit = match_on_page(&record.quote, &page.text, cfg);
            if hit.level != TraceLevel::Failed {
                result.level = hit.level;
                result.matched_span = hit.span;
                result.score = hit.score;
                return result;
            }
            let parts = sentences(&record.quote);
            if parts.len() > 1 {
                for (k, s) in parts.iter().enumerate() {
                    let h = match_on_page(s, &page.text, cfg);
                    result.notes.push(format!("sentence {}/{}: {}", k + 1, parts.len(), h.level));
                }
            }
        }
        None => result.notes.push(format!(
            "page {} is outside the corpus (pages 1-{})",
            record.page,
            corpus.page_count()
        )),
    }
    for other in &corpus.pages {
        if other.number == record.page {
            continue;
        }
        let h = match_on_page(&record.quote, &other.text, cfg);
        if h.level != TraceLevel::Failed {
            result.notes.push(format!("found on page {} ({})", other.number, h.level));
        }
    }
    result
}

/// Verifies every code of a codebook, in codebook order.
pub fn verify_codebook(codebook: &Codebook, corpus: &Corpus, cfg: &TraceConfig) -> Result<TraceabilityReport, TraceError> {
    if codebook.codes.is_empty() {
        return Err(TraceError::EmptyCodebook(codebook.coder_id.clone()));
    }
    Ok(verify_records(&codebook.codes, corpus, cfg))
}

pub fn verify_records(records: &[CodeRecord], corpus: &Corpus, cfg: &TraceConfig) -> TraceabilityReport {
    TraceabilityReport::from_results(records.iter().map(|r| verify_quote(r, corpus, cfg)).collect())
}
