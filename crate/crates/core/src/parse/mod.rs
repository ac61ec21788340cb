//! Tolerant parsing of free-text model replies into typed records.
//!
//! Parsers never fail on a single bad line. Anything they cannot place is
//! reported as a [`ParseWarning`], and every input line ends up with a
//! [`LineUse`] so callers can check that nothing was silently dropped.

mod codes;
mod themes;

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codes::{parse_code_block, parse_emerging_code_list, LIST_DELIMITER};
pub use themes::{parse_interpretation_block, parse_theme_block, parse_theme_notes, ThemeNote};

pub const MAX_LABEL_CHARS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("reply is empty")]
    EmptyReply,
    #[error("no recognizable {0} found in reply")]
    NoRecordsFound(&'static str),
}

/// Who produced a code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Provenance {
    Llm,
    Human(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Llm => f.write_str("llm"),
            Provenance::Human(id) => write!(f, "human:{id}"),
        }
    }
}

impl From<Provenance> for String {
    fn from(p: Provenance) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Provenance {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        if s == "llm" {
            return Ok(Provenance::Llm);
        }
        match s.strip_prefix("human:") {
            Some(id) if !id.is_empty() => Ok(Provenance::Human(id.to_string())),
            _ => Err(format!("unknown provenance {s:?}")),
        }
    }
}

/// A code with its supporting quote and the page it claims to come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodeRecord {
    pub label: String,
    pub quote: String,
    pub page: usize,
    pub provenance: Provenance,
    /// 1-based inclusive line range in the reply the record was parsed from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_span: Option<(usize, usize)>,
    /// Labels of equivalent codes folded into this one by a merge.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl PartialEq for CodeRecord {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label
            && self.quote == other.quote
            && self.page == other.page
            && self.provenance == other.provenance
            && self.aliases == other.aliases
    }
}

impl Eq for CodeRecord {}

impl CodeRecord {
    pub fn new(label: impl Into<String>, quote: impl Into<String>, page: usize, provenance: Provenance) -> Self {
        CodeRecord {
            label: label.into(),
            quote: quote.into(),
            page,
            provenance,
            raw_span: None,
            aliases: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeRecord {
    pub name: String,
    pub member_labels: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpretation: Option<String>,
}

impl ThemeRecord {
    pub fn new(name: impl Into<String>, member_labels: Vec<String>, description: impl Into<String>) -> Self {
        ThemeRecord {
            name: name.into(),
            member_labels,
            description: description.into(),
            interpretation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    Unrecognized,
    MissingPage,
    InvalidPage,
    MissingQuote,
    EmptyLabel,
    LabelTruncated,
    StrayField,
    Preamble,
    EmptyMembers,
    UnmatchedSection,
    MissingInterpretation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// 1-based line number in the reply; 0 when the warning concerns the
    /// reply as a whole.
    pub line: usize,
    pub kind: WarningKind,
    pub detail: String,
}

/// Reply layout a code block was written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    /// `1. **Label**: "quote" - Page N`
    Inline,
    /// `Emerging Code: **Label**` with `- Supporting Sentence:` / `- Page:` lines
    Labeled,
    /// `N. Label` with `- "quote"` and `- Page N` lines
    Stacked,
    Mixed,
    ThemeMarkdown,
    ThemeSections,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineUse {
    Blank,
    Boilerplate,
    Record,
    Warned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport<T> {
    pub records: Vec<T>,
    pub warnings: Vec<ParseWarning>,
    pub dialect: Option<Dialect>,
    pub line_uses: Vec<LineUse>,
}

impl<T> ParseReport<T> {
    pub fn count(&self, usage: LineUse) -> usize {
        self.line_uses.iter().filter(|u| **u == usage).count()
    }

    pub fn warnings_of(&self, kind: WarningKind) -> impl Iterator<Item = &ParseWarning> {
        self.warnings.iter().filter(move |w| w.kind == kind)
    }
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

fn numbering_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"^(?:\d+\s*[.)]\s*|[-*•]\s+)+")
}

/// Normalizes a code or theme label: strips markdown emphasis, numbering,
/// surrounding quotes and edge punctuation, and collapses whitespace.
/// Interior capitalization is preserved. Returns the label and whether it was
/// truncated to [`MAX_LABEL_CHARS`].
pub fn normalize_label(raw: &str) -> (String, bool) {
    let mut s = raw.replace("**", "").replace("__", "");
    s = numbering_re().replace(s.trim(), "").into_owned();
    let edge = |c: char| {
        c.is_whitespace() || matches!(c, ':' | ';' | ',' | '.' | '-' | '–' | '—' | '*' | '#' | '_' | '•' | '"' | '“' | '”')
    };
    let trimmed = s.trim_matches(edge);
    let collapsed = trimmed.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.chars().count() > MAX_LABEL_CHARS {
        (collapsed.chars().take(MAX_LABEL_CHARS).collect::<String>().trim_end().to_string(), true)
    } else {
        (collapsed, false)
    }
}

/// Strips one outermost pair of straight or curly double quotes.
pub fn strip_quote(raw: &str) -> String {
    let t = raw.trim();
    let mut chars = t.chars();
    if let (Some(first), Some(last)) = (chars.next(), t.chars().last()) {
        if t.chars().count() >= 2 && matches!(first, '"' | '“') && matches!(last, '"' | '”') {
            let inner = &t[first.len_utf8()..t.len() - last.len_utf8()];
            return inner.trim().to_string();
        }
    }
    t.to_string()
}

/// First integer following the word "Page".
pub fn page_number(text: &str) -> Option<usize> {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)\bpage\b\D*?(\d+)")
        .captures(text)
        .and_then(|c| c[1].parse().ok())
}

/// Canonical single-line form of a code, optionally followed by a
/// bracketed trace badge.
pub fn render_code_line(index: usize, record: &CodeRecord, badge: Option<&str>) -> String {
    let mut line = format!("{index}. **{}**: \"{}\" - Page {}", record.label, record.quote, record.page);
    if let Some(b) = badge {
        line.push_str(&format!(" [{b}]"));
    }
    line
}

/// Codes grouped under `Page N:` headers in ascending page order, in the
/// same layout the per-page replies are concatenated in for theme
/// generation.
pub fn render_code_digest(records: &[CodeRecord]) -> String {
    let mut pages: Vec<usize> = records.iter().map(|r| r.page).collect();
    pages.sort_unstable();
    pages.dedup();
    let mut blocks = Vec::new();
    for p in pages {
        let mut block = format!("Page {p}:");
        for (i, r) in records.iter().filter(|r| r.page == p).enumerate() {
            block.push('\n');
            block.push_str(&render_code_line(i + 1, r, None));
        }
        blocks.push(block);
    }
    blocks.join("\n\n")
}

pub fn render_theme_block(number: usize, theme: &ThemeRecord) -> String {
    let mut out = format!("### Theme {number}: {}", theme.name);
    for m in &theme.member_labels {
        out.push_str(&format!("\n- **{m}**"));
    }
    if !theme.description.is_empty() {
        out.push_str(&format!("\n\n**Description**: {}", theme.description));
    }
    if let Some(i) = &theme.interpretation {
        out.push_str(&format!("\n\n**Interpretation**: {i}"));
    }
    out
}

pub fn render_theme_digest(themes: &[ThemeRecord]) -> String {
    themes
        .iter()
        .enumerate()
        .map(|(i, t)| render_theme_block(i + 1, t))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render_label_list(labels: &[String]) -> String {
    let mut out = LIST_DELIMITER.to_string();
    for l in labels {
        out.push_str("\n- ");
        out.push_str(l);
    }
    out
}
