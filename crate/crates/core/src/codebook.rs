//! Coder codebooks, cross-coder code matching and merging.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parse::{parse_theme_notes, CodeRecord, Provenance, ThemeRecord};

pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("coder id is empty")]
    EmptyCoderId,
    #[error("codebook {0} has no codes")]
    EmptyCodebook(String),
    #[error("label {label:?} appears more than once in codebook {coder_id}")]
    DuplicateLabel { coder_id: String, label: String },
    #[error("{path}: {detail}")]
    Schema { path: String, detail: String },
    #[error("alias map chains {from:?} -> {via:?} -> {to:?}; map every label directly to its canonical label")]
    AliasChain { from: String, via: String, to: String },
    #[error("jaccard threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("match result does not fit the codebooks: {0}")]
    InconsistentMatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodebookKind {
    #[serde(rename = "human")]
    Human,
    #[serde(rename = "llm")]
    Llm,
    #[serde(rename = "human-merged")]
    HumanMerged,
}

impl fmt::Display for CodebookKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodebookKind::Human => "human",
            CodebookKind::Llm => "llm",
            CodebookKind::HumanMerged => "human-merged",
        })
    }
}

/// Counts recorded when two codebooks are merged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeInfo {
    pub coder_a: String,
    pub coder_b: String,
    pub codes_a: usize,
    pub codes_b: usize,
    pub similar_codes: usize,
    pub merged_codes: usize,
    pub themes_a: usize,
    pub themes_b: usize,
    pub similar_themes: usize,
    pub merged_themes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub coder_id: String,
    pub provenance: CodebookKind,
    pub codes: Vec<CodeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emerging_labels: Option<Vec<String>>,
    #[serde(default)]
    pub themes: Vec<ThemeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_info: Option<MergeInfo>,
}

/// Case-folds, turns punctuation into spaces and collapses whitespace.
pub fn normalize_key(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl Codebook {
    /// Builds a codebook, rejecting labels that collide after
    /// [`normalize_key`].
    pub fn new(
        coder_id: impl Into<String>,
        provenance: CodebookKind,
        codes: Vec<CodeRecord>,
        themes: Vec<ThemeRecord>,
    ) -> Result<Self, CodebookError> {
        let coder_id = coder_id.into();
        if coder_id.trim().is_empty() {
            return Err(CodebookError::EmptyCoderId);
        }
        let mut seen = HashSet::new();
        for c in &codes {
            if !seen.insert(normalize_key(&c.label)) {
                return Err(CodebookError::DuplicateLabel {
                    coder_id,
                    label: c.label.clone(),
                });
            }
        }
        Ok(Codebook {
            coder_id,
            provenance,
            codes,
            emerging_labels: None,
            themes,
            merge_info: None,
        })
    }

    /// Builds the model's codebook. Repeated labels keep their first
    /// occurrence; each dropped repeat is reported.
    pub fn from_llm(codes: Vec<CodeRecord>, themes: Vec<ThemeRecord>) -> (Self, Vec<String>) {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut notes = Vec::new();
        for c in codes {
            if seen.insert(normalize_key(&c.label)) {
                kept.push(c);
            } else {
                notes.push(format!("repeated code {:?} on page {} dropped", c.label, c.page));
            }
        }
        let book = Codebook {
            coder_id: "llm".into(),
            provenance: CodebookKind::Llm,
            codes: kept,
            emerging_labels: None,
            themes,
            merge_info: None,
        };
        (book, notes)
    }

    pub fn labels(&self) -> Vec<String> {
        self.codes.iter().map(|c| c.label.clone()).collect()
    }

    pub fn theme_names(&self) -> Vec<String> {
        self.themes.iter().map(|t| t.name.clone()).collect()
    }

    pub fn find(&self, label: &str) -> Option<&CodeRecord> {
        let key = normalize_key(label);
        self.codes.iter().find(|c| normalize_key(&c.label) == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    ExactNormalized,
    AliasMap,
    /// Word-set Jaccard similarity. An automated stand-in for a reviewer's
    /// judgement, not a reproduction of it.
    TokenOverlap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matcher {
    pub mode: MatchMode,
    /// Normalized `from` label to canonical label.
    aliases: BTreeMap<String, String>,
    pub jaccard_threshold: f64,
}

impl Matcher {
    pub fn exact() -> Self {
        Matcher {
            mode: MatchMode::ExactNormalized,
            aliases: BTreeMap::new(),
            jaccard_threshold: DEFAULT_JACCARD_THRESHOLD,
        }
    }

    pub fn token_overlap(threshold: f64) -> Result<Self, CodebookError> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(CodebookError::InvalidThreshold(threshold));
        }
        Ok(Matcher {
            mode: MatchMode::TokenOverlap,
            aliases: BTreeMap::new(),
            jaccard_threshold: threshold,
        })
    }

    /// Alias matcher over `(from_label, to_label)` pairs. A target that is
    /// itself remapped to something else is rejected.
    pub fn alias_map<I, S>(pairs: I) -> Result<Self, CodebookError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut aliases = BTreeMap::new();
        for (from, to) in pairs {
            let (from, to) = (from.into(), to.into());
            aliases.insert(normalize_key(&from), to);
        }
        for (from, to) in &aliases {
            let to_key = normalize_key(to);
            if &to_key == from {
                continue;
            }
            if let Some(next) = aliases.get(&to_key) {
                if normalize_key(next) != to_key {
                    return Err(CodebookError::AliasChain {
                        from: from.clone(),
                        via: to.clone(),
                        to: next.clone(),
                    });
                }
            }
        }
        Ok(Matcher {
            mode: MatchMode::AliasMap,
            aliases,
            jaccard_threshold: DEFAULT_JACCARD_THRESHOLD,
        })
    }

    /// Reads an alias CSV with `from_label,to_label` columns.
    pub fn load_alias_csv(path: &Path) -> Result<Self, CodebookError> {
        let schema = |detail: String| CodebookError::Schema {
            path: path.display().to_string(),
            detail,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| schema(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| schema(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| schema(format!("missing column {name}")))
        };
        let (fi, ti) = (col("from_label")?, col("to_label")?);
        let mut pairs = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| schema(e.to_string()))?;
            let (f, t) = (row.get(fi).unwrap_or(""), row.get(ti).unwrap_or(""));
            if f.is_empty() || t.is_empty() {
                continue;
            }
            pairs.push((f.to_string(), t.to_string()));
        }
        Self::alias_map(pairs)
    }

    pub fn alias_count(&self) -> usize {
        self.aliases.len()
    }

    fn canonical_key(&self, label: &str) -> String {
        let key = normalize_key(label);
        match self.aliases.get(&key) {
            Some(to) => normalize_key(to),
            None => key,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<(String, String)>,
    pub outliers_a: Vec<String>,
    pub outliers_b: Vec<String>,
}

fn tokens(label: &str) -> HashSet<String> {
    normalize_key(label).split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

pub fn jaccard(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// One-to-one matching of two label lists. Pairs keep A's order.
pub fn match_labels(a: &[String], b: &[String], matcher: &Matcher) -> MatchResult {
    let mut taken_a = vec![false; a.len()];
    let mut taken_b = vec![false; b.len()];
    let mut pairs_idx: Vec<(usize, usize)> = Vec::new();
    match matcher.mode {
        MatchMode::ExactNormalized | MatchMode::AliasMap => {
            let mut by_key: HashMap<String, Vec<usize>> = HashMap::new();
            for (j, l) in b.iter().enumerate() {
                by_key.entry(matcher.canonical_key(l)).or_default().push(j);
            }
            for (i, l) in a.iter().enumerate() {
                if let Some(cands) = by_key.get(&matcher.canonical_key(l)) {
                    if let Some(&j) = cands.iter().find(|&&j| !taken_b[j]) {
                        taken_a[i] = true;
                        taken_b[j] = true;
                        pairs_idx.push((i, j));
                    }
                }
            }
        }
        MatchMode::TokenOverlap => {
            let mut cands = Vec::new();
            for (i, la) in a.iter().enumerate() {
                for (j, lb) in b.iter().enumerate() {
                    let s = jaccard(la, lb);
                    if s >= matcher.jaccard_threshold {
                        cands.push((s, i, j));
                    }
                }
            }
            cands.sort_by(|x, y| {
                y.0.partial_cmp(&x.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a[x.1].cmp(&a[y.1]))
                    .then_with(|| b[x.2].cmp(&b[y.2]))
            });
            for (_, i, j) in cands {
                if !taken_a[i] && !taken_b[j] {
                    taken_a[i] = true;
                    taken_b[j] = true;
                    pairs_idx.push((i, j));
                }
            }
            pairs_idx.sort_unstable();
        }
    }
    MatchResult {
        pairs: pairs_idx.iter().map(|&(i, j)| (a[i].clone(), b[j].clone())).collect(),
        outliers_a: a.iter().zip(&taken_a).filter(|(_, t)| !**t).map(|(l, _)| l.clone()).collect(),
        outliers_b: b.iter().zip(&taken_b).filter(|(_, t)| !**t).map(|(l, _)| l.clone()).collect(),
    }
}

pub fn match_codes(a: &Codebook, b: &Codebook, matcher: &Matcher) -> Result<MatchResult, CodebookError> {
    for book in [a, b] {
        if book.codes.is_empty() {
            return Err(CodebookError::EmptyCodebook(book.coder_id.clone()));
        }
    }
    Ok(match_labels(&a.labels(), &b.labels(), matcher))
}

fn check_partition(kind: &str, a: &[String], b: &[String], m: &MatchResult) -> Result<(), CodebookError> {
    let side = |labels: &[String], paired: Vec<&String>, outliers: &[String], name: &str| {
        let mut used: Vec<&String> = paired;
        used.extend(outliers.iter());
        let mut used: Vec<&str> = used.into_iter().map(String::as_str).collect();
        let mut all: Vec<&str> = labels.iter().map(String::as_str).collect();
        used.sort_unstable();
        all.sort_unstable();
        if used != all {
            Err(CodebookError::InconsistentMatch(format!(
                "{kind} pairs and outliers do not partition codebook {name}"
            )))
        } else {
            Ok(())
        }
    };
    side(a, m.pairs.iter().map(|p| &p.0).collect(), &m.outliers_a, "A")?;
    side(b, m.pairs.iter().map(|p| &p.1).collect(), &m.outliers_b, "B")
}

/// Merges two coders' codebooks. Each matched pair keeps A's record with
/// B's label added as an alias; unmatched codes of both coders follow.
/// Themes are matched by name with `theme_matcher` and merged the same
/// way, with member lists united. Returns the merged codebook and its
/// code count, which always equals `|A| + |B| - |pairs|`.
pub fn merge_codebooks(
    a: &Codebook,
    b: &Codebook,
    codes: &MatchResult,
    theme_matcher: &Matcher,
) -> Result<(Codebook, usize), CodebookError> {
    check_partition("code", &a.labels(), &b.labels(), codes)?;
    let partner: HashMap<&str, &str> = codes.pairs.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    let mut merged: Vec<CodeRecord> = Vec::with_capacity(a.codes.len() + codes.outliers_b.len());
    for c in &a.codes {
        let mut rec = c.clone();
        if let Some(&bl) = partner.get(c.label.as_str()) {
            if bl != c.label && !rec.aliases.iter().any(|x| x == bl) {
                rec.aliases.push(bl.to_string());
            }
        }
        merged.push(rec);
    }
    let outliers_b: HashSet<&str> = codes.outliers_b.iter().map(String::as_str).collect();
    merged.extend(b.codes.iter().filter(|c| outliers_b.contains(c.label.as_str())).cloned());

    let themes = match_labels(&a.theme_names(), &b.theme_names(), theme_matcher);
    let theme_partner: HashMap<&str, &str> = themes.pairs.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    let mut merged_themes = Vec::new();
    for t in &a.themes {
        let mut t = t.clone();
        if let Some(&bn) = theme_partner.get(t.name.as_str()) {
            if let Some(bt) = b.themes.iter().find(|x| x.name == bn) {
                for m in &bt.member_labels {
                    if !t.member_labels.iter().any(|x| normalize_key(x) == normalize_key(m)) {
                        t.member_labels.push(m.clone());
                    }
                }
            }
        }
        merged_themes.push(t);
    }
    let theme_out_b: HashSet<&str> = themes.outliers_b.iter().map(String::as_str).collect();
    merged_themes.extend(b.themes.iter().filter(|t| theme_out_b.contains(t.name.as_str())).cloned());

    let count = merged.len();
    debug_assert_eq!(count, a.codes.len() + b.codes.len() - codes.pairs.len());
    let info = MergeInfo {
        coder_a: a.coder_id.clone(),
        coder_b: b.coder_id.clone(),
        codes_a: a.codes.len(),
        codes_b: b.codes.len(),
        similar_codes: codes.pairs.len(),
        merged_codes: count,
        themes_a: a.themes.len(),
        themes_b: b.themes.len(),
        similar_themes: themes.pairs.len(),
        merged_themes: merged_themes.len(),
    };
    let book = Codebook {
        coder_id: format!("{}+{}", a.coder_id, b.coder_id),
        provenance: CodebookKind::HumanMerged,
        codes: merged,
        emerging_labels: None,
        themes: merged_themes,
        merge_info: Some(info),
    };
    Ok((book, count))
}

#[derive(Debug, Clone)]
pub struct LoadedCodebook {
    pub codebook: Codebook,
    pub warnings: Vec<String>,
}

const HUMAN_COLUMNS: [&str; 5] = ["coder_id", "theme", "code_label", "supporting_quote", "page"];

/// Loads a human codebook CSV (`coder_id,theme,code_label,supporting_quote,page`)
/// and, when given, a notes file of `Theme: <name>` sections whose prose
/// becomes each theme's interpretation. Human codes without a page carry
/// page 0.
pub fn load_human_codebook(path: &Path, interpretations: Option<&Path>) -> Result<LoadedCodebook, CodebookError> {
    let shown = path.display().to_string();
    let schema = |detail: String| CodebookError::Schema {
        path: shown.clone(),
        detail,
    };
    if !path.exists() {
        return Err(CodebookError::Io {
            path: shown.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| schema(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| schema(e.to_string()))?.clone();
    let missing: Vec<&str> = HUMAN_COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(schema(format!("missing column(s): {}", missing.join(", "))));
    }
    let idx = |name: &str| headers.iter().position(|h| h == name).expect("checked above");
    let (ci, ti, li, qi, pi) = (idx("coder_id"), idx("theme"), idx("code_label"), idx("supporting_quote"), idx("page"));

    let mut warnings = Vec::new();
    let mut coder_id: Option<String> = None;
    let mut codes = Vec::new();
    let mut themes: Vec<ThemeRecord> = Vec::new();
    for (row_no, row) in rdr.records().enumerate() {
        let line = row_no + 2;
        let row = row.map_err(|e| schema(e.to_string()))?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let (cid, theme, label, quote, page) = (get(ci), get(ti), get(li), get(qi), get(pi));
        if cid.is_empty() {
            return Err(schema(format!("row {line}: empty coder_id")));
        }
        match &coder_id {
            None => coder_id = Some(cid.clone()),
            Some(id) if *id != cid => {
                return Err(schema(format!("row {line}: coder_id {cid:?} differs from {id:?}")));
            }
            _ => {}
        }
        if label.is_empty() {
            warnings.push(format!("row {line}: empty code_label; row skipped"));
            continue;
        }
        if quote.is_empty() {
            warnings.push(format!("row {line}: code {label:?} has no supporting quote"));
        }
        let page = if page.is_empty() {
            0
        } else {
            page.trim_start_matches("Page ")
                .parse::<usize>()
                .map_err(|_| schema(format!("row {line}: page {page:?} is not a number")))?
        };
        codes.push(CodeRecord::new(label.clone(), quote, page, Provenance::Human(cid.clone())));
        if !theme.is_empty() {
            match themes.iter_mut().find(|t| t.name == theme) {
                Some(t) => t.member_labels.push(label),
                None => themes.push(ThemeRecord::new(theme, vec![label], "")),
            }
        }
    }
    let coder_id = coder_id.ok_or_else(|| schema("no rows".into()))?;
    if let Some(notes_path) = interpretations {
        let text = fs::read_to_string(notes_path).map_err(|e| CodebookError::Io {
            path: notes_path.display().to_string(),
            source: e,
        })?;
        for note in parse_theme_notes(&text) {
            let key = normalize_key(&note.theme);
            match themes.iter_mut().find(|t| normalize_key(&t.name) == key) {
                Some(t) => t.interpretation = Some(note.text),
                None => warnings.push(format!("interpretation for unknown theme {:?}", note.theme)),
            }
        }
    }
    let codebook = Codebook::new(coder_id, CodebookKind::Human, codes, themes)?;
    Ok(LoadedCodebook { codebook, warnings })
}
