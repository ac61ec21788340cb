use std::sync::OnceLock;

use regex::Regex;

use super::{normalize_label, re, Dialect, LineUse, ParseError, ParseReport, ParseWarning, ThemeRecord, WarningKind};
use crate::codebook::normalize_key;

fn heading_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r"(?i)^(?:#{1,6}\s*|\*{1,3}\s*)?(?:\*\*)?\s*theme\s+(?P<n>\d+)\s*[:.\-–—]\s*(?P<name>.+?)\s*$",
    )
}

fn field_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r"(?i)^[-*•]?\s*(?:\*\*)?\s*(?P<field>description|interpretation)\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(?P<text>.*)$",
    )
}

fn member_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"^(?:[-*•]|\d+[.)])\s+(?P<item>.+)$")
}

fn is_cue(line: &str) -> bool {
    let l = line.trim_matches(|c: char| c == '*' || c == '#' || c.is_whitespace()).to_lowercase();
    matches!(
        l.as_str(),
        "generated themes:" | "themes:" | "interpretation of themes:" | "interpretations:"
    )
}

fn member_label(item: &str) -> String {
    static BOLD: OnceLock<Regex> = OnceLock::new();
    let bold = re(&BOLD, r"^\*\*(?P<l>[^*]+)\*\*");
    let raw = match bold.captures(item.trim()) {
        Some(c) => c["l"].to_string(),
        None => item.to_string(),
    };
    normalize_label(&raw).0
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    None,
    Description,
    Interpretation,
}

struct Building {
    theme: ThemeRecord,
    line: usize,
    field: Field,
}

/// Parses a theme-generation reply: `### Theme K: Name` headers, member
/// bullets and `**Description**:` paragraphs. Text before the first header
/// is ignored with a single preamble warning.
pub fn parse_theme_block(reply: &str) -> Result<ParseReport<ThemeRecord>, ParseError> {
    if reply.trim().is_empty() {
        return Err(ParseError::EmptyReply);
    }
    let lines: Vec<&str> = reply.lines().collect();
    let mut uses = vec![LineUse::Blank; lines.len()];
    let mut warnings = Vec::new();
    let mut records = Vec::new();
    let mut current: Option<Building> = None;
    let mut preamble: Vec<usize> = Vec::new();

    let finish = |b: Building, records: &mut Vec<ThemeRecord>, warnings: &mut Vec<ParseWarning>| {
        if b.theme.member_labels.is_empty() {
            warnings.push(ParseWarning {
                line: b.line,
                kind: WarningKind::EmptyMembers,
                detail: format!("theme {:?} lists no member codes", b.theme.name),
            });
        }
        records.push(b.theme);
    };

    for (i, raw) in lines.iter().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("```") || is_cue(line) {
            uses[i] = LineUse::Boilerplate;
            continue;
        }
        if let Some(c) = heading_re().captures(line) {
            if let Some(b) = current.take() {
                finish(b, &mut records, &mut warnings);
            }
            let name = normalize_label(&c["name"]).0;
            current = Some(Building {
                theme: ThemeRecord::new(name, Vec::new(), ""),
                line: n,
                field: Field::None,
            });
            uses[i] = LineUse::Record;
            continue;
        }
        let Some(b) = current.as_mut() else {
            preamble.push(n);
            uses[i] = LineUse::Warned;
            continue;
        };
        if let Some(c) = field_re().captures(line) {
            let text = c["text"].trim().to_string();
            if c["field"].eq_ignore_ascii_case("description") {
                b.field = Field::Description;
                b.theme.description = text;
            } else {
                b.field = Field::Interpretation;
                b.theme.interpretation = Some(text);
            }
            uses[i] = LineUse::Record;
            continue;
        }
        if b.field == Field::None {
            if let Some(c) = member_re().captures(line) {
                let label = member_label(&c["item"]);
                if label.is_empty() {
                    warnings.push(ParseWarning {
                        line: n,
                        kind: WarningKind::EmptyLabel,
                        detail: "member bullet has no label".into(),
                    });
                    uses[i] = LineUse::Warned;
                } else {
                    b.theme.member_labels.push(label);
                    uses[i] = LineUse::Record;
                }
                continue;
            }
            warnings.push(ParseWarning {
                line: n,
                kind: WarningKind::Unrecognized,
                detail: format!("unrecognized line in theme {:?}", b.theme.name),
            });
            uses[i] = LineUse::Warned;
            continue;
        }
        // continuation of a description or interpretation paragraph
        let target = match b.field {
            Field::Description => &mut b.theme.description,
            _ => b.theme.interpretation.get_or_insert_with(String::new),
        };
        if !target.is_empty() {
            target.push(' ');
        }
        target.push_str(line);
        uses[i] = LineUse::Record;
    }
    if let Some(b) = current.take() {
        finish(b, &mut records, &mut warnings);
    }
    if let Some(&first) = preamble.first() {
        warnings.insert(
            0,
            ParseWarning {
                line: first,
                kind: WarningKind::Preamble,
                detail: format!("{} line(s) before the first theme header ignored", preamble.len()),
            },
        );
    }
    if records.is_empty() {
        return Err(ParseError::NoRecordsFound("themes"));
    }
    Ok(ParseReport {
        records,
        warnings,
        dialect: Some(Dialect::ThemeMarkdown),
        line_uses: uses,
    })
}

/// Attaches interpretation sections (`Theme K: Name` headings, with or
/// without `###`/`***` decoration) to `themes`. Sections are matched by
/// number, then by name; unmatched sections and themes left without an
/// interpretation are warned.
pub fn parse_interpretation_block(reply: &str, themes: &[ThemeRecord]) -> Result<ParseReport<ThemeRecord>, ParseError> {
    if reply.trim().is_empty() {
        return Err(ParseError::EmptyReply);
    }
    let lines: Vec<&str> = reply.lines().collect();
    let mut uses = vec![LineUse::Blank; lines.len()];
    let mut warnings = Vec::new();
    let mut sections: Vec<(usize, usize, String, Vec<&str>)> = Vec::new();
    let mut preamble = Vec::new();

    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            if let Some(s) = sections.last_mut() {
                s.3.push("");
            }
            continue;
        }
        if let Some(c) = heading_re().captures(line) {
            let number: usize = c["n"].parse().unwrap_or(0);
            sections.push((i + 1, number, normalize_label(&c["name"]).0, Vec::new()));
            uses[i] = LineUse::Record;
            continue;
        }
        match sections.last_mut() {
            Some(s) => {
                s.3.push(line);
                uses[i] = LineUse::Record;
            }
            None if is_cue(line) || line.starts_with("```") => uses[i] = LineUse::Boilerplate,
            None => {
                preamble.push(i + 1);
                uses[i] = LineUse::Warned;
            }
        }
    }
    if sections.is_empty() {
        return Err(ParseError::NoRecordsFound("interpretation sections"));
    }
    if let Some(&first) = preamble.first() {
        warnings.push(ParseWarning {
            line: first,
            kind: WarningKind::Preamble,
            detail: format!("{} line(s) before the first theme heading ignored", preamble.len()),
        });
    }

    let mut out: Vec<ThemeRecord> = themes.to_vec();
    let mut filled = vec![false; out.len()];
    for (line, number, name, body) in sections {
        let text = paragraphs(&body);
        let by_number = (number >= 1 && number <= out.len() && !filled[number - 1]).then(|| number - 1);
        let key = normalize_key(&name);
        let target = by_number.or_else(|| {
            out.iter()
                .enumerate()
                .position(|(k, t)| !filled[k] && normalize_key(&t.name) == key)
        });
        match target {
            Some(k) => {
                out[k].interpretation = Some(text);
                filled[k] = true;
            }
            None => warnings.push(ParseWarning {
                line,
                kind: WarningKind::UnmatchedSection,
                detail: format!("interpretation for theme {number} {name:?} matches no theme"),
            }),
        }
    }
    for (k, t) in out.iter().enumerate() {
        if !filled[k] {
            warnings.push(ParseWarning {
                line: 0,
                kind: WarningKind::MissingInterpretation,
                detail: format!("theme {} {:?} has no interpretation", k + 1, t.name),
            });
        }
    }
    Ok(ParseReport {
        records: out,
        warnings,
        dialect: Some(Dialect::ThemeSections),
        line_uses: uses,
    })
}

/// Joins body lines into paragraphs separated by a blank line.
fn paragraphs(body: &[&str]) -> String {
    body.split(|l| l.is_empty())
        .filter(|p| !p.is_empty())
        .map(|p| p.join(" "))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// A `Theme: <name>` section from a coder's notes file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThemeNote {
    pub theme: String,
    pub text: String,
}

/// Parses a plain-text notes file of `Theme: <name>` sections, each
/// followed by free prose.
pub fn parse_theme_notes(text: &str) -> Vec<ThemeNote> {
    static R: OnceLock<Regex> = OnceLock::new();
    let head = re(&R, r"(?i)^\s*theme\s*:\s*(?P<name>.+?)\s*$");
    let mut notes: Vec<(String, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        if let Some(c) = head.captures(line) {
            notes.push((normalize_label(&c["name"]).0, Vec::new()));
        } else if let Some(n) = notes.last_mut() {
            n.1.push(line.trim());
        }
    }
    notes
        .into_iter()
        .map(|(theme, body)| ThemeNote {
            theme,
            text: paragraphs(&body),
        })
        .collect()
}
