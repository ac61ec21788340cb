use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use super::{
    normalize_label, page_number, re, strip_quote, CodeRecord, Dialect, LineUse, ParseError, ParseReport,
    ParseWarning, Provenance, WarningKind,
};

pub const LIST_DELIMITER: &str = "--- List of All Emerging Codes ---";

fn inline_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r#"^(?:\d+\s*[.)]\s*|[-*•]\s+)?(?P<label>[^"“]+?)\s*:\s*(?P<quote>["“].*["”])\s*(?:[-–—,]?\s*\(?\s*(?P<page>Page\s*:?\s*\d+)\s*\)?)?\s*(?:\[(?:Exact|Normalized|Fuzzy|Failed)\])?\s*$"#,
    )
}

fn inline_unquoted_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r#"^(?:\d+\s*[.)]\s*|[-*•]\s+)?\*\*(?P<label>[^*]+?)\*\*\s*:\s*(?P<quote>.+?)\s*(?:[-–—]\s*\(?(?P<page>Page\s*:?\s*\d+)\)?)?\s*$"#,
    )
}

fn labeled_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)^(?:\d+\s*[.)]\s*)?(?:\*\*)?\s*emerging code\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(?P<label>.+)$")
}

fn supporting_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r"(?i)^[-*•]?\s*(?:\*\*)?\s*supporting (?:sentence|passage|quote|text)s?\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(?P<quote>.+)$",
    )
}

fn page_field_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)^[-*•]\s*\(?\s*(?:\*\*)?page(?:\*\*)?\s*:?\s*(?:page\s*)?\d+\s*\)?\s*$")
}

fn page_header_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)^(?:#{1,6}\s*)?(?:\*\*)?page\s+(?P<n>\d+)\s*(?P<colon>:)?\s*(?:\*\*)?$")
}

fn quote_bullet_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r#"^[-*•]\s*(?P<quote>["“].*["”])\s*(?:[-–—,]?\s*\(?(?P<page>Page\s*:?\s*\d+)\)?)?\s*$"#,
    )
}

fn stacked_label_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r#"^(?:\d+\s*[.)]\s+(?P<a>[^"“]+)|\*\*(?P<b>[^*"“]+)\*\*\s*:?)$"#)
}

fn is_cue(line: &str) -> bool {
    let l = line.trim_matches(|c: char| c == '*' || c == '#' || c.is_whitespace()).to_lowercase();
    l.starts_with("emerging codes with supporting sentences")
        || l.starts_with("all emerging codes with supporting sentences")
        || l == "emerging codes:"
}

fn is_list_delimiter(line: &str) -> bool {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)^-{2,}\s*list of (?:all )?emerging codes\s*-{2,}$").is_match(line)
}

fn bullet_item(line: &str) -> Option<&str> {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"^(?:[-*•]|\d+[.)])\s+(?P<item>.+)$")
        .captures(line)
        .and_then(|c| c.name("item"))
        .map(|m| m.as_str())
}

struct Pending {
    label: String,
    quote: Option<String>,
    page: Option<usize>,
    dialect: Dialect,
    lines: Vec<usize>,
}

struct CodeParser {
    expected_page: usize,
    header_page: Option<usize>,
    records: Vec<CodeRecord>,
    warnings: Vec<ParseWarning>,
    uses: Vec<LineUse>,
    dialects: Vec<Dialect>,
    pending: Option<Pending>,
}

impl CodeParser {
    fn warn(&mut self, line: usize, kind: WarningKind, detail: impl Into<String>) {
        self.warnings.push(ParseWarning {
            line,
            kind,
            detail: detail.into(),
        });
    }

    fn mark(&mut self, line: usize, usage: LineUse) {
        self.uses[line - 1] = usage;
    }

    fn start(&mut self, line: usize, raw_label: &str, dialect: Dialect) -> bool {
        self.flush();
        let (label, truncated) = normalize_label(raw_label);
        if label.is_empty() {
            self.warn(line, WarningKind::EmptyLabel, "code label is empty after normalization");
            self.mark(line, LineUse::Warned);
            return false;
        }
        if truncated {
            self.warn(line, WarningKind::LabelTruncated, format!("label truncated to {} characters", label.chars().count()));
        }
        self.pending = Some(Pending {
            label,
            quote: None,
            page: None,
            dialect,
            lines: vec![line],
        });
        self.mark(line, LineUse::Record);
        true
    }

    fn set_quote(&mut self, line: usize, raw: &str) {
        let quote = strip_quote(raw);
        match self.pending.as_mut() {
            Some(p) if p.quote.is_none() && !quote.is_empty() => {
                p.quote = Some(quote);
                p.lines.push(line);
                self.mark(line, LineUse::Record);
            }
            Some(_) if quote.is_empty() => {
                self.warn(line, WarningKind::MissingQuote, "empty supporting quote");
                self.mark(line, LineUse::Warned);
            }
            Some(_) => {
                self.warn(line, WarningKind::StrayField, "second supporting quote for the same code ignored");
                self.mark(line, LineUse::Warned);
            }
            None => {
                self.warn(line, WarningKind::StrayField, "supporting quote without a preceding code label");
                self.mark(line, LineUse::Warned);
            }
        }
    }

    fn set_page(&mut self, line: usize, text: &str) {
        let n = page_number(text);
        match (self.pending.as_mut(), n) {
            (Some(p), Some(n)) if n >= 1 && p.page.is_none() => {
                p.page = Some(n);
                p.lines.push(line);
                self.mark(line, LineUse::Record);
            }
            (Some(_), Some(0)) => {
                self.warn(line, WarningKind::InvalidPage, "page 0 is not a valid page number");
                self.mark(line, LineUse::Warned);
            }
            (Some(_), _) => {
                self.warn(line, WarningKind::StrayField, "duplicate page field ignored");
                self.mark(line, LineUse::Warned);
            }
            (None, _) => {
                self.warn(line, WarningKind::StrayField, "page field without a preceding code label");
                self.mark(line, LineUse::Warned);
            }
        }
    }

    fn flush(&mut self) {
        let Some(p) = self.pending.take() else { return };
        let first = p.lines[0];
        let last = *p.lines.iter().max().unwrap_or(&first);
        let Some(quote) = p.quote else {
            self.warn(first, WarningKind::MissingQuote, format!("code {:?} has no supporting quote; excluded", p.label));
            for l in p.lines {
                self.mark(l, LineUse::Warned);
            }
            return;
        };
        let page = match p.page {
            Some(n) => n,
            None => {
                let fallback = self.header_page.unwrap_or(self.expected_page);
                self.warn(first, WarningKind::MissingPage, format!("code {:?} has no page; assumed page {fallback}", p.label));
                fallback
            }
        };
        let mut record = CodeRecord::new(p.label, quote, page, Provenance::Llm);
        record.raw_span = Some((first, last));
        self.records.push(record);
        self.dialects.push(p.dialect);
    }

    fn line(&mut self, n: usize, raw: &str) {
        let line = raw.trim();
        if line.is_empty() {
            return;
        }
        if line.starts_with("```") || is_cue(line) {
            self.mark(n, LineUse::Boilerplate);
            return;
        }
        if let Some(c) = page_header_re().captures(line) {
            let page: usize = c["n"].parse().unwrap_or(0);
            let needs_page = self.pending.as_ref().is_some_and(|p| p.page.is_none() && p.quote.is_some());
            if c.name("colon").is_none() && needs_page {
                self.set_page(n, line);
            } else {
                self.flush();
                if page >= 1 {
                    self.header_page = Some(page);
                }
                self.mark(n, LineUse::Boilerplate);
            }
            return;
        }
        if let Some(c) = labeled_re().captures(line) {
            let label = c["label"].to_string();
            self.start(n, &label, Dialect::Labeled);
            return;
        }
        if let Some(c) = supporting_re().captures(line) {
            let q = c["quote"].to_string();
            self.set_quote(n, &q);
            return;
        }
        if page_field_re().is_match(line) {
            self.set_page(n, line);
            return;
        }
        if let Some(c) = quote_bullet_re().captures(line) {
            let q = c["quote"].to_string();
            let page = c.name("page").map(|m| m.as_str().to_string());
            self.set_quote(n, &q);
            if let Some(p) = page {
                if self.pending.as_ref().is_some_and(|x| x.page.is_none()) {
                    if let Some(pn) = page_number(&p).filter(|&v| v >= 1) {
                        self.pending.as_mut().expect("pending").page = Some(pn);
                    }
                }
            }
            return;
        }
        for (regex, _quoted) in [(inline_re(), true), (inline_unquoted_re(), false)] {
            if let Some(c) = regex.captures(line) {
                let label = c["label"].to_string();
                let quote = c["quote"].to_string();
                let page = c.name("page").map(|m| m.as_str().to_string());
                if self.start(n, &label, Dialect::Inline) {
                    self.set_quote(n, &quote);
                    if let Some(p) = page {
                        if let Some(pn) = page_number(&p) {
                            if pn >= 1 {
                                self.pending.as_mut().expect("pending").page = Some(pn);
                            } else {
                                self.warn(n, WarningKind::InvalidPage, "page 0 is not a valid page number");
                            }
                        }
                    }
                }
                return;
            }
        }
        if let Some(c) = stacked_label_re().captures(line) {
            let label = c.name("a").or(c.name("b")).map(|m| m.as_str().to_string()).unwrap_or_default();
            self.start(n, &label, Dialect::Stacked);
            return;
        }
        self.flush();
        self.warn(n, WarningKind::Unrecognized, format!("unrecognized line: {}", truncate(line, 80)));
        self.mark(n, LineUse::Warned);
    }
}

fn truncate(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        format!("{}…", s.chars().take(n).collect::<String>())
    }
}

/// Parses one page's code-extraction reply.
///
/// Codes missing a page fall back to the most recent `Page N:` header, or
/// to `expected_page`; codes missing a quote are dropped. Both cases are
/// warned. An emerging-code list section, if present, is treated as
/// boilerplate here and read separately by [`parse_emerging_code_list`].
pub fn parse_code_block(reply: &str, expected_page: usize) -> Result<ParseReport<CodeRecord>, ParseError> {
    if reply.trim().is_empty() {
        return Err(ParseError::EmptyReply);
    }
    let lines: Vec<&str> = reply.lines().collect();
    let mut p = CodeParser {
        expected_page,
        header_page: None,
        records: Vec::new(),
        warnings: Vec::new(),
        uses: vec![LineUse::Blank; lines.len()],
        dialects: Vec::new(),
        pending: None,
    };
    let mut in_list = false;
    for (i, raw) in lines.iter().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if in_list {
            if line.is_empty() {
                continue;
            }
            if bullet_item(line).is_some() {
                p.mark(n, LineUse::Boilerplate);
            } else {
                p.warn(n, WarningKind::Unrecognized, format!("text after code list: {}", truncate(line, 80)));
                p.mark(n, LineUse::Warned);
            }
            continue;
        }
        if is_list_delimiter(line) {
            p.flush();
            p.mark(n, LineUse::Boilerplate);
            in_list = true;
            continue;
        }
        p.line(n, raw);
    }
    p.flush();
    if p.records.is_empty() {
        return Err(ParseError::NoRecordsFound("codes"));
    }
    let first = p.dialects[0];
    let dialect = if p.dialects.iter().all(|d| *d == first) {
        first
    } else {
        Dialect::Mixed
    };
    Ok(ParseReport {
        records: p.records,
        warnings: p.warnings,
        dialect: Some(dialect),
        line_uses: p.uses,
    })
}

/// Reads the emerging-code list: the bullets after the list delimiter, or
/// the whole reply when it has no delimiter. Labels keep their first
/// spelling; later case-insensitive duplicates are dropped.
pub fn parse_emerging_code_list(reply: &str) -> Result<Vec<String>, ParseError> {
    let body: Vec<&str> = match reply.lines().position(|l| is_list_delimiter(l.trim())) {
        Some(i) => reply.lines().skip(i + 1).collect(),
        None => reply.lines().collect(),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut started = false;
    for raw in body {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match bullet_item(line) {
            Some(item) => {
                started = true;
                let (label, _) = normalize_label(item);
                if !label.is_empty() && seen.insert(label.to_lowercase()) {
                    out.push(label);
                }
            }
            None if started => break,
            None => {}
        }
    }
    if out.is_empty() {
        Err(ParseError::NoRecordsFound("emerging code list"))
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{render_code_line, render_label_list};
    use proptest::prelude::*;

    const MARY: &str = "My name is Mary, a first year Mphil midwifery student at the University of Ghana.";

    #[test]
    fn inline_dialect() {
        let reply = format!("1. **Academic Background of Researcher**: \"{MARY}\" - Page 1");
        let r = parse_code_block(&reply, 1).unwrap();
        assert_eq!(r.dialect, Some(Dialect::Inline));
        assert_eq!(
            r.records,
            vec![CodeRecord::new("Academic Background of Researcher", MARY, 1, Provenance::Llm)]
        );
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn labeled_dialect() {
        let reply = "Emerging Code: **Confidentiality Assurance**\n- Supporting Sentence: \"So this interview is purely for academic purposes, and so whatever you would say would just be within the academic space.\"\n- Page: Page 2\n";
        let r = parse_code_block(reply, 2).unwrap();
        assert_eq!(r.dialect, Some(Dialect::Labeled));
        assert_eq!(r.records[0].label, "Confidentiality Assurance");
        assert_eq!(r.records[0].page, 2);
        assert!(r.records[0].quote.starts_with("So this interview is purely for academic purposes"));
        assert_eq!(r.records[0].raw_span, Some((1, 3)));
    }

    #[test]
    fn stacked_dialect() {
        let reply = "1. Bureaucratic Barriers in Professional Verification\n- \"you know when you are doing this process and you go to the Ghana NMC, you have to pay for verification\"\n- Page 16\n";
        let r = parse_code_block(reply, 16).unwrap();
        assert_eq!(r.dialect, Some(Dialect::Stacked));
        assert_eq!(r.records[0].label, "Bureaucratic Barriers in Professional Verification");
        assert_eq!(r.records[0].page, 16);
    }

    #[test]
    fn missing_page_falls_back_with_warning() {
        let reply = "1. **Influence of Childhood Experience**: \"I had opportunity to see a traditional birth attendant.\"";
        let r = parse_code_block(reply, 3).unwrap();
        assert_eq!(r.records[0].page, 3);
        assert_eq!(r.warnings_of(WarningKind::MissingPage).count(), 1);
    }

    #[test]
    fn header_page_beats_expected_page() {
        let reply = "Page 5:\n1. **A**: \"quote a\"\n";
        let r = parse_code_block(reply, 9).unwrap();
        assert_eq!(r.records[0].page, 5);
    }

    #[test]
    fn missing_quote_excludes_record() {
        let reply = "Emerging Code: **Lonely**\n- Page: Page 4\n\nEmerging Code: **Kept**\n- Supporting Sentence: \"yes\"\n- Page: Page 4";
        let r = parse_code_block(reply, 4).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].label, "Kept");
        assert_eq!(r.warnings_of(WarningKind::MissingQuote).count(), 1);
    }

    #[test]
    fn only_prose_is_no_records() {
        assert_eq!(
            parse_code_block("I could not find any codes here.", 1).unwrap_err(),
            ParseError::NoRecordsFound("codes")
        );
        assert_eq!(parse_code_block("  \n", 1).unwrap_err(), ParseError::EmptyReply);
    }

    #[test]
    fn badges_and_curly_quotes() {
        let reply = "2. **Cold**: “It was so cold.” - Page 9 [Fuzzy]";
        let r = parse_code_block(reply, 9).unwrap();
        assert_eq!(r.records[0].quote, "It was so cold.");
    }

    #[test]
    fn every_line_is_accounted_for() {
        let reply = "Here are the codes:\n\nEmerging Codes with Supporting Sentences and Page Number:\nPage 1:\n1. **A**: \"x\" - Page 1\nstray words\n--- List of All Emerging Codes ---\n- A\n";
        let r = parse_code_block(reply, 1).unwrap();
        assert_eq!(r.count(LineUse::Record), 1);
        assert_eq!(r.count(LineUse::Warned), 2);
        assert_eq!(r.count(LineUse::Boilerplate), 4);
        assert_eq!(r.count(LineUse::Blank), 1);
    }

    #[test]
    fn emerging_list_dedups_case_insensitively() {
        let reply = "1. X\n- \"q\"\n- Page 16\n\n--- List of All Emerging Codes ---\n- Accidental Career Discovery\n- Peer Influence on Migration Decision\n- peer influence on migration decision\n- Initial Climate Shock\n";
        let labels = parse_emerging_code_list(reply).unwrap();
        assert_eq!(
            labels,
            vec!["Accidental Career Discovery", "Peer Influence on Migration Decision", "Initial Climate Shock"]
        );
        assert_eq!(parse_emerging_code_list("- Only").unwrap(), vec!["Only"]);
        assert!(parse_emerging_code_list("no list").is_err());
    }

    fn label_strategy() -> impl Strategy<Value = String> {
        "[A-Z][a-z]{1,8}( [A-Za-z][a-z-]{0,8}){0,4}".prop_map(|s| s.trim_end_matches('-').to_string())
    }

    fn quote_strategy() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z ,.'!?]{0,60}[a-z.]"
    }

    fn render_inline(r: &CodeRecord) -> String {
        render_code_line(1, r, None)
    }
    fn render_labeled(r: &CodeRecord) -> String {
        format!("Emerging Code: **{}**\n- Supporting Sentence: \"{}\"\n- Page: Page {}", r.label, r.quote, r.page)
    }
    fn render_stacked(r: &CodeRecord) -> String {
        format!("1. {}\n- \"{}\"\n- Page {}", r.label, r.quote, r.page)
    }

    proptest! {
        #[test]
        fn dialects_agree(label in label_strategy(), quote in quote_strategy(), page in 1usize..40) {
            let record = CodeRecord::new(label, quote, page, Provenance::Llm);
            let renderers: [fn(&CodeRecord) -> String; 3] = [render_inline, render_labeled, render_stacked];
            for render in renderers {
                let parsed = parse_code_block(&render(&record), 1).unwrap();
                prop_assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
                prop_assert_eq!(&parsed.records, &vec![record.clone()]);
            }
        }

        #[test]
        fn list_parse_is_a_fixpoint(labels in proptest::collection::vec(label_strategy(), 1..12)) {
            let once = parse_emerging_code_list(&render_label_list(&labels)).unwrap();
            let twice = parse_emerging_code_list(&render_label_list(&once)).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn arbitrary_lines_are_accounted(lines in proptest::collection::vec("[ -~]{0,40}", 1..20)) {
            let reply = lines.join("\n");
            if let Ok(r) = parse_code_block(&reply, 1) {
                for (i, l) in reply.lines().enumerate() {
                    if !l.trim().is_empty() {
                        prop_assert_ne!(r.line_uses[i], LineUse::Blank, "line {} unaccounted: {:?}", i + 1, l);
                    }
                }
            }
        }
    }
}
