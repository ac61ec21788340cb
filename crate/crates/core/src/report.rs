//! Markdown and CSV outputs: the traceable code listing, theme documents,
//! comparison tables and stage coverage.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::agreement::Percent;
use crate::codebook::Codebook;
use crate::parse::{render_code_line, render_label_list, render_theme_block, CodeRecord};
use crate::pipeline::{AnalysisArtifact, ComparisonBundle, SixStepCoverage};
use crate::trace::{TraceLevel, TraceResult, TraceabilityReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("codebook {0:?} has no codes to list")]
    EmptyCodebook(String),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{path}: not a valid reference file: {detail}")]
    Reference { path: String, detail: String },
}

/// A rendered report: one markdown document plus CSV exports keyed by file
/// name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportBundle {
    pub markdown_report: String,
    pub csv_exports: BTreeMap<String, String>,
    /// Values that disagree with a supplied reference, or counts that
    /// contradict their own percentages.
    pub inconsistency_notes: Vec<String>,
}

impl ReportBundle {
    /// Appends `other` below this report.
    pub fn append(&mut self, other: ReportBundle) {
        if !self.markdown_report.is_empty() && !other.markdown_report.is_empty() {
            self.markdown_report.push('\n');
        }
        self.markdown_report.push_str(&other.markdown_report);
        self.csv_exports.extend(other.csv_exports);
        self.inconsistency_notes.extend(other.inconsistency_notes);
    }

    /// Writes `report.md` and every CSV export into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ReportError> {
        let io = |p: &Path, e: std::io::Error| ReportError::Io {
            path: p.display().to_string(),
            detail: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let md = dir.join("report.md");
        fs::write(&md, &self.markdown_report).map_err(|e| io(&md, e))?;
        for (name, text) in &self.csv_exports {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}

/// Expected values keyed by table and metric, e.g.
/// `{"table1": {"merged_codes": 106}}`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct ReferenceValues(pub BTreeMap<String, BTreeMap<String, f64>>);

impl ReferenceValues {
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(|e| ReportError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ReportError::Reference {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn get(&self, table: &str, metric: &str) -> Option<f64> {
        self.0.get(table).and_then(|t| t.get(metric)).copied()
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

fn trace_for<'a>(codes: &[CodeRecord], trace: &'a TraceabilityReport) -> Vec<Option<&'a TraceResult>> {
    let aligned = trace.results.len() == codes.len()
        && trace.results.iter().zip(codes).all(|(r, c)| r.label == c.label && r.page == c.page);
    codes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if aligned {
                Some(&trace.results[i])
            } else {
                trace.results.iter().find(|r| r.label == c.label && r.page == c.page)
            }
        })
        .collect()
}

/// Codes grouped by page with a trace badge on each entry, followed by an
/// appendix of the quotes that could not be located.
pub fn render_code_listing(book: &Codebook, trace: Option<&TraceabilityReport>) -> Result<String, ReportError> {
    if book.codes.is_empty() {
        return Err(ReportError::EmptyCodebook(book.coder_id.clone()));
    }
    let levels: Vec<Option<&TraceResult>> = match trace {
        Some(t) => trace_for(&book.codes, t),
        None => vec![None; book.codes.len()],
    };
    let mut pages: Vec<usize> = book.codes.iter().map(|c| c.page).collect();
    pages.sort_unstable();
    pages.dedup();
    let mut blocks = Vec::new();
    for p in pages {
        let mut block = format!("Page {p}:");
        let on_page = book.codes.iter().zip(&levels).filter(|(c, _)| c.page == p);
        for (i, (c, t)) in on_page.enumerate() {
            let badge = t.map(|t| t.level.to_string());
            block.push('\n');
            block.push_str(&render_code_line(i + 1, c, badge.as_deref()));
        }
        blocks.push(block);
    }
    let mut out = blocks.join("\n\n");
    let failed: Vec<&TraceResult> = levels.iter().flatten().filter(|t| t.level == TraceLevel::Failed).copied().collect();
    if !failed.is_empty() {
        out.push_str("\n\n#### Quotes not found\n");
        for t in failed {
            let why = if t.notes.is_empty() { "not located".to_string() } else { t.notes.join("; ") };
            let _ = write!(out, "\n- **{}** (page {}): {}", t.label, t.page, why);
        }
    }
    Ok(out)
}

/// Inverse of the listing's entry lines: drops the trailing trace badge.
pub fn strip_badge(line: &str) -> &str {
    let t = line.trim_end();
    for level in [TraceLevel::Exact, TraceLevel::Normalized, TraceLevel::Fuzzy, TraceLevel::Failed] {
        if let Some(rest) = t.strip_suffix(&format!(" [{level}]")) {
            return rest;
        }
    }
    t
}

/// `label,quote,page,trace_level,provenance`.
pub fn codes_csv(book: &Codebook, trace: Option<&TraceabilityReport>) -> String {
    let levels = match trace {
        Some(t) => trace_for(&book.codes, t),
        None => vec![None; book.codes.len()],
    };
    csv_text(
        &["label", "quote", "page", "trace_level", "provenance"],
        book.codes.iter().zip(levels).map(|(c, t)| {
            vec![
                c.label.clone(),
                c.quote.clone(),
                c.page.to_string(),
                t.map(|t| t.level.to_string()).unwrap_or_default(),
                c.provenance.to_string(),
            ]
        }),
    )
}

/// Themes with their member codes, descriptions and interpretations.
pub fn render_themes(book: &Codebook) -> String {
    if book.themes.is_empty() {
        return "No themes.".to_string();
    }
    book.themes
        .iter()
        .enumerate()
        .map(|(i, t)| render_theme_block(i + 1, t))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One six-row table per coder.
pub fn render_coverage(coverage: &[SixStepCoverage]) -> (String, String) {
    let mut md = String::new();
    let mut rows = Vec::new();
    for (i, c) in coverage.iter().enumerate() {
        if i > 0 {
            md.push('\n');
        }
        let _ = writeln!(md, "#### {} ({} of {} stages)\n", c.coder, c.covered_count(), c.stages.len());
        md.push_str("| Stage | Covered by |\n|---|---|\n");
        for s in &c.stages {
            let by = s.covered_by.clone().unwrap_or_else(|| "not covered".to_string());
            let _ = writeln!(md, "| {}. {} | {} |", s.stage.number(), s.stage, cell(&by));
            rows.push(vec![
                c.coder.clone(),
                s.stage.number().to_string(),
                s.stage.to_string(),
                s.covered_by.clone().unwrap_or_default(),
            ]);
        }
    }
    (md, csv_text(&["coder", "stage_number", "stage", "covered_by"], rows))
}

/// The report for a single analysis run.
pub fn render_analysis(artifact: &AnalysisArtifact, coverage: Option<&SixStepCoverage>) -> Result<ReportBundle, ReportError> {
    let book = artifact
        .llm_codebook
        .as_ref()
        .ok_or_else(|| ReportError::EmptyCodebook("llm".into()))?;
    let trace = artifact.trace_report.as_ref();
    let mut md = String::new();
    let mut csv = BTreeMap::new();
    let _ = writeln!(md, "# Analysis of {}\n", artifact.corpus.source);
    let _ = writeln!(
        md,
        "{} pages of up to {} paragraphs; model {} at temperature {}.\n",
        artifact.corpus.page_count,
        artifact.corpus.page_size,
        artifact.config.model.model_id,
        artifact.config.model.temperature
    );
    if !artifact.is_complete() {
        md.push_str("**This analysis is incomplete.**\n\n");
    }

    if let Some(t) = trace {
        md.push_str("## Traceability\n\n| Level | Codes |\n|---|---|\n");
        let mut rows = Vec::new();
        for level in [TraceLevel::Exact, TraceLevel::Normalized, TraceLevel::Fuzzy, TraceLevel::Failed] {
            let n = t.counts.get(level);
            let _ = writeln!(md, "| {level} | {n} |");
            rows.push(vec![level.to_string(), n.to_string()]);
        }
        md.push('\n');
        csv.insert("trace.csv".to_string(), csv_text(&["level", "codes"], rows));
    }

    let _ = writeln!(md, "## Codes ({})\n", book.codes.len());
    if book.codes.is_empty() {
        md.push_str("No codes.\n\n");
    } else {
        md.push_str(&render_code_listing(book, trace)?);
        md.push_str("\n\n");
    }
    csv.insert("codes.csv".to_string(), codes_csv(book, trace));

    if let Some(e) = &artifact.emerging {
        let _ = writeln!(md, "## Emerging codes ({})\n", e.labels.len());
        md.push_str(&render_label_list(&e.labels));
        md.push_str("\n\n");
    }

    let _ = writeln!(md, "## Themes ({})\n", book.themes.len());
    md.push_str(&render_themes(book));
    md.push('\n');

    if let Some(c) = coverage {
        let (cov_md, cov_csv) = render_coverage(std::slice::from_ref(c));
        md.push_str("\n## Stage coverage\n\n");
        md.push_str(&cov_md);
        csv.insert("coverage.csv".to_string(), cov_csv);
    }

    if !artifact.warnings.is_empty() {
        let _ = writeln!(md, "\n## Parser warnings ({})\n", artifact.warnings.len());
        for w in &artifact.warnings {
            let page = w.page.map(|p| format!(" page {p}")).unwrap_or_default();
            let _ = writeln!(md, "- {:?}{page}, line {}: {}", w.step, w.line, w.detail);
        }
    }
    Ok(ReportBundle {
        markdown_report: md,
        csv_exports: csv,
        inconsistency_notes: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy)]
enum Value {
    Count(i64),
    Pct(Percent),
}

impl Value {
    fn shown(&self) -> String {
        match self {
            Value::Count(n) => n.to_string(),
            Value::Pct(p) => p.to_string(),
        }
    }

    fn exact(&self) -> String {
        match self {
            Value::Count(n) => n.to_string(),
            Value::Pct(p) => format!("{:.10}", p.value()),
        }
    }

    fn matches(&self, expected: f64) -> bool {
        match self {
            Value::Count(n) => (*n as f64 - expected).abs() < 1e-9,
            Value::Pct(p) => p.hundredths() == (expected * 100.0).round() as i64,
        }
    }
}

struct Metric {
    table: &'static str,
    key: &'static str,
    value: Value,
    footnotes: Vec<usize>,
}

/// Collects the metrics of all tables so the markdown and `summary.csv`
/// are written from the same numbers.
struct Tables {
    metrics: Vec<Metric>,
    footnotes: Vec<String>,
}

impl Tables {
    fn add(&mut self, table: &'static str, key: &'static str, value: Value) {
        self.metrics.push(Metric {
            table,
            key,
            value,
            footnotes: Vec::new(),
        });
    }

    fn get(&self, table: &str, key: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.table == table && m.key == key)
    }

    fn note(&mut self, table: &str, key: &str, text: String) {
        self.footnotes.push(text);
        let n = self.footnotes.len();
        if let Some(m) = self.metrics.iter_mut().find(|m| m.table == table && m.key == key) {
            m.footnotes.push(n);
        }
    }

    fn shown(&self, table: &str, key: &str) -> String {
        match self.get(table, key) {
            Some(m) => {
                let marks: String = m.footnotes.iter().map(|n| format!("[^{n}]")).collect();
                format!("{}{marks}", m.value.shown())
            }
            None => String::new(),
        }
    }

    fn pct(&self, table: &str, key: &str) -> String {
        let s = self.shown(table, key);
        if s.is_empty() {
            s
        } else {
            match s.find('[') {
                Some(i) => format!("{}%{}", &s[..i], &s[i..]),
                None => format!("{s}%"),
            }
        }
    }
}

/// Comparison tables (code counts by human coder, theme overlap, code
/// agreement, presence matrix, theme shares). When `reference` is given,
/// every computed value that differs from it gets a footnote.
pub fn render_comparison(bundle: &ComparisonBundle, reference: Option<&ReferenceValues>) -> ReportBundle {
    let mut t = Tables {
        metrics: Vec::new(),
        footnotes: Vec::new(),
    };
    if let Some(m) = &bundle.merge {
        t.add("table1", "coder_a_codes", Value::Count(m.codes_a as i64));
        t.add("table1", "coder_b_codes", Value::Count(m.codes_b as i64));
        t.add("table1", "similar_codes", Value::Count(m.similar_codes as i64));
        t.add("table1", "merged_codes", Value::Count(m.merged_codes as i64));
    }
    let similar_themes = bundle.merge.as_ref().map(|m| m.similar_themes);
    for (i, row) in bundle.theme_overlap.iter().enumerate() {
        let (themes, percent) = if i == 0 {
            ("coder_a_themes", "coder_a_percent")
        } else {
            ("coder_b_themes", "coder_b_percent")
        };
        t.add("table2", themes, Value::Count(row.themes as i64));
        t.add("table2", percent, Value::Pct(row.percent));
    }
    if let Some(s) = similar_themes.filter(|_| !bundle.theme_overlap.is_empty()) {
        t.add("table2", "similar_themes", Value::Count(s as i64));
    }
    let s = &bundle.code_summary;
    let share = |part: u64| Percent::of(part as i64, s.total_combined as i64);
    t.add("table4", "human_codes", Value::Count(s.count_a as i64));
    t.add("table4", "human_share", Value::Pct(share(s.count_a)));
    t.add("table4", "llm_codes", Value::Count(s.count_b as i64));
    t.add("table4", "llm_share", Value::Pct(share(s.count_b)));
    t.add("table4", "difference_count", Value::Count(s.difference_count));
    t.add("table4", "percentage_difference", Value::Pct(s.percentage_difference));
    t.add("table4", "similarity_count", Value::Count(s.similarity_count));
    t.add("table4", "percentage_similarity", Value::Pct(s.percentage_similarity));
    t.add("table4", "total", Value::Count(s.total_combined as i64));
    let th = &bundle.theme_shares;
    t.add("table6", "emerging_labels", Value::Count(th.emerging_labels as i64));
    if let Some(p) = th.emerging_parity {
        t.add("table6", "emerging_parity", Value::Pct(p));
    }
    t.add("table6", "llm_themes", Value::Count(th.llm_themes as i64));
    t.add("table6", "llm_share", Value::Pct(th.llm_share));
    t.add("table6", "human_themes", Value::Count(th.human_themes as i64));
    t.add("table6", "human_share", Value::Pct(th.human_share));

    if let Some(reference) = reference {
        for (table, metrics) in &reference.0 {
            for (key, &expected) in metrics {
                let Some(m) = t.get(table, key) else {
                    t.footnotes.push(format!("Reference value {table}.{key} = {expected} has no computed counterpart."));
                    continue;
                };
                if m.value.matches(expected) {
                    continue;
                }
                let computed = m.value.shown();
                let (table, key) = (m.table, m.key);
                let mut text = format!("Computed {computed}; the reference gives {expected}.");
                if (table, key) == ("table1", "merged_codes") {
                    if let Some(mi) = &bundle.merge {
                        text = format!(
                            "Computed as {} + {} - {} = {computed} (codes of both coders, agreed codes counted once); the reference gives {expected}, which does not follow from that rule.",
                            mi.codes_a, mi.codes_b, mi.similar_codes
                        );
                    }
                }
                t.note(table, key, text);
            }
        }
    }
    if !s.similarity_count_consistent {
        t.note(
            "table4",
            "similarity_count",
            format!(
                "The count {} is the total minus the difference ({} - {}). As a share of the total it is {}%, not the {}% similarity, which is taken relative to the human count.",
                s.similarity_count,
                s.total_combined,
                s.difference_count,
                Percent::of(s.similarity_count, s.total_combined as i64),
                s.percentage_similarity
            ),
        );
    }

    let mut md = String::from("# Comparison with human coding\n\n");
    let _ = writeln!(md, "Human codebook: {}. Model codebook: {}.\n", bundle.human_coder, bundle.llm_coder);
    if let Some(m) = &bundle.merge {
        md.push_str("## Code counts by human coder\n\n| Coder | Number of codes |\n|---|---|\n");
        let _ = writeln!(md, "| {} | {} |", cell(&m.coder_a), t.shown("table1", "coder_a_codes"));
        let _ = writeln!(md, "| {} | {} |", cell(&m.coder_b), t.shown("table1", "coder_b_codes"));
        let _ = writeln!(md, "| Similar codes | {} |", t.shown("table1", "similar_codes"));
        let _ = writeln!(md, "| Merged codes | {} |\n", t.shown("table1", "merged_codes"));
    }
    if !bundle.theme_overlap.is_empty() {
        md.push_str("## Theme overlap between human coders\n\n| Coder | Themes | Overlap |\n|---|---|---|\n");
        for (i, row) in bundle.theme_overlap.iter().enumerate() {
            let (k, p) = if i == 0 {
                ("coder_a_themes", "coder_a_percent")
            } else {
                ("coder_b_themes", "coder_b_percent")
            };
            let _ = writeln!(md, "| {} | {} | {} |", cell(&row.coder), t.shown("table2", k), t.pct("table2", p));
        }
        let _ = writeln!(md, "| Similar themes | {} | |\n", t.shown("table2", "similar_themes"));
    }

    md.push_str("## Code counts, human and model\n\n| Measure | Count | Percentage |\n|---|---|---|\n");
    let _ = writeln!(md, "| Human codes | {} | {} |", t.shown("table4", "human_codes"), t.pct("table4", "human_share"));
    let _ = writeln!(md, "| Model codes | {} | {} |", t.shown("table4", "llm_codes"), t.pct("table4", "llm_share"));
    let direction = if s.negative_difference() { "more" } else { "fewer" };
    let _ = writeln!(
        md,
        "| Percentage difference | {} | {} {direction} |",
        t.shown("table4", "difference_count"),
        t.pct("table4", "percentage_difference")
    );
    let _ = writeln!(
        md,
        "| Percentage similarity | {} | {} |",
        t.shown("table4", "similarity_count"),
        t.pct("table4", "percentage_similarity")
    );
    let _ = writeln!(md, "| Total | {} | 100.00% |\n", t.shown("table4", "total"));

    md.push_str("## Code presence\n\n");
    let p = &bundle.presence;
    let _ = writeln!(
        md,
        "{} codes in the union; {} coded by both. 1 means coded, 0 means not coded.\n",
        p.rows.len(),
        p.shared_rows()
    );
    let _ = writeln!(md, "| Code | {} |", p.coders.iter().map(|c| cell(c)).collect::<Vec<_>>().join(" | "));
    let _ = writeln!(md, "|---|{}", "---|".repeat(p.coders.len()));
    for r in &p.rows {
        let cells: Vec<String> = r.cells.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(md, "| {} | {} |", cell(&r.label), cells.join(" | "));
    }
    if let Some(k) = bundle.presence_kappa {
        let _ = writeln!(md, "\nCohen's kappa over the presence columns: {k:.4}.");
    }
    md.push('\n');

    md.push_str("## Themes, human and model\n\n| Themes | Count | Share |\n|---|---|---|\n");
    let _ = writeln!(
        md,
        "| Emerging-code list as themes | {} | {} |",
        t.shown("table6", "emerging_labels"),
        t.pct("table6", "emerging_parity")
    );
    let _ = writeln!(md, "| Model themes | {} | {} |", t.shown("table6", "llm_themes"), t.pct("table6", "llm_share"));
    let _ = writeln!(
        md,
        "| Human themes (agreed) | {} | {} |",
        t.shown("table6", "human_themes"),
        t.pct("table6", "human_share")
    );

    if !bundle.notes.is_empty() {
        md.push_str("\n## Notes\n\n");
        for n in &bundle.notes {
            let _ = writeln!(md, "- {n}");
        }
    }
    if !t.footnotes.is_empty() {
        md.push('\n');
        for (i, f) in t.footnotes.iter().enumerate() {
            let _ = writeln!(md, "[^{}]: {f}", i + 1);
        }
    }

    let summary = csv_text(
        &["table", "metric", "value", "exact"],
        t.metrics
            .iter()
            .map(|m| vec![m.table.to_string(), m.key.to_string(), m.value.shown(), m.value.exact()]),
    );
    let mut header = vec!["code".to_string()];
    header.extend(p.coders.iter().cloned());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let matrix = csv_text(
        &header_refs,
        p.rows.iter().map(|r| {
            let mut row = vec![r.label.clone()];
            row.extend(r.cells.iter().map(|c| c.to_string()));
            row
        }),
    );
    let mut csv_exports = BTreeMap::new();
    csv_exports.insert("summary.csv".to_string(), summary);
    csv_exports.insert("matrix.csv".to_string(), matrix);
    ReportBundle {
        markdown_report: md,
        csv_exports,
        inconsistency_notes: t.footnotes,
    }
}
