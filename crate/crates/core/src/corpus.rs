//! Transcript loading and paging.
//!
//! A transcript is read into trimmed, non-empty [`Paragraph`]s and then cut
//! into fixed-size [`Page`]s. The page is the unit the extraction prompt sees,
//! and the unit every quote is traced back to.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_PAGE_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("could not read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("could not decode {path}: {detail}")]
    Decode { path: PathBuf, detail: String },
    #[error("{0} contains no non-empty paragraphs")]
    EmptyDocument(PathBuf),
    #[error("page size must be at least 1, got {0}")]
    InvalidPageSize(usize),
    #[error("page {number} is out of range (corpus has {count} pages)")]
    PageOutOfRange { number: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentFormat {
    PlainText,
    OoxmlDocx,
}

impl DocumentFormat {
    /// Picks a format from the file extension; anything that is not `.docx`
    /// is read as plain text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("docx") => DocumentFormat::OoxmlDocx,
            _ => DocumentFormat::PlainText,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub number: usize,
    pub paragraphs: Vec<Paragraph>,
    pub text: String,
}

impl Page {
    fn new(number: usize, paragraphs: Vec<Paragraph>) -> Self {
        let text = paragraphs
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        Page {
            number,
            paragraphs,
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub source_path: String,
    pub page_size: usize,
    pub pages: Vec<Page>,
}

impl Corpus {
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn page(&self, number: usize) -> Result<&Page, CorpusError> {
        if number == 0 || number > self.pages.len() {
            return Err(CorpusError::PageOutOfRange {
                number,
                count: self.pages.len(),
            });
        }
        Ok(&self.pages[number - 1])
    }

    pub fn page_text(&self, number: usize) -> Result<&str, CorpusError> {
        self.page(number).map(|p| p.text.as_str())
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.pages.iter().flat_map(|p| p.paragraphs.iter())
    }

    /// Lowercase hex SHA-256 over the page size and every page's text.
    ///
    /// Two corpora with the same fingerprint present byte-identical pages to
    /// the extraction prompt.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("page_size={}\n", self.page_size));
        for page in &self.pages {
            hasher.update(format!("page={}\n", page.number));
            hasher.update(page.text.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

/// Reads `path` as the given format and returns its trimmed, non-empty
/// paragraphs in document order.
pub fn load_document(path: &Path, format: DocumentFormat) -> Result<Vec<Paragraph>, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::FileNotFound(path.to_path_buf()));
    }
    let raw = match format {
        DocumentFormat::PlainText => {
            let bytes = read_bytes(path)?;
            let text = String::from_utf8(bytes).map_err(|e| CorpusError::Decode {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
            split_plain_text(&text)
        }
        DocumentFormat::OoxmlDocx => {
            let bytes = read_bytes(path)?;
            docx_paragraphs(&bytes).map_err(|detail| CorpusError::Decode {
                path: path.to_path_buf(),
                detail,
            })?
        }
    };
    let paragraphs = number_paragraphs(raw);
    if paragraphs.is_empty() {
        return Err(CorpusError::EmptyDocument(path.to_path_buf()));
    }
    Ok(paragraphs)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CorpusError> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}

/// Paragraphs are separated by one or more blank (whitespace-only) lines.
/// Lines inside a paragraph keep their line breaks.
pub fn split_plain_text(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

fn docx_paragraphs(bytes: &[u8]) -> Result<Vec<String>, String> {
    use docx_rs::{DocumentChild, ParagraphChild, RunChild};

    let docx = docx_rs::read_docx(bytes).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for child in docx.document.children {
        // Body-level paragraphs only; tables, headers and comments are skipped.
        if let DocumentChild::Paragraph(paragraph) = child {
            let mut text = String::new();
            for pc in &paragraph.children {
                let runs: Vec<&docx_rs::Run> = match pc {
                    ParagraphChild::Run(run) => vec![run.as_ref()],
                    ParagraphChild::Hyperlink(link) => link
                        .children
                        .iter()
                        .filter_map(|c| match c {
                            ParagraphChild::Run(run) => Some(run.as_ref()),
                            _ => None,
                        })
                        .collect(),
                    _ => Vec::new(),
                };
                for run in runs {
                    for rc in &run.children {
                        match rc {
                            RunChild::Text(t) => text.push_str(&t.text),
                            RunChild::Tab(_) => text.push('\t'),
                            RunChild::Break(_) => text.push('\n'),
                            _ => {}
                        }
                    }
                }
            }
            out.push(text);
        }
    }
    Ok(out)
}

pub fn number_paragraphs(raw: Vec<String>) -> Vec<Paragraph> {
    raw.into_iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(index, text)| Paragraph { index, text })
        .collect()
}

/// Cuts `paragraphs` into pages of `page_size`; the last page holds the
/// remainder.
pub fn paginate(
    source_path: impl Into<String>,
    paragraphs: Vec<Paragraph>,
    page_size: usize,
) -> Result<Corpus, CorpusError> {
    if page_size == 0 {
        return Err(CorpusError::InvalidPageSize(page_size));
    }
    let mut pages = Vec::with_capacity(paragraphs.len().div_ceil(page_size));
    let mut iter = paragraphs.into_iter().peekable();
    while iter.peek().is_some() {
        let chunk: Vec<Paragraph> = iter.by_ref().take(page_size).collect();
        pages.push(Page::new(pages.len() + 1, chunk));
    }
    Ok(Corpus {
        source_path: source_path.into(),
        page_size,
        pages,
    })
}

/// Convenience wrapper: detect format, load, paginate.
pub fn load_corpus(path: &Path, page_size: usize) -> Result<Corpus, CorpusError> {
    let paragraphs = load_document(path, DocumentFormat::from_path(path))?;
    paginate(path.display().to_string(), paragraphs, page_size)
}
