//! Loads a transcript (`.txt` or `.docx`) and prints its pages.
//!
//! ```text
//! cargo run --example paginate_transcript -- interview.docx 10
//! ```

use std::path::PathBuf;

use anyhow::Result;
use thematica::corpus::{load_corpus, DEFAULT_PAGE_SIZE};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample/transcript.txt"));
    let page_size = args.next().map(|s| s.parse()).transpose()?.unwrap_or(DEFAULT_PAGE_SIZE);

    let corpus = load_corpus(&path, page_size)?;
    println!("{}: {} paragraphs, {} pages", path.display(), corpus.paragraphs().count(), corpus.page_count());
    println!("fingerprint {}", corpus.fingerprint());
    for page in &corpus.pages {
        let first = &page.paragraphs[0];
        let last = page.paragraphs.last().unwrap();
        let preview: String = first.text.chars().take(60).collect();
        println!("page {:>2}  paragraphs {:>3}-{:<3} {preview}...", page.number, first.index, last.index);
    }
    Ok(())
}
