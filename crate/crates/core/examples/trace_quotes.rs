//! Checks quotes against the transcript page they cite and prints the
//! match level of each.
//!
//! ```text
//! cargo run --example trace_quotes
//! ```

use std::path::Path;

use anyhow::Result;
use thematica::corpus::load_corpus;
use thematica::parse::{CodeRecord, Provenance};
use thematica::trace::{verify_records, TraceConfig};

fn main() -> Result<()> {
    let sample = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample");
    let corpus = load_corpus(&sample.join("transcript.txt"), 10)?;
    let page1 = corpus.page_text(1)?;
    let verbatim: String = page1.split('\n').next().unwrap_or_default().chars().take(80).collect();

    let records = vec![
        CodeRecord::new("verbatim", verbatim.clone(), 1, Provenance::Llm),
        CodeRecord::new("case and spacing", format!("  {}  ", verbatim.to_uppercase()), 1, Provenance::Llm),
        CodeRecord::new("one word changed", verbatim.replacen("a", "the", 1), 1, Provenance::Llm),
        CodeRecord::new("wrong page", verbatim.clone(), 2, Provenance::Llm),
        CodeRecord::new("invented", "Nothing like this was ever said in the interview.", 1, Provenance::Llm),
    ];

    for threshold in [0.85, 0.98] {
        let report = verify_records(&records, &corpus, &TraceConfig { fuzzy_threshold: threshold });
        println!("fuzzy threshold {threshold}");
        for r in &report.results {
            println!("  {:<18} {:<10} score {:.3} span {:?}", r.label, r.level.to_string(), r.score, r.matched_span);
            for n in &r.notes {
                println!("    note: {n}");
            }
        }
        let c = report.counts;
        println!(
            "  exact {} normalized {} fuzzy {} failed {}",
            c.exact, c.normalized, c.fuzzy, c.failed
        );
    }
    Ok(())
}
