//! Parses model replies in each supported layout and shows what was kept,
//! skipped or warned about.
//!
//! ```text
//! cargo run --example parse_replies [-- reply.txt PAGE]
//! ```

use anyhow::Result;
use thematica::parse::{parse_code_block, parse_emerging_code_list, parse_theme_block, LineUse};

const STACKED: &str = "Here are the codes for this page:\n\n\
1. Influence of Family\n   - \"My aunt was a nurse.\"\n   - Page 4\n\
2. Early Interest in Banking\n   - \"At first I wanted to be a banker.\"\n   - Page 4\n";

const LABELED: &str = "Emerging Code: **Passion for Care**\n\
- Supporting Sentence: \"I wanted to care for people.\"\n- Page: 4\n\n\
Emerging Code: **Missing Page**\n- Supporting Sentence: \"No page was given here.\"\n";

fn show(name: &str, reply: &str, page: usize) -> Result<()> {
    let report = parse_code_block(reply, page)?;
    println!("== {name}: dialect {:?}", report.dialect);
    for c in &report.records {
        println!("  {} | {:?} | page {}", c.label, c.quote, c.page);
    }
    println!(
        "  lines: {} records, {} boilerplate, {} blank, {} warned",
        report.count(LineUse::Record),
        report.count(LineUse::Boilerplate),
        report.count(LineUse::Blank),
        report.count(LineUse::Warned)
    );
    for w in &report.warnings {
        println!("  warning line {} ({:?}): {}", w.line, w.kind, w.detail);
    }
    Ok(())
}

fn main() -> Result<()> {
    let replies = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample/replies");
    let mut args = std::env::args().skip(1);
    if let Some(path) = args.next() {
        let page = args.next().map(|p| p.parse()).transpose()?.unwrap_or(1);
        return show(&path, &std::fs::read_to_string(&path)?, page);
    }

    show("inline", &std::fs::read_to_string(replies.join("page_01.txt"))?, 1)?;
    show("stacked", STACKED, 4)?;
    show("labeled", LABELED, 4)?;

    let themes_reply = std::fs::read_to_string(replies.join("themes.txt"))?;
    let emerging = parse_emerging_code_list(&std::fs::read_to_string(replies.join("page_16.txt"))?);
    match emerging {
        Ok(list) => println!("== emerging list: {} labels", list.len()),
        Err(e) => println!("== emerging list: {e}"),
    }
    let themes = parse_theme_block(&themes_reply)?;
    println!("== themes: dialect {:?}", themes.dialect);
    for t in &themes.records {
        println!("  {} ({} codes)", t.name, t.member_labels.len());
    }
    Ok(())
}
