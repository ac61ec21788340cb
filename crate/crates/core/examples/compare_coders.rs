//! Merges two human codebooks, compares the result with the model's
//! codebook from the replay fixture, and writes the comparison report.
//!
//! ```text
//! cargo run --example compare_coders [-- out-dir]
//! ```

use std::path::{Path, PathBuf};

use anyhow::Result;
use thematica::codebook::{load_human_codebook, match_codes, merge_codebooks, Matcher};
use thematica::config::StudyConfig;
use thematica::corpus::load_corpus;
use thematica::gateway::{Gateway, Transport};
use thematica::pipeline::{compare, run_analysis, RunOptions};
use thematica::prompt::TemplateSet;
use thematica::report::{render_comparison, ReferenceValues};

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::args().nth(1).map(PathBuf::from);

    let cfg = StudyConfig::load(&root.join("sample/config.json"))?;
    let corpus = load_corpus(&root.join("sample/transcript.txt"), cfg.page_size)?;
    let gateway = Gateway::new(cfg.model_config(), Transport::replay(root.join("sample/session.json"))?)?;
    let opts = RunOptions { trace: cfg.trace_config(), ..RunOptions::default() };
    let artifact = run_analysis(&corpus, &cfg.focus()?, &TemplateSet::bundled(), &gateway, &opts)?;

    let a = load_human_codebook(&root.join("human/coder1.csv"), None)?.codebook;
    let b = load_human_codebook(&root.join("human/coder2.csv"), None)?.codebook;
    let matcher = Matcher::load_alias_csv(&root.join("human/aliases.csv"))?;
    let pairs = match_codes(&a, &b, &matcher)?;
    let (merged, count) = merge_codebooks(&a, &b, &pairs, &matcher)?;
    println!(
        "{} + {} - {} = {count} merged codes",
        a.codes.len(),
        b.codes.len(),
        pairs.pairs.len()
    );

    let bundle = compare(&artifact, &merged, &matcher)?;
    let s = &bundle.code_summary;
    println!(
        "human {} vs model {}: difference {}%, similarity {}%",
        s.count_a, s.count_b, s.percentage_difference, s.percentage_similarity
    );
    println!(
        "themes: model {} ({}%), human {} ({}%)",
        bundle.theme_shares.llm_themes,
        bundle.theme_shares.llm_share,
        bundle.theme_shares.human_themes,
        bundle.theme_shares.human_share
    );
    if let Some(k) = bundle.presence_kappa {
        println!("presence kappa {k:.3}");
    }
    for n in &bundle.notes {
        println!("note: {n}");
    }

    let reference = ReferenceValues::load(&root.join("reference_values.json"))?;
    let report = render_comparison(&bundle, Some(&reference));
    for n in &report.inconsistency_notes {
        println!("mismatch: {n}");
    }
    match out {
        Some(dir) => {
            report.write_to(&dir)?;
            println!("wrote {}", dir.display());
        }
        None => println!("\n{}", report.markdown_report),
    }
    Ok(())
}
