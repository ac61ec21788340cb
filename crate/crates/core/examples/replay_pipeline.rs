//! Runs the full analysis offline against the bundled replay fixture and
//! prints what each step produced.
//!
//! ```text
//! cargo run --example replay_pipeline [-- out/analysis.json]
//! ```

use std::path::{Path, PathBuf};

use anyhow::Result;
use thematica::config::StudyConfig;
use thematica::corpus::load_corpus;
use thematica::gateway::{Gateway, Transport};
use thematica::pipeline::{run_analysis, six_step_coverage, RunOptions};
use thematica::prompt::TemplateSet;

fn main() -> Result<()> {
    let sample = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample");
    let cfg = StudyConfig::load(&sample.join("config.json"))?;
    let corpus = load_corpus(&sample.join("transcript.txt"), cfg.page_size)?;
    let gateway = Gateway::new(cfg.model_config(), Transport::replay(sample.join("session.json"))?)?;
    let opts = RunOptions {
        artifact_path: std::env::args().nth(1).map(PathBuf::from),
        trace: cfg.trace_config(),
        ..RunOptions::default()
    };
    let artifact = run_analysis(&corpus, &cfg.focus()?, &TemplateSet::bundled(), &gateway, &opts)?;

    let book = artifact.codebook()?;
    println!("pages: {}", corpus.page_count());
    println!("codes: {}", book.codes.len());
    if let Some(e) = &artifact.emerging {
        println!("emerging labels ({:?}): {}", e.source, e.labels.len());
        for l in &e.labels {
            println!("  - {l}");
        }
    }
    for t in &book.themes {
        println!(
            "theme {:?}: {} codes, interpretation {}",
            t.name,
            t.member_labels.len(),
            if t.interpretation.is_some() { "present" } else { "missing" }
        );
    }
    if let Some(r) = &artifact.trace_report {
        let c = &r.counts;
        println!(
            "trace: exact {} normalized {} fuzzy {} failed {}",
            c.exact, c.normalized, c.fuzzy, c.failed
        );
    }
    println!("warnings: {}", artifact.warnings.len());
    for w in &artifact.warnings {
        println!("  {:?} page {:?} line {}: {:?} {}", w.step, w.page, w.line, w.kind, w.detail);
    }
    let cov = six_step_coverage(&artifact)?;
    println!("stages covered: {}/6", cov.covered_count());
    let s = gateway.stats();
    println!("requests {} replay hits {} network calls {}", s.requests, s.replay_hits, s.network_calls);
    Ok(())
}
