//! Builds a replay fixture from hand-written model replies.
//!
//! The reply directory holds `page_01.txt` .. `page_NN.txt`, `themes.txt`
//! and `interpretation.txt`. Each reply is fed back in request order through
//! a recording gateway, so the fixture keys are the real request digests.
//!
//! ```text
//! cargo run --example author_fixture -- fixtures/sample fixtures/sample/session.json
//! ```

use std::collections::VecDeque;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use thematica::config::StudyConfig;
use thematica::corpus::load_corpus;
use thematica::gateway::{ChatBackend, ChatMessage, Gateway, ModelConfig, SendError, Transport};
use thematica::pipeline::{run_analysis, RunOptions};
use thematica::prompt::TemplateSet;

struct Scripted(Mutex<VecDeque<(String, String)>>);

impl ChatBackend for Scripted {
    fn send(&self, _: &ModelConfig, _: &[ChatMessage]) -> Result<String, SendError> {
        match self.0.lock().expect("script").pop_front() {
            Some((name, text)) => {
                eprintln!("  answered with {name}");
                Ok(text)
            }
            None => Err(SendError::Fatal("script exhausted".into())),
        }
    }
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [dir, out] = args.as_slice() else {
        bail!("usage: author_fixture <sample-dir> <fixture.json>");
    };
    let dir = PathBuf::from(dir);
    let cfg = StudyConfig::load(&dir.join("config.json"))?;
    let corpus = load_corpus(&dir.join("transcript.txt"), cfg.page_size)?;

    let mut script = VecDeque::new();
    for page in &corpus.pages {
        let name = format!("page_{:02}.txt", page.number);
        let path = dir.join("replies").join(&name);
        script.push_back((name, fs::read_to_string(&path).with_context(|| path.display().to_string())?));
    }
    for name in ["themes.txt", "interpretation.txt"] {
        let path = dir.join("replies").join(name);
        script.push_back((name.to_string(), fs::read_to_string(&path).with_context(|| path.display().to_string())?));
    }

    let out = PathBuf::from(out);
    if out.exists() {
        fs::remove_file(&out)?;
    }
    let backend = Box::new(Scripted(Mutex::new(script)));
    let gateway = Gateway::new(cfg.model_config(), Transport::record(backend, &out)?)?;
    let opts = RunOptions {
        trace: cfg.trace_config(),
        ..RunOptions::default()
    };
    let artifact = run_analysis(&corpus, &cfg.focus()?, &TemplateSet::bundled(), &gateway, &opts)?;
    let book = artifact.codebook()?;
    println!(
        "wrote {} ({} replies): {} codes, {} themes",
        out.display(),
        gateway.stats().network_calls,
        book.codes.len(),
        book.themes.len()
    );
    Ok(())
}
