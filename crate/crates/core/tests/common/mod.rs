#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thematica::config::StudyConfig;
use thematica::corpus::{load_corpus, Corpus};
use thematica::gateway::{
    request_digest, ChatBackend, ChatMessage, Gateway, ModelConfig, ResponseStore, SendError, Transport,
};
use thematica::pipeline::{run_analysis, AnalysisArtifact, PipelineError, RunOptions};
use thematica::prompt::TemplateSet;

pub fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample")
}

pub fn human_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/human")
}

pub fn fixture_path() -> PathBuf {
    sample_dir().join("session.json")
}

pub fn sample_config() -> StudyConfig {
    StudyConfig::load(&sample_dir().join("config.json")).unwrap()
}

pub fn sample_corpus() -> Corpus {
    load_corpus(&sample_dir().join("transcript.txt"), sample_config().page_size).unwrap()
}

pub fn replay_gateway() -> Gateway {
    Gateway::new(sample_config().model_config(), Transport::replay(fixture_path()).unwrap()).unwrap()
}

pub fn options(artifact: Option<PathBuf>) -> RunOptions {
    RunOptions {
        artifact_path: artifact,
        trace: sample_config().trace_config(),
        ..RunOptions::default()
    }
}

pub fn run_with(gateway: &Gateway, opts: &RunOptions) -> Result<AnalysisArtifact, PipelineError> {
    let cfg = sample_config();
    run_analysis(&sample_corpus(), &cfg.focus().unwrap(), &TemplateSet::bundled(), gateway, opts)
}

/// Serves replies from the bundled fixture and logs every digest it is
/// asked for. With `limit`, requests beyond that count fail.
pub struct LoggingReplay {
    pub store: ResponseStore,
    pub seen: Arc<Mutex<Vec<String>>>,
    pub limit: Option<usize>,
}

impl LoggingReplay {
    pub fn new(limit: Option<usize>) -> Self {
        LoggingReplay {
            store: ResponseStore::open_existing(&fixture_path()).unwrap(),
            seen: Arc::new(Mutex::new(Vec::new())),
            limit,
        }
    }
}

impl ChatBackend for LoggingReplay {
    fn send(&self, config: &ModelConfig, messages: &[ChatMessage]) -> Result<String, SendError> {
        let digest = request_digest(config, messages);
        let mut seen = self.seen.lock().unwrap();
        if self.limit.is_some_and(|l| seen.len() >= l) {
            return Err(SendError::Fatal("simulated interruption".into()));
        }
        seen.push(digest.clone());
        self.store
            .get(&digest)
            .ok_or_else(|| SendError::Fatal(format!("no fixture entry for {digest}")))
    }
}
