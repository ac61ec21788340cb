//! The stepwise analysis: per-page code extraction, consolidation, theme
//! generation, interpretation and quote tracing, persisted to a resumable
//! JSON artifact after every model reply.

mod artifact;
mod compare;
mod coverage;

use std::collections::{HashSet, VecDeque};
use std::path::PathBuf;
use std::sync::{mpsc, Mutex};

use thiserror::Error;

pub use artifact::{
    AnalysisArtifact, AnalysisStep, ArtifactStatus, ConfigSnapshot, CorpusInfo, EmergingInfo, EmergingSource,
    ModelSnapshot, RawReply, StepWarning, Timestamps, SCHEMA_VERSION,
};
pub use compare::{compare, ComparisonBundle, ThemeOverlapRow, ThemeShares};
pub use coverage::{human_coverage, six_step_coverage, ThematicStage, SixStepCoverage, StageCoverage};

use crate::codebook::{normalize_key, Codebook};
use crate::corpus::{Corpus, Page};
use crate::gateway::{Gateway, GatewayError};
use crate::parse::{
    parse_code_block, parse_emerging_code_list, parse_interpretation_block, parse_theme_block, render_code_digest,
    render_theme_digest, ParseError, ParseWarning, LIST_DELIMITER,
};
use crate::prompt::{PromptError, PromptStep, StudyFocus, TemplateSet};
use crate::trace::{verify_codebook, TraceConfig};

pub const MAX_PARALLELISM: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFailure {
    pub step: AnalysisStep,
    pub page: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for StepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.page {
            Some(p) => write!(f, "{:?} page {p}: {}", self.step, self.message),
            None => write!(f, "{:?}: {}", self.step, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus has no pages")]
    EmptyCorpus,
    #[error("parallelism must be between 1 and {MAX_PARALLELISM}, got {0}")]
    InvalidParallelism(usize),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{step:?}{}: {source}", page.map(|p| format!(" page {p}")).unwrap_or_default())]
    Parse {
        step: AnalysisStep,
        page: Option<usize>,
        source: ParseError,
    },
    #[error("{what} fingerprint differs from the existing artifact (artifact {artifact}, current {current}); use a fresh output directory or delete the artifact")]
    ResumeMismatch {
        what: &'static str,
        artifact: String,
        current: String,
    },
    #[error("analysis incomplete ({} failure(s)); first: {}", failures.len(), failures.first().map(|f| f.to_string()).unwrap_or_default())]
    Incomplete {
        artifact: Box<AnalysisArtifact>,
        failures: Vec<StepFailure>,
    },
    #[error("artifact is incomplete: {0}")]
    IncompleteArtifact(&'static str),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error(transparent)]
    Agreement(#[from] crate::agreement::AgreementError),
    #[error(transparent)]
    Codebook(#[from] crate::codebook::CodebookError),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Where the artifact is persisted and resumed from. `None` keeps the
    /// run in memory.
    pub artifact_path: Option<PathBuf>,
    /// Concurrent page requests during code extraction.
    pub parallelism: usize,
    /// Record wall-clock timestamps. Off for replay runs so that artifacts
    /// are byte-identical across runs.
    pub stamp_times: bool,
    pub trace: TraceConfig,
    /// Stop (with a partial artifact) once this step has completed.
    pub stop_after: Option<AnalysisStep>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            artifact_path: None,
            parallelism: 1,
            stamp_times: false,
            trace: TraceConfig::default(),
            stop_after: None,
        }
    }
}

struct Run<'a> {
    artifact: AnalysisArtifact,
    opts: &'a RunOptions,
}

impl Run<'_> {
    fn persist(&mut self) -> Result<(), PipelineError> {
        if self.opts.stamp_times {
            let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
            match self.artifact.timestamps.as_mut() {
                Some(t) => t.updated = now,
                None => {
                    self.artifact.timestamps = Some(Timestamps {
                        created: now.clone(),
                        updated: now,
                    })
                }
            }
        }
        match &self.opts.artifact_path {
            Some(p) => self.artifact.save(p),
            None => Ok(()),
        }
    }

    fn stop_here(&self, step: AnalysisStep) -> bool {
        self.opts.stop_after == Some(step)
    }
}

/// Runs (or resumes) the analysis of `corpus`.
///
/// When `opts.artifact_path` points at an existing artifact, replies already
/// stored there are reused and never requested again; an artifact built from
/// a different corpus or configuration is refused. A failed page request
/// does not stop the other pages: the run ends with
/// [`PipelineError::Incomplete`] carrying the partial artifact, which has
/// also been written to disk.
pub fn run_analysis(
    corpus: &Corpus,
    focus: &StudyFocus,
    templates: &TemplateSet,
    gateway: &Gateway,
    opts: &RunOptions,
) -> Result<AnalysisArtifact, PipelineError> {
    if corpus.pages.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    if opts.parallelism == 0 || opts.parallelism > MAX_PARALLELISM {
        return Err(PipelineError::InvalidParallelism(opts.parallelism));
    }
    let corpus_info = CorpusInfo::of(corpus);
    let config = ConfigSnapshot::new(gateway.config(), focus, templates, &opts.trace);
    let artifact = match &opts.artifact_path {
        Some(p) if p.exists() => {
            let existing = AnalysisArtifact::load(p)?;
            if existing.corpus.fingerprint != corpus_info.fingerprint {
                return Err(PipelineError::ResumeMismatch {
                    what: "corpus",
                    artifact: existing.corpus.fingerprint,
                    current: corpus_info.fingerprint,
                });
            }
            if existing.config.fingerprint != config.fingerprint {
                return Err(PipelineError::ResumeMismatch {
                    what: "config",
                    artifact: existing.config.fingerprint,
                    current: config.fingerprint,
                });
            }
            if existing.is_complete() {
                return Ok(existing);
            }
            log::info!("resuming analysis with {} stored replies", existing.raw_replies.len());
            existing
        }
        _ => AnalysisArtifact::new(corpus_info, config),
    };
    let mut run = Run { artifact, opts };

    extract_pages(&mut run, corpus, focus, templates, gateway)?;
    if run.stop_here(AnalysisStep::CodeExtraction) {
        return Ok(run.artifact);
    }
    consolidate(&mut run)?;
    if run.stop_here(AnalysisStep::Consolidation) {
        return Ok(run.artifact);
    }
    generate_themes(&mut run, focus, templates, gateway)?;
    if run.stop_here(AnalysisStep::ThemeGeneration) {
        return Ok(run.artifact);
    }
    interpret(&mut run, focus, templates, gateway)?;
    if run.stop_here(AnalysisStep::Interpretation) {
        return Ok(run.artifact);
    }

    let book = run.artifact.codebook()?;
    let report = if book.codes.is_empty() {
        crate::trace::TraceabilityReport::from_results(Vec::new())
    } else {
        verify_codebook(book, corpus, &opts.trace).expect("codebook is non-empty")
    };
    run.artifact.trace_report = Some(report);
    run.artifact.mark(AnalysisStep::Traceability);
    run.artifact.status = ArtifactStatus::Complete;
    run.persist()?;
    Ok(run.artifact)
}

fn incomplete(run: &mut Run<'_>, failures: Vec<StepFailure>) -> PipelineError {
    run.artifact.status = ArtifactStatus::Partial;
    if let Err(e) = run.persist() {
        log::error!("could not persist partial artifact: {e}");
    }
    PipelineError::Incomplete {
        artifact: Box::new(run.artifact.clone()),
        failures,
    }
}

fn extract_pages(
    run: &mut Run<'_>,
    corpus: &Corpus,
    focus: &StudyFocus,
    templates: &TemplateSet,
    gateway: &Gateway,
) -> Result<(), PipelineError> {
    if run.artifact.has_step(AnalysisStep::CodeExtraction) {
        return Ok(());
    }
    let todo: Vec<&Page> = corpus
        .pages
        .iter()
        .filter(|p| run.artifact.reply(PromptStep::CodeExtraction, Some(p.number)).is_none())
        .collect();
    let mut prompts = VecDeque::new();
    for page in todo {
        prompts.push_back((page.number, templates.render_code_extraction(page, focus)?));
    }
    let queue = Mutex::new(prompts);
    let workers = run.opts.parallelism.min(queue.lock().expect("queue").len()).max(1);
    let (tx, rx) = mpsc::channel::<(usize, Result<crate::gateway::Completion, GatewayError>)>();
    let mut failures = Vec::new();

    std::thread::scope(|scope| -> Result<(), PipelineError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            scope.spawn(move || loop {
                let Some((number, prompt)) = queue.lock().expect("queue").pop_front() else {
                    break;
                };
                let result = prompt
                    .messages()
                    .and_then(|m| gateway.complete(&m));
                if tx.send((number, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: only this thread touches the artifact.
        for (number, result) in rx {
            match result {
                Ok(c) => {
                    run.artifact.push_reply(RawReply {
                        step: PromptStep::CodeExtraction,
                        page: Some(number),
                        request_digest: c.request_digest,
                        text: c.text,
                    });
                    run.persist()?;
                }
                Err(e) => failures.push(StepFailure {
                    step: AnalysisStep::CodeExtraction,
                    page: Some(number),
                    message: e.to_string(),
                }),
            }
        }
        Ok(())
    })?;

    if !failures.is_empty() {
        failures.sort_by_key(|f| f.page);
        return Err(incomplete(run, failures));
    }
    run.artifact.mark(AnalysisStep::CodeExtraction);
    run.persist()
}

fn push_warnings(run: &mut Run<'_>, step: AnalysisStep, page: Option<usize>, warnings: &[ParseWarning]) {
    run.artifact.warnings.extend(warnings.iter().map(|w| StepWarning {
        step,
        page,
        line: w.line,
        kind: w.kind,
        detail: w.detail.clone(),
    }));
}

fn consolidate(run: &mut Run<'_>) -> Result<(), PipelineError> {
    if run.artifact.has_step(AnalysisStep::Consolidation) {
        return Ok(());
    }
    let replies: Vec<RawReply> = run
        .artifact
        .raw_replies
        .iter()
        .filter(|r| r.step == PromptStep::CodeExtraction)
        .cloned()
        .collect();
    let mut codes = Vec::new();
    let mut model_list: Option<Vec<String>> = None;
    for reply in &replies {
        let page = reply.page.unwrap_or(0);
        match parse_code_block(&reply.text, page) {
            Ok(report) => {
                push_warnings(run, AnalysisStep::CodeExtraction, Some(page), &report.warnings);
                codes.extend(report.records);
            }
            Err(e) => run.artifact.warnings.push(StepWarning {
                step: AnalysisStep::CodeExtraction,
                page: Some(page),
                line: 0,
                kind: crate::parse::WarningKind::Unrecognized,
                detail: format!("page reply yielded no codes: {e}"),
            }),
        }
        if reply.text.lines().any(|l| l.trim().eq_ignore_ascii_case(LIST_DELIMITER)) {
            if let Ok(list) = parse_emerging_code_list(&reply.text) {
                let merged = model_list.get_or_insert_with(Vec::new);
                let mut seen: HashSet<String> = merged.iter().map(|l| l.to_lowercase()).collect();
                for l in list {
                    if seen.insert(l.to_lowercase()) {
                        merged.push(l);
                    }
                }
            }
        }
    }
    let (mut book, dropped) = Codebook::from_llm(codes, Vec::new());
    for d in dropped {
        run.artifact.warnings.push(StepWarning {
            step: AnalysisStep::Consolidation,
            page: None,
            line: 0,
            kind: crate::parse::WarningKind::StrayField,
            detail: d,
        });
    }
    let derived: Vec<String> = book.labels();
    let code_keys: HashSet<String> = derived.iter().map(|l| normalize_key(l)).collect();
    let (source, labels) = match &model_list {
        Some(list) => (EmergingSource::ModelList, list.clone()),
        None => (EmergingSource::Derived, derived.clone()),
    };
    let not_in_codes: Vec<String> = labels
        .iter()
        .filter(|l| !code_keys.contains(&normalize_key(l)))
        .cloned()
        .collect();
    for l in &not_in_codes {
        run.artifact.warnings.push(StepWarning {
            step: AnalysisStep::Consolidation,
            page: None,
            line: 0,
            kind: crate::parse::WarningKind::UnmatchedSection,
            detail: format!("emerging label {l:?} matches no extracted code"),
        });
    }
    book.emerging_labels = Some(labels.clone());
    run.artifact.emerging = Some(EmergingInfo {
        source,
        labels,
        model_list,
        derived_count: derived.len(),
        not_in_codes,
    });
    run.artifact.llm_codebook = Some(book);
    run.artifact.mark(AnalysisStep::Consolidation);
    run.persist()
}

/// Returns the stored reply for a whole-corpus step, requesting it first if
/// needed.
fn step_reply(
    run: &mut Run<'_>,
    step: AnalysisStep,
    prompt_step: PromptStep,
    prompt: crate::prompt::RenderedPrompt,
    gateway: &Gateway,
) -> Result<String, PipelineError> {
    if let Some(r) = run.artifact.reply(prompt_step, None) {
        return Ok(r.text.clone());
    }
    let result = prompt.messages().and_then(|m| gateway.complete(&m));
    match result {
        Ok(c) => {
            let text = c.text.clone();
            run.artifact.push_reply(RawReply {
                step: prompt_step,
                page: None,
                request_digest: c.request_digest,
                text: c.text,
            });
            run.persist()?;
            Ok(text)
        }
        Err(e) => Err(incomplete(
            run,
            vec![StepFailure {
                step,
                page: None,
                message: e.to_string(),
            }],
        )),
    }
}

fn generate_themes(
    run: &mut Run<'_>,
    focus: &StudyFocus,
    templates: &TemplateSet,
    gateway: &Gateway,
) -> Result<(), PipelineError> {
    if run.artifact.has_step(AnalysisStep::ThemeGeneration) {
        return Ok(());
    }
    let digest = render_code_digest(&run.artifact.codebook()?.codes);
    let prompt = templates.render_theme_generation(&digest, focus)?;
    let text = step_reply(run, AnalysisStep::ThemeGeneration, PromptStep::ThemeGeneration, prompt, gateway)?;
    let report = parse_theme_block(&text).map_err(|source| PipelineError::Parse {
        step: AnalysisStep::ThemeGeneration,
        page: None,
        source,
    })?;
    push_warnings(run, AnalysisStep::ThemeGeneration, None, &report.warnings);
    if let Some(book) = run.artifact.llm_codebook.as_mut() {
        book.themes = report.records;
    }
    run.artifact.mark(AnalysisStep::ThemeGeneration);
    run.persist()
}

fn interpret(
    run: &mut Run<'_>,
    focus: &StudyFocus,
    templates: &TemplateSet,
    gateway: &Gateway,
) -> Result<(), PipelineError> {
    if run.artifact.has_step(AnalysisStep::Interpretation) {
        return Ok(());
    }
    let themes = run.artifact.codebook()?.themes.clone();
    let prompt = templates.render_interpretation(&render_theme_digest(&themes), focus)?;
    let text = step_reply(run, AnalysisStep::Interpretation, PromptStep::Interpretation, prompt, gateway)?;
    let report = parse_interpretation_block(&text, &themes).map_err(|source| PipelineError::Parse {
        step: AnalysisStep::Interpretation,
        page: None,
        source,
    })?;
    push_warnings(run, AnalysisStep::Interpretation, None, &report.warnings);
    if let Some(book) = run.artifact.llm_codebook.as_mut() {
        book.themes = report.records;
    }
    run.artifact.mark(AnalysisStep::Interpretation);
    run.persist()
}
