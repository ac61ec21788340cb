//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 configuration or runtime error, 2 partial
//! analysis, 3 quotes that could not be traced.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::codebook::{load_human_codebook, match_codes, merge_codebooks, Codebook, Matcher};
use crate::config::StudyConfig;
use crate::corpus::{load_document, paginate, Corpus, DocumentFormat};
use crate::gateway::{api_key_from_env, Gateway, HttpBackend, ResponseStore, Transport};
use crate::pipeline::{compare, human_coverage, run_analysis, six_step_coverage, AnalysisArtifact, PipelineError, RunOptions};
use crate::prompt::TemplateSet;
use crate::report::{render_analysis, render_comparison, render_coverage, ReferenceValues, ReportBundle};
use crate::trace::{verify_codebook, TraceConfig, TraceLevel};

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;
pub const EXIT_TRACE_FAILURES: u8 = 3;

pub const ARTIFACT_FILE: &str = "analysis.json";
/// A fixture with this name in the output directory makes replay the
/// default transport.
pub const FIXTURE_FILE: &str = "fixture.json";
pub const CACHE_FILE: &str = "cache.json";

#[derive(Debug, Parser)]
#[command(name = "thematica", version, about = "Stepwise LLM-assisted thematic analysis of interview transcripts")]
pub struct Cli {
    /// JSON study configuration. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for the artifact and reports.
    #[arg(long, global = true, default_value = "thematica-out")]
    pub output_dir: PathBuf,
    /// Log progress (twice for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract codes, themes and interpretations from a transcript.
    Analyze(AnalyzeArgs),
    /// Compare the model's codebook with one or more human codebooks.
    Compare(CompareArgs),
    /// Re-check every quote of an artifact against the transcript.
    Verify(VerifyArgs),
    /// Regenerate reports from an existing artifact.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Txt,
    Docx,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Transcript (.txt or .docx).
    #[arg(long)]
    pub input: PathBuf,
    /// Override format detection from the file extension.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Paragraphs per page (default 10).
    #[arg(long)]
    pub page_size: Option<usize>,
    /// What the coding should attend to.
    #[arg(long)]
    pub focus: Option<String>,
    /// Question the themes should answer.
    #[arg(long)]
    pub research_question: Option<String>,
    /// Model identifier sent to the API.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Reply length limit per request.
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Concurrent page requests (1-8).
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Minimum similarity for a Fuzzy quote match.
    #[arg(long)]
    pub fuzzy_threshold: Option<f64>,
    /// Directory of prompt templates replacing the bundled ones.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Serve replies from a recorded fixture; never touches the network.
    #[arg(long, conflicts_with_all = ["live", "record"])]
    pub replay: Option<PathBuf>,
    /// Call the model API (credential from THEMATICA_API_KEY).
    #[arg(long)]
    pub live: bool,
    /// Call the model API and record every reply into the output
    /// directory's fixture.
    #[arg(long, conflicts_with = "live")]
    pub record: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherArg {
    Exact,
    AliasMap,
    TokenOverlap,
}

#[derive(Debug, Args, Clone)]
pub struct HumanArgs {
    /// Human codebook CSV; two or more are merged first.
    #[arg(long = "human")]
    pub human: Vec<PathBuf>,
    /// Interpretation notes for each human codebook, in the same order.
    #[arg(long = "human-notes")]
    pub human_notes: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    pub matcher: MatcherArg,
    /// `from_label,to_label` CSV for the alias-map matcher.
    #[arg(long)]
    pub alias_map: Option<PathBuf>,
    /// Jaccard threshold for the token-overlap matcher.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Expected values to footnote against, keyed by table and metric.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Defaults to the artifact in the output directory.
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    #[command(flatten)]
    pub human: HumanArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    /// Transcript the artifact was built from.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    #[command(flatten)]
    pub human: HumanArgs,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<PipelineError>() {
            Some(PipelineError::Incomplete { .. }) => EXIT_PARTIAL,
            _ => EXIT_ERROR,
        };
        Failure { code, error }
    }
}

/// Parses `std::env::args`, runs the command and reports errors on stderr.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    ExitCode::from(run(&cli))
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: &Cli) -> u8 {
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(cli, a),
        Command::Compare(a) => cmd_compare(cli, a),
        Command::Verify(a) => cmd_verify(cli, a),
        Command::Report(a) => cmd_report(cli, a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

/// Config file (when given) with flag overrides applied.
pub fn resolve_config(config: Option<&Path>, a: &AnalyzeArgs) -> Result<StudyConfig> {
    let mut cfg = match config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    if let Some(v) = a.page_size {
        cfg.page_size = v;
    }
    if let Some(v) = &a.focus {
        cfg.focus_description = v.clone();
    }
    if let Some(v) = &a.research_question {
        cfg.research_question = v.clone();
    }
    if let Some(v) = &a.model {
        cfg.model.model_id = v.clone();
    }
    if let Some(v) = a.temperature {
        cfg.model.temperature = v;
    }
    if let Some(v) = a.max_tokens {
        cfg.model.max_tokens = v;
    }
    if let Some(v) = &a.endpoint {
        cfg.model.endpoint_url = v.clone();
    }
    if let Some(v) = a.parallelism {
        cfg.parallelism = v;
    }
    if let Some(v) = a.fuzzy_threshold {
        cfg.fuzzy_threshold = v;
    }
    cfg.validate("configuration").map_err(|e| {
        anyhow!(e).context("set the study focus with --config FILE or --focus and --research-question")
    })?;
    Ok(cfg)
}

fn artifact_path(cli: &Cli, given: Option<&PathBuf>) -> PathBuf {
    given.cloned().unwrap_or_else(|| cli.output_dir.join(ARTIFACT_FILE))
}

fn load_input(path: &Path, format: Option<FormatArg>, page_size: usize) -> Result<Corpus> {
    let format = match format {
        Some(FormatArg::Txt) => DocumentFormat::PlainText,
        Some(FormatArg::Docx) => DocumentFormat::OoxmlDocx,
        None => DocumentFormat::from_path(path),
    };
    let paragraphs = load_document(path, format)?;
    Ok(paginate(path.display().to_string(), paragraphs, page_size)?)
}

fn build_transport(cli: &Cli, a: &AnalyzeArgs, cfg: &StudyConfig) -> Result<(Transport, bool)> {
    let fixture = cli.output_dir.join(FIXTURE_FILE);
    if let Some(p) = &a.replay {
        return Ok((Transport::replay(p)?, false));
    }
    if a.live || a.record {
        api_key_from_env().context("live analysis needs a credential")?;
        let backend = Box::new(HttpBackend::from_env(&cfg.model_config())?);
        if a.record {
            return Ok((Transport::record(backend, &fixture)?, true));
        }
        return Ok((Transport::Live(backend), true));
    }
    if fixture.exists() {
        log::info!("replaying {}", fixture.display());
        return Ok((Transport::replay(&fixture)?, false));
    }
    bail!(
        "no transport selected: pass --replay FIXTURE, --live or --record (or place {FIXTURE_FILE} in {})",
        cli.output_dir.display()
    )
}

fn cmd_analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<u8, Failure> {
    let cfg = resolve_config(cli.config.as_deref(), a)?;
    let corpus = load_input(&a.input, a.format, cfg.page_size)?;
    let templates = match &a.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::bundled(),
    };
    let (transport, live) = build_transport(cli, a, &cfg)?;
    let mut gateway = Gateway::new(cfg.model_config(), transport)?;
    if live && !a.record {
        gateway = gateway.with_cache(ResponseStore::open_or_create(&cli.output_dir.join(CACHE_FILE))?);
    }
    let opts = RunOptions {
        artifact_path: Some(cli.output_dir.join(ARTIFACT_FILE)),
        parallelism: cfg.parallelism,
        stamp_times: live,
        trace: cfg.trace_config(),
        stop_after: None,
    };
    let artifact = run_analysis(&corpus, &cfg.focus()?, &templates, &gateway, &opts);
    let stats = gateway.stats();
    log::info!(
        "{} requests: {} network, {} cache, {} replay",
        stats.requests,
        stats.network_calls,
        stats.cache_hits,
        stats.replay_hits
    );
    match artifact {
        Ok(artifact) => {
            let bundle = analysis_bundle(&artifact)?;
            bundle.write_to(&cli.output_dir)?;
            print_analysis_summary(&artifact, &cli.output_dir);
            Ok(0)
        }
        Err(PipelineError::Incomplete { artifact, failures }) => {
            eprintln!("analysis incomplete; partial artifact kept in {}", cli.output_dir.join(ARTIFACT_FILE).display());
            for f in &failures {
                eprintln!("  {f}");
            }
            eprintln!(
                "  {} replies stored; rerun the same command to resume",
                artifact.raw_replies.len()
            );
            Ok(EXIT_PARTIAL)
        }
        Err(e) => Err(e.into()),
    }
}

fn analysis_bundle(artifact: &AnalysisArtifact) -> Result<ReportBundle> {
    let coverage = six_step_coverage(artifact).ok();
    Ok(render_analysis(artifact, coverage.as_ref())?)
}

fn print_analysis_summary(artifact: &AnalysisArtifact, out: &Path) {
    let Ok(book) = artifact.codebook() else { return };
    let emerging = artifact.emerging.as_ref().map_or(0, |e| e.labels.len());
    let interpreted = book.themes.iter().filter(|t| t.interpretation.is_some()).count();
    println!(
        "{} pages: {} codes, {emerging} emerging codes, {} themes, {interpreted} interpretations",
        artifact.corpus.page_count,
        book.codes.len(),
        book.themes.len()
    );
    if let Some(t) = &artifact.trace_report {
        let c = t.counts;
        println!(
            "quotes: {} exact, {} normalized, {} fuzzy, {} failed",
            c.exact, c.normalized, c.fuzzy, c.failed
        );
    }
    println!("wrote {}", out.display());
}

fn build_matcher(h: &HumanArgs) -> Result<Matcher> {
    Ok(match h.matcher {
        MatcherArg::Exact => Matcher::exact(),
        MatcherArg::TokenOverlap => Matcher::token_overlap(h.threshold)?,
        MatcherArg::AliasMap => {
            let path = h
                .alias_map
                .as_ref()
                .ok_or_else(|| anyhow!("--matcher alias-map needs --alias-map FILE"))?;
            Matcher::load_alias_csv(path)?
        }
    })
}

/// Loads the human codebooks and merges them left to right.
pub fn load_human(h: &HumanArgs, matcher: &Matcher) -> Result<Codebook> {
    if h.human.is_empty() {
        bail!("at least one --human CSV is needed");
    }
    if !h.human_notes.is_empty() && h.human_notes.len() != h.human.len() {
        bail!("give one --human-notes file per --human codebook, or none");
    }
    let mut books = Vec::new();
    for (i, path) in h.human.iter().enumerate() {
        let loaded = load_human_codebook(path, h.human_notes.get(i).map(PathBuf::as_path))?;
        for w in &loaded.warnings {
            log::debug!("{}: {w}", path.display());
        }
        books.push(loaded.codebook);
    }
    let mut books = books.into_iter();
    let mut merged = books.next().expect("non-empty");
    for next in books {
        let m = match_codes(&merged, &next, matcher)?;
        merged = merge_codebooks(&merged, &next, &m, matcher)?.0;
    }
    Ok(merged)
}

fn comparison_bundle(artifact: &AnalysisArtifact, h: &HumanArgs) -> Result<ReportBundle> {
    let matcher = build_matcher(h)?;
    let human = load_human(h, &matcher)?;
    let reference = h.reference.as_deref().map(ReferenceValues::load).transpose()?;
    let bundle = compare(artifact, &human, &matcher)?;
    let mut report = render_comparison(&bundle, reference.as_ref());
    let coverages = vec![six_step_coverage(artifact)?, human_coverage(&human)];
    let (cov_md, cov_csv) = render_coverage(&coverages);
    report.markdown_report.push_str("\n## Stage coverage\n\n");
    report.markdown_report.push_str(&cov_md);
    report.csv_exports.insert("coverage.csv".into(), cov_csv);

    if let Some(m) = &bundle.merge {
        println!(
            "merged human codes: {} + {} - {} = {}",
            m.codes_a, m.codes_b, m.similar_codes, m.merged_codes
        );
    }
    let s = &bundle.code_summary;
    println!(
        "human {} vs model {}: difference {}%, similarity {}%",
        s.count_a, s.count_b, s.percentage_difference, s.percentage_similarity
    );
    for n in &report.inconsistency_notes {
        println!("note: {n}");
    }
    Ok(report)
}

fn load_complete(path: &Path) -> Result<AnalysisArtifact> {
    let artifact = AnalysisArtifact::load(path)?;
    if !artifact.is_complete() {
        bail!(
            "{} is a partial analysis; finish it with `thematica analyze` first",
            path.display()
        );
    }
    Ok(artifact)
}

fn cmd_compare(cli: &Cli, a: &CompareArgs) -> Result<u8, Failure> {
    let artifact = load_complete(&artifact_path(cli, a.artifact.as_ref()))?;
    let mut report = analysis_bundle(&artifact)?;
    report.append(comparison_bundle(&artifact, &a.human)?);
    report.write_to(&cli.output_dir)?;
    println!("wrote {}", cli.output_dir.display());
    Ok(0)
}

fn cmd_report(cli: &Cli, a: &ReportArgs) -> Result<u8, Failure> {
    let artifact = AnalysisArtifact::load(&artifact_path(cli, a.artifact.as_ref()))?;
    let mut report = analysis_bundle(&artifact)?;
    if !a.human.human.is_empty() {
        if !artifact.is_complete() {
            return Err(anyhow!("comparison needs a complete analysis").into());
        }
        report.append(comparison_bundle(&artifact, &a.human)?);
    }
    report.write_to(&cli.output_dir)?;
    println!("wrote {}", cli.output_dir.display());
    Ok(0)
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<u8, Failure> {
    let artifact = load_complete(&artifact_path(cli, a.artifact.as_ref()))?;
    let corpus = load_input(&a.input, None, artifact.corpus.page_size)?;
    let current = corpus.fingerprint();
    if current != artifact.corpus.fingerprint {
        return Err(anyhow!(
            "transcript fingerprint {current} does not match the artifact's {}",
            artifact.corpus.fingerprint
        )
        .into());
    }
    let book = artifact.codebook()?;
    let cfg = TraceConfig {
        fuzzy_threshold: artifact.config.fuzzy_threshold,
    };
    let report = verify_codebook(book, &corpus, &cfg)?;
    let c = report.counts;
    println!(
        "{} quotes: {} exact, {} normalized, {} fuzzy, {} failed",
        c.total(),
        c.exact,
        c.normalized,
        c.fuzzy,
        c.failed
    );
    for r in report.failed() {
        println!("  failed: {} (page {}): {}", r.label, r.page, r.notes.join("; "));
    }
    for r in report.results.iter().filter(|r| r.level == TraceLevel::Fuzzy) {
        log::info!("fuzzy: {} (page {}) score {:.3}", r.label, r.page, r.score);
    }
    Ok(if c.failed > 0 { EXIT_TRACE_FAILURES } else { 0 })
}
