use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::codebook::Codebook;
use crate::corpus::Corpus;
use crate::gateway::ModelConfig;
use crate::parse::WarningKind;
use crate::prompt::{PromptStep, StudyFocus, TemplateInfo, TemplateSet};
use crate::trace::{TraceConfig, TraceabilityReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactStatus {
    Partial,
    Complete,
}

/// Stages of one analysis run, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisStep {
    CodeExtraction,
    Consolidation,
    ThemeGeneration,
    Interpretation,
    Traceability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusInfo {
    /// File name of the transcript (no directories, so artifacts built in
    /// different checkouts compare equal).
    pub source: String,
    pub fingerprint: String,
    pub page_size: usize,
    pub page_count: usize,
}

impl CorpusInfo {
    pub fn of(corpus: &Corpus) -> Self {
        let source = Path::new(&corpus.source_path)
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| corpus.source_path.clone());
        CorpusInfo {
            source,
            fingerprint: corpus.fingerprint(),
            page_size: corpus.page_size,
            page_count: corpus.page_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub model: ModelSnapshot,
    pub focus: StudyFocus,
    pub templates: Vec<TemplateInfo>,
    pub fuzzy_threshold: f64,
    /// SHA-256 over the fields above. Endpoint and timeout are left out
    /// because they do not change what the model is asked.
    pub fingerprint: String,
}

impl ConfigSnapshot {
    pub fn new(model: &ModelConfig, focus: &StudyFocus, templates: &TemplateSet, trace: &TraceConfig) -> Self {
        let model = ModelSnapshot {
            model_id: model.model_id.clone(),
            temperature: model.temperature,
            max_tokens: model.max_tokens,
        };
        let templates = templates.info();
        let canonical = serde_json::to_vec(&(&model, focus, &templates, trace.fuzzy_threshold)).expect("snapshot serializes");
        ConfigSnapshot {
            model,
            focus: focus.clone(),
            templates,
            fuzzy_threshold: trace.fuzzy_threshold,
            fingerprint: hex::encode(Sha256::digest(&canonical)),
        }
    }
}

/// A model reply exactly as received.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReply {
    pub step: PromptStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<usize>,
    pub request_digest: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmergingSource {
    /// The list section the model appended to its page replies.
    ModelList,
    /// Code labels deduplicated in first-appearance order.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergingInfo {
    pub source: EmergingSource,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_list: Option<Vec<String>>,
    pub derived_count: usize,
    /// Labels of the chosen list that match no extracted code.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub not_in_codes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepWarning {
    pub step: AnalysisStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<usize>,
    pub line: usize,
    pub kind: WarningKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub created: String,
    pub updated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisArtifact {
    pub schema_version: u32,
    pub status: ArtifactStatus,
    pub corpus: CorpusInfo,
    pub config: ConfigSnapshot,
    #[serde(default)]
    pub completed_steps: Vec<AnalysisStep>,
    #[serde(default)]
    pub raw_replies: Vec<RawReply>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_codebook: Option<Codebook>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emerging: Option<EmergingInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_report: Option<TraceabilityReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<StepWarning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

impl AnalysisArtifact {
    pub fn new(corpus: CorpusInfo, config: ConfigSnapshot) -> Self {
        AnalysisArtifact {
            schema_version: SCHEMA_VERSION,
            status: ArtifactStatus::Partial,
            corpus,
            config,
            completed_steps: Vec::new(),
            raw_replies: Vec::new(),
            llm_codebook: None,
            emerging: None,
            trace_report: None,
            warnings: Vec::new(),
            timestamps: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == ArtifactStatus::Complete
    }

    pub fn has_step(&self, step: AnalysisStep) -> bool {
        self.completed_steps.contains(&step)
    }

    pub fn reply(&self, step: PromptStep, page: Option<usize>) -> Option<&RawReply> {
        self.raw_replies.iter().find(|r| r.step == step && r.page == page)
    }

    pub fn codebook(&self) -> Result<&Codebook, PipelineError> {
        self.llm_codebook.as_ref().ok_or(PipelineError::IncompleteArtifact("no codebook"))
    }

    /// Adds a reply. An existing reply for the same step and page is never
    /// replaced.
    pub(crate) fn push_reply(&mut self, reply: RawReply) -> bool {
        if self.reply(reply.step, reply.page).is_some() {
            return false;
        }
        self.raw_replies.push(reply);
        self.raw_replies.sort_by_key(|r| (r.step, r.page));
        true
    }

    pub(crate) fn mark(&mut self, step: AnalysisStep) {
        if !self.has_step(step) {
            self.completed_steps.push(step);
            self.completed_steps.sort();
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let artifact: AnalysisArtifact = serde_json::from_str(&text).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            detail: format!("not a valid analysis artifact: {e}"),
        })?;
        if artifact.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::Io {
                path: path.display().to_string(),
                detail: format!(
                    "schema version {} is not supported (expected {SCHEMA_VERSION})",
                    artifact.schema_version
                ),
            });
        }
        Ok(artifact)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    /// Writes the artifact through a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let err = |e: std::io::Error| PipelineError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(err)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()).map_err(err)?;
        fs::rename(&tmp, path).map_err(err)
    }
}
