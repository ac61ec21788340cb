//! Prompt templates for the three analysis steps.
//!
//! Templates are plain text files with `#!` metadata lines followed by a
//! `[system]` and a `[user]` section. The bundled set is compiled in; a
//! directory containing files of the same names overrides it.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::OnceLock;
use thiserror::Error;

use crate::corpus::Page;
use crate::gateway::{ChatMessage, GatewayError};

pub const PLACEHOLDERS: [&str; 6] = [
    "page_number",
    "text_segment",
    "focus",
    "research_question",
    "codes",
    "themes",
];

pub const SAMPLE_FOCUS: &str =
    "the migration experiences of nurses and midwives from developing countries to developed countries";
pub const SAMPLE_RESEARCH_QUESTION: &str =
    "What are the migration experiences of nurses and midwives from developing countries to developed countries?";

const BUNDLED_EXTRACTION: &str = include_str!("../templates/code_extraction.txt");
const BUNDLED_THEMES: &str = include_str!("../templates/theme_generation.txt");
const BUNDLED_INTERPRETATION: &str = include_str!("../templates/interpretation.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("study focus description is empty")]
    EmptyFocus,
    #[error("research question is empty")]
    EmptyResearchQuestion,
    #[error("page {0} has no text")]
    EmptyPage(usize),
    #[error("code digest is empty")]
    EmptyCodes,
    #[error("theme digest is empty")]
    EmptyThemes,
    #[error("template {name}: {detail}")]
    Template { name: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyFocus {
    focus_description: String,
    research_question: String,
}

impl StudyFocus {
    pub fn new(focus_description: impl Into<String>, research_question: impl Into<String>) -> Result<Self, PromptError> {
        let focus_description = focus_description.into().trim().to_string();
        let research_question = research_question.into().trim().to_string();
        if focus_description.is_empty() {
            return Err(PromptError::EmptyFocus);
        }
        if research_question.is_empty() {
            return Err(PromptError::EmptyResearchQuestion);
        }
        Ok(StudyFocus {
            focus_description,
            research_question,
        })
    }

    /// The nurse/midwife migration study used by the bundled sample corpus.
    pub fn sample() -> Self {
        Self::new(SAMPLE_FOCUS, SAMPLE_RESEARCH_QUESTION).expect("sample focus is valid")
    }

    pub fn focus_description(&self) -> &str {
        &self.focus_description
    }

    pub fn research_question(&self) -> &str {
        &self.research_question
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStep {
    CodeExtraction,
    ThemeGeneration,
    Interpretation,
}

impl PromptStep {
    pub fn file_name(self) -> &'static str {
        match self {
            PromptStep::CodeExtraction => "code_extraction.txt",
            PromptStep::ThemeGeneration => "theme_generation.txt",
            PromptStep::Interpretation => "interpretation.txt",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            PromptStep::CodeExtraction => &["text_segment", "page_number"],
            PromptStep::ThemeGeneration => &["codes"],
            PromptStep::Interpretation => &["themes"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub step: PromptStep,
    pub system_message: String,
    pub user_message: String,
}

impl RenderedPrompt {
    pub fn messages(&self) -> Result<Vec<ChatMessage>, GatewayError> {
        Ok(vec![
            ChatMessage::system(self.system_message.clone())?,
            ChatMessage::user(self.user_message.clone())?,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub name: String,
    pub version: String,
    pub system: String,
    pub user: String,
    /// SHA-256 of the template file contents.
    pub content_hash: String,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("placeholder regex"))
}

impl Template {
    pub fn parse(step: PromptStep, source: &str) -> Result<Self, PromptError> {
        let fallback_name = step.file_name().trim_end_matches(".txt").to_string();
        let err = |detail: String| PromptError::Template {
            name: fallback_name.clone(),
            detail,
        };
        let mut name = None;
        let mut version = None;
        let mut section: Option<&str> = None;
        let mut system = Vec::new();
        let mut user = Vec::new();
        for line in source.lines() {
            if section.is_none() {
                if let Some(meta) = line.strip_prefix("#!") {
                    if let Some((k, v)) = meta.split_once(':') {
                        match k.trim() {
                            "template" => name = Some(v.trim().to_string()),
                            "version" => version = Some(v.trim().to_string()),
                            _ => {}
                        }
                    }
                    continue;
                }
            }
            match line.trim_end() {
                "[system]" => section = Some("system"),
                "[user]" => section = Some("user"),
                _ => match section {
                    Some("system") => system.push(line),
                    Some("user") => user.push(line),
                    _ if line.trim().is_empty() => {}
                    _ => return Err(err(format!("text outside a section: {line:?}"))),
                },
            }
        }
        let system = system.join("\n").trim().to_string();
        let user = user.join("\n").trim_end().to_string();
        if system.is_empty() || user.trim().is_empty() {
            return Err(err("needs non-empty [system] and [user] sections".into()));
        }
        let mut used = BTreeSet::new();
        for text in [&system, &user] {
            for cap in placeholder_re().captures_iter(text) {
                let p = cap[1].to_string();
                if !PLACEHOLDERS.contains(&p.as_str()) {
                    return Err(err(format!("unknown placeholder {{{p}}}")));
                }
                used.insert(p);
            }
        }
        for req in step.required() {
            if !used.contains(*req) {
                return Err(err(format!("missing required placeholder {{{req}}}")));
            }
        }
        Ok(Template {
            name: name.unwrap_or(fallback_name),
            version: version.unwrap_or_else(|| "0".to_string()),
            system,
            user,
            content_hash: hex::encode(Sha256::digest(source.as_bytes())),
        })
    }

    /// Substitutes placeholders in one pass, so substituted values (page
    /// text in particular) are never scanned for placeholders themselves.
    fn fill(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> String {
        placeholder_re()
            .replace_all(text, |c: &Captures| lookup(&c[1]).unwrap_or_else(|| c[0].to_string()))
            .into_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub extraction: Template,
    pub themes: Template,
    pub interpretation: Template,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub step: PromptStep,
    pub name: String,
    pub version: String,
    pub content_hash: String,
}

impl TemplateSet {
    pub fn bundled() -> Self {
        TemplateSet {
            extraction: Template::parse(PromptStep::CodeExtraction, BUNDLED_EXTRACTION).expect("bundled template"),
            themes: Template::parse(PromptStep::ThemeGeneration, BUNDLED_THEMES).expect("bundled template"),
            interpretation: Template::parse(PromptStep::Interpretation, BUNDLED_INTERPRETATION)
                .expect("bundled template"),
        }
    }

    /// Loads templates from `dir`; any file that is absent falls back to the
    /// bundled version.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::bundled();
        for step in [
            PromptStep::CodeExtraction,
            PromptStep::ThemeGeneration,
            PromptStep::Interpretation,
        ] {
            let path = dir.join(step.file_name());
            if !path.exists() {
                continue;
            }
            let source = fs::read_to_string(&path).map_err(|e| PromptError::Template {
                name: path.display().to_string(),
                detail: e.to_string(),
            })?;
            let t = Template::parse(step, &source)?;
            match step {
                PromptStep::CodeExtraction => set.extraction = t,
                PromptStep::ThemeGeneration => set.themes = t,
                PromptStep::Interpretation => set.interpretation = t,
            }
        }
        Ok(set)
    }

    pub fn info(&self) -> Vec<TemplateInfo> {
        [
            (PromptStep::CodeExtraction, &self.extraction),
            (PromptStep::ThemeGeneration, &self.themes),
            (PromptStep::Interpretation, &self.interpretation),
        ]
        .into_iter()
        .map(|(step, t)| TemplateInfo {
            step,
            name: t.name.clone(),
            version: t.version.clone(),
            content_hash: t.content_hash.clone(),
        })
        .collect()
    }

    pub fn render_code_extraction(&self, page: &Page, focus: &StudyFocus) -> Result<RenderedPrompt, PromptError> {
        if page.text.trim().is_empty() {
            return Err(PromptError::EmptyPage(page.number));
        }
        let number = page.number.to_string();
        let lookup = |k: &str| -> Option<String> {
            match k {
                "page_number" => Some(number.clone()),
                "text_segment" => Some(page.text.clone()),
                _ => common(k, focus),
            }
        };
        Ok(render(PromptStep::CodeExtraction, &self.extraction, &lookup))
    }

    pub fn render_theme_generation(&self, codes_digest: &str, focus: &StudyFocus) -> Result<RenderedPrompt, PromptError> {
        if codes_digest.trim().is_empty() {
            return Err(PromptError::EmptyCodes);
        }
        let lookup = |k: &str| -> Option<String> {
            match k {
                "codes" => Some(codes_digest.to_string()),
                _ => common(k, focus),
            }
        };
        Ok(render(PromptStep::ThemeGeneration, &self.themes, &lookup))
    }

    pub fn render_interpretation(&self, themes_digest: &str, focus: &StudyFocus) -> Result<RenderedPrompt, PromptError> {
        if themes_digest.trim().is_empty() {
            return Err(PromptError::EmptyThemes);
        }
        let lookup = |k: &str| -> Option<String> {
            match k {
                "themes" => Some(themes_digest.to_string()),
                _ => common(k, focus),
            }
        };
        Ok(render(PromptStep::Interpretation, &self.interpretation, &lookup))
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::bundled()
    }
}

fn common(key: &str, focus: &StudyFocus) -> Option<String> {
    match key {
        "focus" => Some(focus.focus_description.clone()),
        "research_question" => Some(focus.research_question.clone()),
        // Placeholders that do not apply to this step render as empty.
        _ => Some(String::new()),
    }
}

fn render(step: PromptStep, t: &Template, lookup: &dyn Fn(&str) -> Option<String>) -> RenderedPrompt {
    RenderedPrompt {
        step,
        system_message: Template::fill(&t.system, lookup),
        user_message: Template::fill(&t.user, lookup),
    }
}
