use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AnalysisArtifact, PipelineError};
use crate::codebook::Codebook;

/// Stages of a systematic thematic analysis, from quotes to a conceptual model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThematicStage {
    QuotationSelection,
    Keywords,
    Coding,
    ThemeIdentification,
    Conceptualization,
    ConceptualModel,
}

impl ThematicStage {
    pub const ALL: [ThematicStage; 6] = [
        ThematicStage::QuotationSelection,
        ThematicStage::Keywords,
        ThematicStage::Coding,
        ThematicStage::ThemeIdentification,
        ThematicStage::Conceptualization,
        ThematicStage::ConceptualModel,
    ];

    pub fn number(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).expect("listed") + 1
    }
}

impl fmt::Display for ThematicStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThematicStage::QuotationSelection => "Quotation selection",
            ThematicStage::Keywords => "Keywords",
            ThematicStage::Coding => "Coding",
            ThematicStage::ThemeIdentification => "Theme identification",
            ThematicStage::Conceptualization => "Conceptualization",
            ThematicStage::ConceptualModel => "Conceptual model",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCoverage {
    pub stage: ThematicStage,
    /// What produced this stage's output, or `None` when nothing did.
    pub covered_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SixStepCoverage {
    pub coder: String,
    pub stages: Vec<StageCoverage>,
}

impl SixStepCoverage {
    fn build(coder: &str, mut covered: impl FnMut(ThematicStage) -> Option<String>) -> Self {
        SixStepCoverage {
            coder: coder.to_string(),
            stages: ThematicStage::ALL
                .iter()
                .map(|&stage| StageCoverage {
                    stage,
                    covered_by: covered(stage),
                })
                .collect(),
        }
    }

    pub fn covered_count(&self) -> usize {
        self.stages.iter().filter(|s| s.covered_by.is_some()).count()
    }

    pub fn covered(&self) -> Vec<ThematicStage> {
        self.stages.iter().filter(|s| s.covered_by.is_some()).map(|s| s.stage).collect()
    }

    pub fn is_covered(&self, stage: ThematicStage) -> bool {
        self.stages.iter().any(|s| s.stage == stage && s.covered_by.is_some())
    }
}

/// Maps the model's outputs onto the six stages: per-page codes are
/// keywords, the emerging-code list is coding, themes are theme
/// identification and interpretations are conceptualization. Quotation
/// selection and the conceptual model have no counterpart.
pub fn six_step_coverage(artifact: &AnalysisArtifact) -> Result<SixStepCoverage, PipelineError> {
    if !artifact.is_complete() {
        return Err(PipelineError::IncompleteArtifact("analysis has not completed"));
    }
    let book = artifact.codebook()?;
    let emerging = artifact.emerging.as_ref().map_or(0, |e| e.labels.len());
    Ok(SixStepCoverage::build("llm", |stage| match stage {
        ThematicStage::Keywords if !book.codes.is_empty() => Some(format!("per-page code extraction ({} codes)", book.codes.len())),
        ThematicStage::Coding if emerging > 0 => Some(format!("emerging-code list ({emerging} labels)")),
        ThematicStage::ThemeIdentification if !book.themes.is_empty() => {
            Some(format!("theme generation ({} themes)", book.themes.len()))
        }
        ThematicStage::Conceptualization if book.themes.iter().any(|t| t.interpretation.is_some()) => Some(format!(
            "theme interpretations ({})",
            book.themes.iter().filter(|t| t.interpretation.is_some()).count()
        )),
        _ => None,
    }))
}

/// Stage coverage of a human codebook: codes are keywords, assigning codes
/// to themes is coding, themes are theme identification, and per-theme
/// interpretation notes (when loaded) are conceptualization.
pub fn human_coverage(book: &Codebook) -> SixStepCoverage {
    let assigned = book.themes.iter().map(|t| t.member_labels.len()).sum::<usize>();
    SixStepCoverage::build(&book.coder_id, |stage| match stage {
        ThematicStage::Keywords if !book.codes.is_empty() => Some(format!("codes ({})", book.codes.len())),
        ThematicStage::Coding if assigned > 0 => Some(format!("code-to-theme assignment ({assigned} codes)")),
        ThematicStage::ThemeIdentification if !book.themes.is_empty() => Some(format!("themes ({})", book.themes.len())),
        ThematicStage::Conceptualization if book.themes.iter().any(|t| t.interpretation.is_some()) => {
            Some("theme interpretation notes".to_string())
        }
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodebookKind;
    use crate::parse::{CodeRecord, Provenance, ThemeRecord};

    #[test]
    fn human_with_codes_and_themes_covers_three() {
        let codes = vec![CodeRecord::new("A", "", 0, Provenance::Human("c".into()))];
        let themes = vec![ThemeRecord::new("T", vec!["A".into()], "")];
        let book = Codebook::new("c", CodebookKind::Human, codes, themes).unwrap();
        let cov = human_coverage(&book);
        assert_eq!(cov.stages.len(), 6);
        assert_eq!(
            cov.covered(),
            vec![ThematicStage::Keywords, ThematicStage::Coding, ThematicStage::ThemeIdentification]
        );
    }

    #[test]
    fn empty_book_covers_nothing() {
        let book = Codebook::new("c", CodebookKind::Human, vec![], vec![]).unwrap();
        assert_eq!(human_coverage(&book).covered_count(), 0);
    }

    #[test]
    fn stage_numbers() {
        assert_eq!(ThematicStage::QuotationSelection.number(), 1);
        assert_eq!(ThematicStage::ConceptualModel.number(), 6);
    }
}
