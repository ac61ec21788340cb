use serde::Serialize;

use super::{AnalysisArtifact, PipelineError};
use crate::agreement::{
    build_agreement_summary, cohens_kappa, overlap_percentage, percentage_similarity, presence_matrix,
    share_percentage, AgreementSummary, Percent, PresenceMatrix,
};
use crate::codebook::{Codebook, Matcher, MergeInfo};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThemeOverlapRow {
    pub coder: String,
    pub themes: u64,
    pub similar: u64,
    pub percent: Percent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThemeShares {
    pub llm_themes: u64,
    /// Themes the human coders agreed on.
    pub human_themes: u64,
    pub total: u64,
    pub llm_share: Percent,
    pub human_share: Percent,
    /// Size of the model's emerging-code list, read as candidate themes.
    pub emerging_labels: u64,
    /// `100 - (human - emerging) / human * 100`.
    pub emerging_parity: Option<Percent>,
}

/// Everything the comparison report needs, computed once.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonBundle {
    pub human_coder: String,
    pub llm_coder: String,
    /// Per-coder and merged code counts, when the human codebook is a merge.
    pub merge: Option<MergeInfo>,
    pub theme_overlap: Vec<ThemeOverlapRow>,
    /// Human count (agreed codes when merged) against the model's count.
    pub code_summary: AgreementSummary,
    pub presence: PresenceMatrix,
    pub theme_shares: ThemeShares,
    /// Cohen's kappa over the presence matrix columns. Supplementary.
    pub presence_kappa: Option<f64>,
    pub notes: Vec<String>,
}

/// Compares the model's codebook in `artifact` with a human codebook.
pub fn compare(artifact: &AnalysisArtifact, human: &Codebook, matcher: &Matcher) -> Result<ComparisonBundle, PipelineError> {
    if !artifact.is_complete() {
        return Err(PipelineError::IncompleteArtifact("analysis has not completed"));
    }
    let llm = artifact.codebook()?;
    for b in [human, llm] {
        if b.codes.is_empty() {
            return Err(crate::codebook::CodebookError::EmptyCodebook(b.coder_id.clone()).into());
        }
    }
    let mut notes = Vec::new();
    let merge = human.merge_info.clone();

    let mut theme_overlap = Vec::new();
    if let Some(m) = &merge {
        for (coder, own) in [(&m.coder_a, m.themes_a), (&m.coder_b, m.themes_b)] {
            if own == 0 {
                notes.push(format!("coder {coder} has no themes; overlap not computed"));
                continue;
            }
            theme_overlap.push(ThemeOverlapRow {
                coder: coder.clone(),
                themes: own as u64,
                similar: m.similar_themes as u64,
                percent: overlap_percentage(m.similar_themes as u64, own as u64)?,
            });
        }
    }

    let human_count = merge.as_ref().map_or(human.codes.len(), |m| m.similar_codes) as u64;
    let code_summary = build_agreement_summary(human_count, llm.codes.len() as u64)?;
    if code_summary.negative_difference() {
        notes.push(format!(
            "the model produced more codes ({}) than the human baseline ({human_count}); percentage difference is negative",
            llm.codes.len()
        ));
    }

    let presence = presence_matrix(&[human, llm], matcher)?;
    let presence_kappa = cohens_kappa(&presence.column(0), &presence.column(1)).ok();

    let human_themes = merge.as_ref().map_or(human.themes.len(), |m| m.similar_themes) as u64;
    let llm_themes = llm.themes.len() as u64;
    let total = human_themes + llm_themes;
    let (llm_share, human_share) = if total == 0 {
        notes.push("neither side has themes; theme shares are zero".into());
        (Percent::of(0, 1), Percent::of(0, 1))
    } else {
        (share_percentage(llm_themes, total)?, share_percentage(human_themes, total)?)
    };
    let emerging_labels = artifact.emerging.as_ref().map_or(0, |e| e.labels.len()) as u64;
    let emerging_parity = if human_themes > 0 {
        Some(percentage_similarity(human_themes, emerging_labels)?)
    } else {
        None
    };
    if emerging_parity.is_some_and(|p| p.hundredths() == 10_000) {
        notes.push(format!(
            "the emerging-code list has as many entries ({emerging_labels}) as the human coders' agreed themes; this is parity of counts, not of content"
        ));
    }

    Ok(ComparisonBundle {
        human_coder: human.coder_id.clone(),
        llm_coder: llm.coder_id.clone(),
        merge,
        theme_overlap,
        code_summary,
        presence,
        theme_shares: ThemeShares {
            llm_themes,
            human_themes,
            total,
            llm_share,
            human_share,
            emerging_labels,
            emerging_parity,
        },
        presence_kappa,
        notes,
    })
}
