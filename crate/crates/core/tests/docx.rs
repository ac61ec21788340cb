use std::fs::File;

use docx_rs::{BreakType, Docx, Paragraph, Run};
use thematica::corpus::{load_corpus, load_document, CorpusError, DocumentFormat};

fn write_docx(path: &std::path::Path, paragraphs: Vec<Paragraph>) {
    let mut doc = Docx::new();
    for p in paragraphs {
        doc = doc.add_paragraph(p);
    }
    doc.build().pack(File::create(path).unwrap()).unwrap();
}

fn para(text: &str) -> Paragraph {
    Paragraph::new().add_run(Run::new().add_text(text))
}

#[test]
fn docx_paragraphs_match_plain_text() {
    let dir = tempfile::tempdir().unwrap();
    let docx = dir.path().join("interview.docx");
    let lines: Vec<String> = (1..=23).map(|i| format!("Answer number {i}.")).collect();
    let mut paragraphs: Vec<Paragraph> = lines.iter().map(|l| para(l)).collect();
    paragraphs.insert(4, para("   "));
    paragraphs.insert(9, Paragraph::new());
    write_docx(&docx, paragraphs);

    let txt = dir.path().join("interview.txt");
    std::fs::write(&txt, lines.join("\n\n")).unwrap();

    assert_eq!(DocumentFormat::from_path(&docx), DocumentFormat::OoxmlDocx);
    let from_docx = load_corpus(&docx, 10).unwrap();
    let from_txt = load_corpus(&txt, 10).unwrap();
    assert_eq!(from_docx.page_count(), 3);
    assert_eq!(from_docx.pages, from_txt.pages);
    assert_eq!(from_docx.fingerprint(), from_txt.fingerprint());
    assert_eq!(from_docx.page(3).unwrap().paragraphs.len(), 3);
}

#[test]
fn runs_join_and_breaks_become_newlines() {
    let dir = tempfile::tempdir().unwrap();
    let docx = dir.path().join("runs.docx");
    write_docx(
        &docx,
        vec![Paragraph::new()
            .add_run(Run::new().add_text("Interviewer: "))
            .add_run(Run::new().add_text("how did it go?").add_break(BreakType::TextWrapping))
            .add_run(Run::new().add_text("Participant: fine."))],
    );
    let paras = load_document(&docx, DocumentFormat::OoxmlDocx).unwrap();
    assert_eq!(paras.len(), 1);
    assert_eq!(paras[0].text, "Interviewer: how did it go?\nParticipant: fine.");
}

#[test]
fn broken_and_empty_documents() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.docx");
    std::fs::write(&bogus, b"not a zip archive").unwrap();
    assert!(matches!(load_document(&bogus, DocumentFormat::OoxmlDocx), Err(CorpusError::Decode { .. })));

    let empty = dir.path().join("empty.docx");
    write_docx(&empty, vec![para(" "), Paragraph::new()]);
    assert!(matches!(load_document(&empty, DocumentFormat::OoxmlDocx), Err(CorpusError::EmptyDocument(_))));
}
