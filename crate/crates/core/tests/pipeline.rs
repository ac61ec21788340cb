mod common;

use std::fs;

use common::{options, replay_gateway, run_with, sample_config, sample_corpus, LoggingReplay};
use thematica::gateway::{Gateway, Transport};
use thematica::pipeline::{run_analysis, AnalysisStep, ArtifactStatus, PipelineError, RunOptions};
use thematica::prompt::{StudyFocus, TemplateSet};

#[test]
fn parallel_extraction_matches_serial() {
    let gateway = replay_gateway();
    let serial = run_with(&gateway, &options(None)).unwrap();
    for parallelism in [2, 4, 8] {
        let opts = RunOptions { parallelism, ..options(None) };
        assert_eq!(run_with(&gateway, &opts).unwrap().to_json(), serial.to_json(), "parallelism {parallelism}");
    }
    let opts = RunOptions { parallelism: 0, ..options(None) };
    assert!(matches!(run_with(&gateway, &opts), Err(PipelineError::InvalidParallelism(0))));
}

#[test]
fn resume_refuses_a_changed_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("analysis.json");
    let gateway = replay_gateway();
    let opts = RunOptions { stop_after: Some(AnalysisStep::CodeExtraction), ..options(Some(path.clone())) };
    let partial = run_with(&gateway, &opts).unwrap();
    assert_eq!(partial.status, ArtifactStatus::Partial);

    let focus = StudyFocus::new("a different focus", "a different question?").unwrap();
    let err = run_analysis(&sample_corpus(), &focus, &TemplateSet::bundled(), &gateway, &options(Some(path.clone())))
        .unwrap_err();
    match err {
        PipelineError::ResumeMismatch { what, artifact, current } => {
            assert_eq!(what, "config");
            assert_eq!(artifact, partial.config.fingerprint);
            assert_ne!(current, artifact);
        }
        other => panic!("unexpected {other}"),
    }

    let mut cfg = sample_config();
    cfg.model.temperature = 0.7;
    let warm = Gateway::new(cfg.model_config(), Transport::replay(common::fixture_path()).unwrap()).unwrap();
    assert!(matches!(
        run_with(&warm, &options(Some(path.clone()))),
        Err(PipelineError::ResumeMismatch { what: "config", .. })
    ));

    let other_corpus = thematica::corpus::load_corpus(&common::sample_dir().join("transcript.txt"), 5).unwrap();
    let focus = sample_config().focus().unwrap();
    assert!(matches!(
        run_analysis(&other_corpus, &focus, &TemplateSet::bundled(), &gateway, &options(Some(path))),
        Err(PipelineError::ResumeMismatch { what: "corpus", .. })
    ));
}

#[test]
fn corrupt_artifact_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("analysis.json");
    fs::write(&path, "{\"schema_version\": 1, \"status\": ").unwrap();
    let err = run_with(&replay_gateway(), &options(Some(path.clone()))).unwrap_err();
    assert!(err.to_string().contains("not a valid analysis artifact"), "{err}");
    assert_eq!(fs::read_to_string(&path).unwrap(), "{\"schema_version\": 1, \"status\": ");
}

#[test]
fn timestamps_only_when_requested() {
    let gateway = replay_gateway();
    assert!(run_with(&gateway, &options(None)).unwrap().timestamps.is_none());
    let stamped = run_with(&gateway, &RunOptions { stamp_times: true, ..options(None) }).unwrap();
    let t = stamped.timestamps.expect("timestamps");
    assert!(t.created <= t.updated);
    assert!(t.created.ends_with('Z'));
}

#[test]
fn interrupted_run_is_incomplete_and_saved() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("analysis.json");
    let backend = LoggingReplay::new(Some(7));
    let gateway = Gateway::new(sample_config().model_config(), Transport::Live(Box::new(backend))).unwrap();
    match run_with(&gateway, &options(Some(path.clone()))) {
        Err(PipelineError::Incomplete { artifact, failures }) => {
            assert!(!failures.is_empty());
            assert_eq!(artifact.status, ArtifactStatus::Partial);
            assert_eq!(artifact.raw_replies.len(), 7);
            let on_disk = thematica::pipeline::AnalysisArtifact::load(&path).unwrap();
            assert_eq!(on_disk.to_json(), artifact.to_json());
        }
        other => panic!("expected Incomplete, got {other:?}"),
    }
    let done = run_with(&replay_gateway(), &options(Some(path))).unwrap();
    assert_eq!(done.status, ArtifactStatus::Complete);
    assert_eq!(done.to_json(), run_with(&replay_gateway(), &options(None)).unwrap().to_json());
}

#[test]
fn completed_artifact_is_returned_without_requests() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("analysis.json");
    let first = run_with(&replay_gateway(), &options(Some(path.clone()))).unwrap();
    let backend = LoggingReplay::new(Some(0));
    let gateway = Gateway::new(sample_config().model_config(), Transport::Live(Box::new(backend))).unwrap();
    assert_eq!(run_with(&gateway, &options(Some(path))).unwrap(), first);
}
