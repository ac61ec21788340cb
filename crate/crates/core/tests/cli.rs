//! Exit codes and outputs of the command-line tool.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn thematica(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thematica"))
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .env_remove("THEMATICA_API_KEY")
        .env_remove("OPENAI_API_KEY")
        .output()
        .unwrap()
}

fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs `analyze` over the sample with the bundled fixture.
fn analyze(out: &Path) -> Output {
    let sample = common::sample_dir();
    thematica(
        out,
        &[
            "--config",
            s(&sample.join("config.json")),
            "analyze",
            "--input",
            s(&sample.join("transcript.txt")),
            "--replay",
            s(&common::fixture_path()),
        ],
    )
}

#[test]
fn analyze_replay_writes_artifact_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = analyze(dir.path());
    let (stdout, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{stderr}");
    assert!(stdout.contains("59 codes, 15 emerging codes, 4 themes, 4 interpretations"), "{stdout}");
    for f in ["analysis.json", "report.md", "codes.csv", "coverage.csv", "trace.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let report = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(report.contains("1. **Academic Background of Researcher**: \"My name is Mary, a first year Mphil midwifery student at the University of Ghana.\" - Page 1 [Exact]"));

    let before = fs::read(dir.path().join("analysis.json")).unwrap();
    assert_eq!(analyze(dir.path()).status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("analysis.json")).unwrap(), before);
}

#[test]
fn fixture_miss_leaves_partial_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let entries: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(common::fixture_path()).unwrap()).unwrap();
    let short = dir.path().join("short.json");
    fs::write(&short, serde_json::to_string(&entries[..10]).unwrap()).unwrap();
    let out = dir.path().join("out");
    let sample = common::sample_dir();
    let o = thematica(
        &out,
        &[
            "--config",
            s(&sample.join("config.json")),
            "analyze",
            "--input",
            s(&sample.join("transcript.txt")),
            "--replay",
            s(&short),
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{:?}", text(&o));
    let partial: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(partial["status"], "partial");
    assert!(text(&o).1.contains("rerun the same command to resume"));

    assert_eq!(analyze(&out).status.code(), Some(0));
}

#[test]
fn live_without_credential_names_the_variable() {
    let dir = tempfile::tempdir().unwrap();
    let sample = common::sample_dir();
    let o = thematica(
        dir.path(),
        &["--config", s(&sample.join("config.json")), "analyze", "--input", s(&sample.join("transcript.txt")), "--live"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("THEMATICA_API_KEY"));
}

#[test]
fn fixture_in_output_dir_means_replay() {
    let dir = tempfile::tempdir().unwrap();
    let sample = common::sample_dir();
    let (cfg, input) = (sample.join("config.json"), sample.join("transcript.txt"));
    let args = ["--config", s(&cfg), "analyze", "--input", s(&input)];
    let o = thematica(dir.path(), &args);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("--replay"));
    fs::copy(common::fixture_path(), dir.path().join("fixture.json")).unwrap();
    let o = thematica(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{:?}", text(&o));
}

#[test]
fn credential_in_config_file_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"focus_description": "f", "research_question": "q", "api_key": "sk-test"}"#).unwrap();
    let o = thematica(
        dir.path(),
        &["--config", s(&cfg), "analyze", "--input", s(&common::sample_dir().join("transcript.txt")), "--replay", s(&common::fixture_path())],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("environment variable"));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(analyze(dir.path()).status.code(), Some(0));
    let transcript = common::sample_dir().join("transcript.txt");
    let o = thematica(dir.path(), &["verify", "--input", s(&transcript)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o).0.contains("59 quotes: 59 exact"));

    let path = dir.path().join("analysis.json");
    let mut artifact: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    artifact["llm_codebook"]["codes"][3]["quote"] = "Words the participant never said at all".into();
    let label = artifact["llm_codebook"]["codes"][3]["label"].as_str().unwrap().to_string();
    fs::write(&path, serde_json::to_string_pretty(&artifact).unwrap()).unwrap();
    let o = thematica(dir.path(), &["verify", "--input", s(&transcript)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o).0.contains(&format!("failed: {label}")), "{}", text(&o).0);

    let edited = dir.path().join("edited.txt");
    fs::write(&edited, fs::read_to_string(&transcript).unwrap() + "\n\nOne more paragraph.\n").unwrap();
    let o = thematica(dir.path(), &["verify", "--input", s(&edited)]);
    assert_eq!(o.status.code(), Some(1));
    let expected = artifact["corpus"]["fingerprint"].as_str().unwrap();
    let stderr = text(&o).1;
    assert!(stderr.contains(expected) && stderr.contains("does not match"), "{stderr}");
}

#[test]
fn compare_merges_two_coders_and_footnotes_reference() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(analyze(dir.path()).status.code(), Some(0));
    let human = common::human_dir();
    let reference = human.join("../reference_values.json");
    let o = thematica(
        dir.path(),
        &[
            "compare",
            "--human",
            s(&human.join("coder1.csv")),
            "--human",
            s(&human.join("coder2.csv")),
            "--matcher",
            "alias-map",
            "--alias-map",
            s(&human.join("aliases.csv")),
            "--reference",
            s(&reference),
        ],
    );
    let (stdout, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{stderr}");
    assert!(stdout.contains("69 + 102 - 67 = 104"));
    assert!(stdout.contains("similarity 88.06%"));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("table1,merged_codes,104,104"));
    let matrix = fs::read_to_string(dir.path().join("matrix.csv")).unwrap();
    assert!(matrix.starts_with("code,coder1+coder2,llm\n"));
    let report = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(report.contains("| Merged codes | 104[^1] |"));
    assert!(report.contains("the reference gives 106"));
    assert!(report.contains("#### llm (4 of 6 stages)"));
}

#[test]
fn compare_with_one_coder_skips_merge() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(analyze(dir.path()).status.code(), Some(0));
    let o = thematica(dir.path(), &["compare", "--human", s(&common::human_dir().join("coder1.csv"))]);
    assert_eq!(o.status.code(), Some(0), "{:?}", text(&o));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(!summary.contains("table1"));
    assert!(summary.contains("table4,human_codes,69,69"));
}

#[test]
fn compare_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let coder = common::human_dir().join("coder1.csv");
    let o = thematica(dir.path(), &["compare", "--human", s(&coder)]);
    assert_eq!(o.status.code(), Some(1), "missing artifact");
    assert_eq!(analyze(dir.path()).status.code(), Some(0));
    let o = thematica(dir.path(), &["compare", "--human", s(&coder), "--matcher", "alias-map"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("--alias-map"));
    let o = thematica(dir.path(), &["compare"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_regenerates_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(analyze(dir.path()).status.code(), Some(0));
    let first = fs::read_to_string(dir.path().join("report.md")).unwrap();
    fs::remove_file(dir.path().join("report.md")).unwrap();
    let o = thematica(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("report.md")).unwrap(), first);
}
