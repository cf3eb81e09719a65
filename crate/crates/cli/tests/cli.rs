use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/toy")
}

fn toxtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toxtrace")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy().join("config.toml");
    let out = toxtrace(&["run", "--config", s(&config), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert!(manifest["artifacts"].as_array().unwrap().len() > 20);
}

#[test]
fn validation_errors_exit_2() {
    let missing = toxtrace(&["run", "--config", "/nonexistent/config.toml"]);
    assert_eq!(code(&missing), 2);
    let flag = toxtrace(&["detect", "--no-such-flag"]);
    assert_eq!(code(&flag), 2);
    let dir = tempfile::tempdir().unwrap();
    let thresholds = toxtrace(&[
        "robustness",
        "--translations",
        s(&toy().join("translations.jsonl")),
        "--findings",
        s(&dir.path().join("f.jsonl")),
        "--thresholds",
        "0.4",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&thresholds), 2);
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = toxtrace(&[
        "filter",
        "--policy",
        "no_add",
        "--src-lexicon",
        s(&toy().join("lexicons/eng_Latn.txt")),
        "--tgt-lexicon",
        s(&toy().join("lexicons/fra_Latn.txt")),
        "--in",
        s(&toy().join("bitext.tsv")),
        "--out",
        s(&blocker.join("out.tsv")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn detect_export_and_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let findings = dir.path().join("findings.jsonl");
    let translations = toy().join("translations.jsonl");
    let out = toxtrace(&[
        "detect",
        "--translations",
        s(&translations),
        "--attr",
        s(&toy().join("attributions.jsonl")),
        "--lexicon-dir",
        s(&toy().join("lexicons")),
        "--capabilities",
        s(&toy().join("capabilities.json")),
        "--out",
        s(&findings),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&findings).unwrap().lines().count(), 7);

    let sheet = dir.path().join("fra.csv");
    let out = toxtrace(&[
        "annotate",
        "export",
        "--translations",
        s(&translations),
        "--findings",
        s(&findings),
        "--language",
        "fra_Latn",
        "--out",
        s(&sheet),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // unannotated rows block ingestion
    let rates = dir.path().join("rates.json");
    let ingest = |sheet: &Path| toxtrace(&["annotate", "ingest", "--sheets", s(sheet), "--out", s(&rates)]);
    assert_eq!(code(&ingest(&sheet)), 2);

    let text = fs::read_to_string(&sheet).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let data_start = lines.iter().position(|l| l.starts_with("sentence_id")).unwrap() + 1;
    for (i, line) in lines.iter_mut().enumerate().skip(data_start) {
        line.push_str(if i == data_start { "0" } else { "1" });
    }
    fs::write(&sheet, lines.join("\n") + "\n").unwrap();
    let out = ingest(&sheet);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let value: serde_json::Value = serde_json::from_slice(&fs::read(&rates).unwrap()).unwrap();
    assert_eq!(value["languages"][0]["fp"], 1);
    assert_eq!(value["languages"][0]["positives"], 3);
}
