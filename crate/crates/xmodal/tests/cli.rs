//! End-to-end checks of the command-line surface: the documented exit codes
//! and the basic artifact flow between subcommands.

use std::path::Path;
use std::process::Command;

use xmodal::trainer::{save_checkpoint, ModelBundle};

fn xmodal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xmodal"))
}

fn write_lines(path: &Path, lines: &[String]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn record(id: &str, language: &str, label: u8, split: &str, d_a: usize, d_t: usize) -> String {
    let audio: Vec<String> = (0..d_a).map(|i| format!("{}.5", i)).collect();
    let text: Vec<String> = (0..d_t).map(|i| format!("-{}.25", i)).collect();
    format!(
        r#"{{"id":"{id}","language":"{language}","label":{label},"split":"{split}","audio_features":[{}],"text_features":[{}]}}"#,
        audio.join(","),
        text.join(",")
    )
}

#[test]
fn gen_data_writes_manifest_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.jsonl");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"schema":1,"data":{"languages":["hi","ta"],"default_counts":{"hate":3,"nonhate":3}}}"#,
    )
    .unwrap();
    let output = xmodal()
        .args(["gen-data", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("Total: 12"), "stdout: {stdout}");
    assert!(out.exists());
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"schema":1,"train":{"no_such_knob":1}}"#).unwrap();
    let output = xmodal()
        .args(["gen-data", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x.jsonl"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_manifest_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let output = xmodal()
        .args(["protocol", "--data"])
        .arg(dir.path().join("absent.jsonl"))
        .arg("--out")
        .arg(dir.path().join("proto"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_corruption_exits_five() {
    let ok = xmodal().args(["gradcheck", "--seed", "7"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.matches("ok").count() >= 6, "stdout: {stdout}");

    let bad = xmodal()
        .args(["gradcheck", "--seed", "7", "--corrupt"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(5));
}

#[test]
fn single_class_eval_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.json");
    let bundle = ModelBundle::init(4, 3, 11).unwrap();
    save_checkpoint(&bundle, &ckpt).unwrap();
    let manifest = dir.path().join("one-class.jsonl");
    write_lines(
        &manifest,
        &(0..6)
            .map(|i| record(&format!("hi-h-{i:04}"), "hi", 1, "test", 4, 3))
            .collect::<Vec<_>>(),
    );
    let output = xmodal()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&manifest)
        .arg("--out")
        .arg(dir.path().join("report"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn finetune_dim_mismatch_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.json");
    let bundle = ModelBundle::init(4, 3, 11).unwrap();
    save_checkpoint(&bundle, &ckpt).unwrap();
    let manifest = dir.path().join("wider.jsonl");
    write_lines(
        &manifest,
        &(0..4)
            .map(|i| record(&format!("hi-n-{i:04}"), "hi", i % 2, "train", 5, 3))
            .collect::<Vec<_>>(),
    );
    let output = xmodal()
        .args(["finetune", "--data"])
        .arg(&manifest)
        .arg("--init")
        .arg(&ckpt)
        .arg("--out")
        .arg(dir.path().join("out.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn pretrain_finetune_eval_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"schema":1,
            "data":{"languages":["hi","ta"],"default_counts":{"hate":20,"nonhate":20}},
            "train":{"epochs":2}}"#,
    )
    .unwrap();
    let manifest = dir.path().join("corpus.jsonl");
    let pre = dir.path().join("pretrained.json");
    let fin = dir.path().join("finetuned.json");

    let run = |args: &mut Command| {
        let output = args.output().unwrap();
        assert_eq!(
            output.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        output
    };

    run(xmodal().args(["gen-data", "--config"]).arg(&cfg).arg("--out").arg(&manifest));
    run(xmodal()
        .args(["pretrain", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&manifest)
        .arg("--out")
        .arg(&pre));
    let fin_out = run(xmodal()
        .args(["finetune", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&manifest)
        .arg("--init")
        .arg(&pre)
        .arg("--out")
        .arg(&fin));
    let stdout = String::from_utf8_lossy(&fin_out.stdout);
    assert!(stdout.contains("alpha = 0.5"), "stdout: {stdout}");
    assert!(stdout.contains("fingerprint"), "stdout: {stdout}");

    run(xmodal()
        .args(["eval", "--checkpoint"])
        .arg(&fin)
        .arg("--data")
        .arg(&manifest)
        .arg("--out")
        .arg(dir.path().join("report")));
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("report.json").exists());
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("model,input,train_set,eval_set,language,acc,eer,f1,auc"));
}
