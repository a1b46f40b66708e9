use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zs_apa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zs-apa"))
        .args(args)
        .env_remove("ZS_APA_WORKERS")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_wav(path: &Path, samples: impl IntoIterator<Item = f32>) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

/// Five clips of rising roughness plus a manifest scoring them inversely.
fn corpus(dir: &Path) -> String {
    let mut manifest = String::new();
    for i in 0..5 {
        let name = format!("c{i}.wav");
        write_wav(&dir.join(&name), zs_apa::synthetic_signal(0.1 * i as f32, 16_000, i));
        manifest.push_str(&format!(
            "{{\"utt_id\":\"c{i}\",\"wav\":\"{name}\",\"score\":{}}}\n",
            9 - i
        ));
    }
    let path = dir.join("manifest.jsonl");
    fs::write(&path, manifest).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(zs_apa(&["--help"]).status.code(), Some(0));
    assert_eq!(zs_apa(&["score", "--help"]).status.code(), Some(0));
    assert_eq!(zs_apa(&[]).status.code(), Some(1));
    assert_eq!(zs_apa(&["frobnicate"]).status.code(), Some(1));

    let out = zs_apa(&["score", "--wav", "a.wav"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--mock"), "{}", stderr(&out));
    assert_eq!(zs_apa(&["score", "--wav", "a.wav", "--mock", "--model", "x"]).status.code(), Some(1));
    assert_eq!(zs_apa(&["score", "--wav", "a.wav", "--mock", "--strategy", "sideways"]).status.code(), Some(1));
}

#[test]
fn score_regular_has_one_repetition_per_slice() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("a.wav");
    write_wav(&wav, zs_apa::synthetic_signal(0.3, 16_000, 1));
    let out = zs_apa(&["score", "--wav", wav.to_str().unwrap(), "--mock", "--strategy", "regular", "--slices", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["config"]["k"], 4);
    assert_eq!(json["per_repetition_mismatches"].as_array().unwrap().len(), 4);
    assert_eq!(json["T"], 50);
    assert_eq!(json["utterance_id"], "a");
    assert!(json["config"]["seed"].is_null());
}

#[test]
fn score_constant_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("constant.wav");
    write_wav(&wav, std::iter::repeat_n(0.25, 32_000));
    let out = zs_apa(&["score", "--wav", wav.to_str().unwrap(), "--mock"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["score"].as_f64(), Some(0.0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"score\": 0.0"));
}

#[test]
fn score_bytes_depend_only_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("b.wav");
    write_wav(&wav, zs_apa::synthetic_signal(0.4, 24_000, 2));
    let wav = wav.to_str().unwrap();
    let run = |seed: &str| zs_apa(&["score", "--wav", wav, "--mock", "--seed", seed]).stdout;
    assert_eq!(run("13"), run("13"));
    assert_ne!(run("13"), run("14"));
}

#[test]
fn score_io_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.wav");
    let out = zs_apa(&["score", "--wav", missing.to_str().unwrap(), "--mock"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not found"));
    let out = zs_apa(&["score", "--wav", missing.to_str().unwrap(), "--model", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_writes_result_and_prints_pcc() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let out_path = dir.path().join("result.json");
    let out = Command::new(env!("CARGO_BIN_EXE_zs-apa"))
        .args(["evaluate", "--manifest", &manifest, "--mock", "--out", out_path.to_str().unwrap(), "--seeds", "13,21"])
        .env("ZS_APA_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.trim().contains(" ± "), "{line}");
    let result: serde_json::Value = serde_json::from_slice(&fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(result["per_utterance"].as_array().unwrap().len(), 10);
    assert_eq!(result["config"]["seeds"], serde_json::json!([13, 21]));
    assert_eq!(result["config"]["p"], 20.0);
    let mean = result["pcc_mean"].as_f64().unwrap();
    assert!(line.starts_with(&format!("{mean:.4}")));
}

#[test]
fn evaluate_manifest_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let out_path = dir.path().join("r.json");
    let bad = dir.path().join("bad.jsonl");
    let cases = [
        ("{\"utt_id\":\"c0\",\"wav\":\"c0.wav\",\"score\":5}\n{oops\n", ":2:"),
        ("{\"utt_id\":\"c0\",\"wav\":\"c0.wav\",\"score\":5}\n{\"utt_id\":\"c0\",\"wav\":\"c1.wav\",\"score\":4}\n", "duplicate"),
        ("{\"utt_id\":\"zz\",\"wav\":\"nope.wav\",\"score\":5}\n{\"utt_id\":\"c0\",\"wav\":\"c0.wav\",\"score\":5}\n", "missing audio"),
    ];
    for (text, needle) in cases {
        fs::write(&bad, text).unwrap();
        let out = zs_apa(&["evaluate", "--manifest", bad.to_str().unwrap(), "--mock", "--out", out_path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(stderr(&out).contains(needle), "{}", stderr(&out));
    }
}

#[test]
fn sweep_emits_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let out = zs_apa(&["sweep", "--manifest", &manifest, "--mock", "--param", "slices", "--values", "2,5,10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "param,value,pcc_mean,pcc_std");
    assert!(lines[1].starts_with("slices,2,"));
    assert!(lines[3].starts_with("slices,10,"));

    let file = dir.path().join("sweep.csv");
    let out = zs_apa(&[
        "sweep", "--manifest", &manifest, "--mock", "--param", "mask-len", "--values", "2,4", "--seeds", "13",
        "--out", file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert_eq!(fs::read_to_string(&file).unwrap().lines().count(), 3);
}

#[test]
fn sweep_usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let base = ["sweep", "--manifest", manifest.as_str(), "--mock"];
    let run = |extra: &[&str]| zs_apa(&[&base[..], extra].concat());
    assert_eq!(run(&["--param", "depth", "--values", "1"]).status.code(), Some(1));
    assert_eq!(run(&["--param", "mask-prob", "--values", "0"]).status.code(), Some(1));
    assert_eq!(run(&["--param", "mask-prob", "--values", "0.2,1.5"]).status.code(), Some(1));
    assert_eq!(run(&["--param", "layer", "--values", "13"]).status.code(), Some(1));
    assert_eq!(run(&["--param", "mask-len", "--values", "x"]).status.code(), Some(1));
}

fn speechocean(dir: &Path, scores: &str) {
    fs::write(dir.join("scores.json"), scores).unwrap();
    let spk = dir.join("WAVE").join("SPEAKER0001");
    fs::create_dir_all(&spk).unwrap();
    for id in ["000010011", "000010035", "000010053"] {
        write_wav(&spk.join(format!("{id}.WAV")), std::iter::repeat_n(0.1, 800));
    }
}

#[test]
fn convert_manifest_cases() {
    let dir = tempfile::tempdir().unwrap();
    speechocean(
        dir.path(),
        r#"{"000010011": {"total": 8}, "000010035": {"total": 6}, "000010053": {"total": 9.5}}"#,
    );
    let out_path = dir.path().join("m.jsonl");
    let args = |scores: &str| {
        vec![
            "convert-manifest".to_string(),
            "--scores".into(),
            dir.path().join(scores).to_string_lossy().into_owned(),
            "--wav-dir".into(),
            dir.path().join("WAVE").to_string_lossy().into_owned(),
            "--out".into(),
            out_path.to_string_lossy().into_owned(),
        ]
    };
    let run = |scores: &str| {
        let a = args(scores);
        zs_apa(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let out = run("scores.json");
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "3");
    let manifest = fs::read_to_string(&out_path).unwrap();
    assert_eq!(manifest.lines().count(), 3);
    assert!(manifest.lines().nth(2).unwrap().contains("\"score\":9.5"));

    // the converted manifest is directly usable
    let result = dir.path().join("r.json");
    let eval = zs_apa(&["evaluate", "--manifest", out_path.to_str().unwrap(), "--mock", "--out", result.to_str().unwrap()]);
    assert_ne!(eval.status.code(), Some(1), "{}", stderr(&eval));

    fs::write(dir.path().join("empty.json"), "").unwrap();
    assert_eq!(run("empty.json").status.code(), Some(2));
    fs::write(dir.path().join("range.json"), r#"{"000010011": {"total": 11}}"#).unwrap();
    let out = run("range.json");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("11"));

    fs::write(dir.path().join("extra.json"), r#"{"000010011": {"total": 8}, "000099999": {"total": 2}}"#).unwrap();
    let out = run("extra.json");
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
    assert!(stderr(&out).contains("000099999"));
}
