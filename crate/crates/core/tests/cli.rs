use std::path::Path;
use std::process::{Command, Output};

fn uasep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uasep"))
        .args(args)
        .env_remove("UASEP_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&uasep(&[])), 2);
    assert_eq!(code(&uasep(&["separate"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = uasep(&["experiment", "--preset", "nope", "-o", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("table4"));
    assert_eq!(code(&uasep(&["gen", "--preset", "nope", "-o", s(dir.path())])), 2);
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.wav");
    let out = uasep(&["separate", "-i", s(&missing), "-o", s(dir.path())]);
    assert_eq!(code(&out), 3);
}

#[test]
fn deep_without_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&uasep(&["gen", "--preset", "desk", "-o", s(dir.path())])), 0);
    let mix = dir.path().join("mixture.wav");
    let out = uasep(&["separate", "-i", s(&mix), "--method", "deep", "-o", s(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gen_separate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = uasep(&["gen", "--preset", "lfm3", "--seed", "3", "-o", s(&data)]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(stdout(&gen).contains("effective config:"));
    for name in ["lfm1.wav", "lfm2.wav", "lfm3.wav", "reference_0.wav", "reference_2.wav", "mixture.wav"] {
        assert!(data.join(name).is_file(), "{name}");
    }
    let cfg = dir.path().join("lfm.json");
    std::fs::write(
        &cfg,
        r#"{"stft": {"frame_ms": 10.24, "hop_ms": 7.68, "window": "hamming"}}"#,
    )
    .unwrap();
    let refs: Vec<String> = (0..3).map(|i| s(&data.join(format!("reference_{i}.wav"))).to_string()).collect();
    let refs = refs.join(",");
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = uasep(&[
            "separate",
            "--config",
            s(&cfg),
            "-i",
            s(&data.join("mixture.wav")),
            "--sources",
            "3",
            "--references",
            &refs,
            "-o",
            s(&out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        for i in 0..3 {
            assert!(out_dir.join(format!("estimate_{i}.wav")).is_file());
            assert!(out_dir.join(format!("mask_{i}.pgm")).is_file());
        }
        assert!(std::fs::read_dir(&out_dir)
            .unwrap()
            .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
        reports.push(std::fs::read(out_dir.join("report.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/report.json")).unwrap()).unwrap();
    assert!(report["mean_xi"].as_f64().unwrap() > 0.9, "{report}");
}

#[test]
fn eval_of_references_against_themselves() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&uasep(&["gen", "--preset", "desk", "--sources", "2", "-o", s(dir.path())])), 0);
    let refs = format!(
        "{},{}",
        s(&dir.path().join("reference_0.wav")),
        s(&dir.path().join("reference_1.wav"))
    );
    let out_dir = dir.path().join("eval");
    let out = uasep(&["eval", "--estimates", &refs, "--references", &refs, "-o", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let m = report["xi_matrix"].as_array().unwrap();
    for (i, row) in m.iter().enumerate() {
        assert!((row[i].as_f64().unwrap() - 1.0).abs() < 1e-12, "{report}");
    }
    assert_eq!(report["permutation"], serde_json::json!([0, 1]));
}

fn digest(args: &[&str]) -> String {
    let o = uasep(args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("tensor digest ").map(str::to_string))
        .expect("digest line")
}

#[test]
fn zero_epochs_match_init_only() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let init = digest(&["train", "--arch", "rnn", "--init-only", "--seed", "4", "-o", s(&a)]);
    let zero = digest(&["train", "--arch", "rnn", "--epochs", "0", "--seed", "4", "-o", s(&b)]);
    assert_eq!(init, zero);
}
