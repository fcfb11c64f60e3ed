use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn announcer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_announcer")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_is_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    for (out, seed) in [(&a, "42"), (&b, "42"), (&c, "7")] {
        let o = announcer(&["run", "--duration", "60", "--seed", seed, "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 1200);
}

#[test]
fn bad_inputs_exit_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let cases = [
        ("scenario", r#"{"seed": 1, "avatar_count": "many"}"#, "avatar_count"),
        ("scenario", "{not json", "s.json"),
        ("config", r#"{"adapt": {"qoe": {"transition_duration": 9}}}"#, "adapt.qoe.transition_duration"),
        ("config", r#"{"director": {"patrol": {"altitude": 25, "wings": 2}}}"#, "director.patrol"),
    ];
    for (flag, body, field) in cases {
        let f = dir.path().join("s.json");
        fs::write(&f, body).unwrap();
        let o = announcer(&["run", &format!("--{flag}"), p(&f), "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(stderr(&o).contains(field), "{body}: {}", stderr(&o));
    }
    let o = announcer(&["run", "--scenario", "/nonexistent/s.json", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/s.json"));
    let o = announcer(&["verify-threshold", "--n", "0", "--f", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n:"));
    let o = announcer(&["sweep", "--param", "transition", "--values", "7", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = announcer(&["sweep", "--param", "colour", "--values", "1", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_threshold_prints_the_rate() {
    let o = announcer(&["verify-threshold", "--n", "1", "--f", "0.5", "--trials", "100000"]);
    let rate: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!((rate - 0.5).abs() <= 0.02, "{rate}");
    let o = announcer(&["verify-threshold", "--n", "25", "--f", "1", "--trials", "1000"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "1");
}

#[test]
fn sweep_and_storyboard_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_dir = dir.path().join("sweep");
    let o = announcer(&["sweep", "--param", "transition", "--values", "0,2", "--duration", "30", "--out", p(&sweep_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(sweep_dir.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("param,value,"));

    let log = dir.path().join("run.jsonl");
    assert!(announcer(&["run", "--duration", "120", "--seed", "42", "--out", p(&log)]).status.success());
    let frames = dir.path().join("frames");
    let o = announcer(&["storyboard", "--log", p(&log), "--out", p(&frames)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n = fs::read_dir(&frames).unwrap().count();
    assert!(n > 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), format!("{n} frames"));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"t\": 1}\n").unwrap();
    let o = announcer(&["storyboard", "--log", p(&bad), "--out", p(&frames)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn shipped_files_are_the_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let scenario = root.join("scenarios/default.json");
    let config = root.join("configs/default.json");
    assert_eq!(announcer_core::Scenario::load(&scenario).unwrap(), announcer_core::Scenario::campus(42));
    assert_eq!(announcer_core::EngineConfig::load(&config).unwrap(), announcer_core::EngineConfig::default());

    let dir = tempfile::tempdir().unwrap();
    let with_files = dir.path().join("files.jsonl");
    let builtin = dir.path().join("builtin.jsonl");
    let o = announcer(&["run", "--scenario", p(&scenario), "--config", p(&config), "--duration", "20", "--out", p(&with_files)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(announcer(&["run", "--duration", "20", "--seed", "42", "--out", p(&builtin)]).status.success());
    assert_eq!(fs::read(with_files).unwrap(), fs::read(builtin).unwrap());
}
