use std::path::Path;
use std::process::{Command, Output};

fn frailwatch(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_frailwatch"));
    cmd.args(args).env("RUST_LOG", "error");
    match threads {
        Some(n) => cmd.env("FRAILWATCH_THREADS", n),
        None => cmd.env_remove("FRAILWATCH_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn code(args: &[&str]) -> (i32, String) {
    let out = frailwatch(args, None);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&["--help"]).0, 0);
    assert_eq!(code(&["synth", "--help"]).0, 0);
}

#[test]
fn usage_errors_exit_one_with_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (c, err) = code(&[]);
    assert_eq!(c, 1);
    assert!(err.starts_with("ERROR:"), "{err}");
    let (c, err) = code(&["synth", "--out", p(&out)]);
    assert_eq!(c, 1);
    assert!(err.contains("--seed"), "{err}");
    assert_eq!(code(&["bogus"]).0, 1);
    assert_eq!(code(&["synth", "--seed", "1", "--participants", "P9", "--out", p(&out)]).0, 1);

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"not_a_key": 3}"#).unwrap();
    let (c, err) = code(&["synth", "--seed", "1", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(c, 1);
    assert!(err.starts_with("ERROR:"), "{err}");
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let (c, err) = code(&["extract", "--in", p(&missing), "--out", p(&dir.path().join("o"))]);
    assert_eq!(c, 2);
    assert!(err.starts_with("ERROR:"), "{err}");
    let (c, _) = code(&["report", "--in", p(dir.path()), "--out", p(&dir.path().join("r"))]);
    assert_eq!(c, 2);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), std::fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            v.extend(walk(&path));
        } else {
            v.push(path);
        }
    }
    v
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("synth");
    let s = frailwatch(&["synth", "--seed", "4", "--participants", "P1", "--duration-scale", "0.3", "--out", p(&synth)], None);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    assert!(synth.join("study_config.json").exists());
    let mut runs = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("sweep{threads}"));
        let r = frailwatch(
            &["sweep-windows", "--seed", "4", "--windows", "60,300", "--in", p(&synth), "--out", p(&out)],
            Some(threads),
        );
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        runs.push(files(&out));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
}
