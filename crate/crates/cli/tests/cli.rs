use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn osc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osc")).args(args).output().expect("osc runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("osc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_trace_and_passes() {
    let out = scratch("basic.trace");
    let scn = fixtures().join("basic.scn");
    let o = osc(&["run", scn.to_str().unwrap(), "--trace", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("FAIL"));
    let golden = std::fs::read_to_string(fixtures().join("golden/basic.trace")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden);
}

#[test]
fn socket_transport_matches_golden() {
    let out = scratch("search-socket.trace");
    let scn = fixtures().join("search.scn");
    let o = osc(&["run", scn.to_str().unwrap(), "--transport", "socket", "--trace", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let golden = std::fs::read_to_string(fixtures().join("golden/search.trace")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden);
}

#[test]
fn check_golden_selected_suites() {
    let trace = fixtures().join("golden/revocation.trace");
    let o = osc(&["check", trace.to_str().unwrap(), "--suite", "revocation,trust"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.contains("PASS")).count(), 2, "{text}");
}

#[test]
fn check_flags_tampered_trace() {
    let golden = std::fs::read_to_string(fixtures().join("golden/basic.trace")).unwrap();
    // drop the receiving evaluation of the first delivery
    let lines: Vec<&str> = golden.lines().collect();
    let deliver = lines.iter().position(|l| l.starts_with("deliver(")).unwrap();
    let kept: Vec<&str> = lines
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != deliver - 1 && *i != deliver - 2)
        .map(|(_, l)| *l)
        .collect();
    let path = scratch("tampered.trace");
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let o = osc(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn unknown_suite_is_an_error() {
    let trace = fixtures().join("golden/basic.trace");
    let o = osc(&["check", trace.to_str().unwrap(), "--suite", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown suite `nonsense`"));
}

#[test]
fn missing_scenario_is_an_error() {
    let o = osc(&["run", "/nonexistent/x.scn"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fmt_prints_canonical_law_and_hash() {
    let law = fixtures().join("partner.law");
    let o = osc(&["fmt", law.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("law be_partner;"), "{text}");
    let err = String::from_utf8_lossy(&o.stderr);
    let hash = err.trim().strip_prefix("hash ").unwrap();
    assert_eq!(hash.len(), 64);

    // canonical text is a fixed point
    let path = scratch("canon.law");
    std::fs::write(&path, &text).unwrap();
    let again = osc(&["fmt", path.to_str().unwrap()]);
    assert_eq!(stdout(&again), text);
    assert_eq!(String::from_utf8_lossy(&again.stderr), err);
}

#[test]
fn fmt_rejects_broken_law() {
    let path = scratch("broken.law");
    std::fs::write(&path, "law broken;\nrule r1 :: adopted(X, Y) =>\n").unwrap();
    let o = osc(&["fmt", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
