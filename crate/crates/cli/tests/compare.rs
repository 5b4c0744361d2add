mod common;

use common::{atlc, code, s, stderr, write};

#[test]
fn suite_produces_one_row_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    std::fs::create_dir(&suite).unwrap();
    write(&suite, "b.json", r#"{"kind": "hocbf", "p1": 0.3, "p2": 0.3, "T": 3}"#);
    write(&suite, "a.json", r#"{"id": "fast", "kind": "atlc", "T": 3}"#);
    write(&suite, "notes.txt", "ignored");
    let out = dir.path().join("out");
    let r = atlc(&["compare", "--dir", s(&suite), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "scenario,min_h,infeasible_count,event_count,effort_integral,mean_abs_du");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("fast,"));
    assert!(lines[2].starts_with("b,"));
    for id in ["fast", "b"] {
        assert!(out.join(id).join("trajectory.csv").exists());
    }
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("scenario") && stdout.contains("fast"));
}

#[test]
fn empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = atlc(&["compare", "--dir", s(dir.path()), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("no scenario"));
}

#[test]
fn duplicate_ids_report_both_paths() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "one.json", r#"{"id": "same"}"#);
    let b = write(dir.path(), "two.json", r#"{"id": "same", "cd": 0.7}"#);
    let out = dir.path().join("out");
    let r = atlc(&["compare", "--dir", s(dir.path()), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    let msg = stderr(&r);
    assert!(msg.contains(s(&a)) && msg.contains(s(&b)), "{msg}");
    assert!(!out.exists());
}

#[test]
fn parse_failure_aborts_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a_good.json", r#"{"T": 1}"#);
    write(dir.path(), "b_bad.json", r#"{"T": 1, "speed": 3}"#);
    let out = dir.path().join("out");
    let r = atlc(&["compare", "--dir", s(dir.path()), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("b_bad.json"));
    assert!(!out.exists());
}

#[test]
fn failed_run_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "ok.json", r#"{"T": 1}"#);
    write(dir.path(), "zeno.json", r#"{"box_under": 0, "box_over": 0, "T": 1}"#);
    let out = dir.path().join("out");
    let r = atlc(&["compare", "--dir", s(dir.path()), "--out", s(&out)]);
    assert_eq!(code(&r), 3);
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}
