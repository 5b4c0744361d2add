mod common;

use atlc_cli::config::ScenarioFile;
use atlc_cli::output::{parse_trajectory, summary_row, TRAJECTORY_HEADER};
use common::{atlc, code, s, stderr, write};

fn read(p: &std::path::Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn atlc_with_weak_brakes_exits_clean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.json", r#"{"kind": "atlc", "cd": 0.3}"#);
    let out = dir.path().join("out");
    let r = atlc(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let summary = read(&out.join("summary.csv"));
    assert!(summary.lines().nth(1).unwrap().starts_with("a,atlc,ok,"));
}

#[test]
fn fixed_tlc_exits_unsafe() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.json", r#"{"kind": "tlc", "tau_fixed": 0.5, "cd": 0.7}"#);
    let out = dir.path().join("out");
    let r = atlc(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    let events = read(&out.join("events.csv"));
    assert!(events.lines().skip(1).any(|l| l.split(',').nth(6) == Some("0")));
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = atlc(&[
        "run",
        "--config",
        s(&dir.path().join("nope.json")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("nope.json"));
}

#[test]
fn zero_radius_box_is_zeno() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "z.json", r#"{"box_under": 0, "box_over": 0, "T": 2}"#);
    let out = dir.path().join("out");
    let r = atlc(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&r), 3, "{}", stderr(&r));
    assert!(stderr(&r).contains("Zeno"));
    // The partial log is still written.
    let summary = read(&out.join("summary.csv"));
    assert!(summary.contains(",zeno,"));
    assert!(read(&out.join("trajectory.csv")).lines().count() > 1);
}

#[test]
fn malformed_configs_report_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write(dir.path(), "u.json", "{\n  \"cd\": 0.4,\n  \"brake\": 1\n}\n");
    let r = atlc(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    let msg = stderr(&r);
    assert!(msg.contains("brake") && msg.contains("line 3"), "{msg}");

    let cfg = write(dir.path(), "v.json", "{\n  \"cd\": \"lots\"\n}\n");
    let r = atlc(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("line 2"), "{}", stderr(&r));

    let cfg = write(dir.path(), "w.json", r#"{"cd": -1}"#);
    let r = atlc(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&r), 1);

    let cfg = write(dir.path(), "x.json", r#"{"cd": 0.4"#);
    let r = atlc(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    assert!(!out.exists());
}

#[test]
fn overrides_patch_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.json", r#"{"kind": "atlc"}"#);
    let out = dir.path().join("out");
    let r = atlc(&[
        "run", "--config", s(&cfg), "--set", "kind=hocbf", "--set", "p1=0.3", "--set", "p2=0.3",
        "--set", "T=2", "--set", "id=patched", "--out", s(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let summary = read(&out.join("summary.csv"));
    assert!(summary.contains("patched,hocbf,ok"), "{summary}");
    let last = read(&out.join("trajectory.csv")).lines().last().unwrap().to_string();
    assert!(last.starts_with("2,"), "{last}");

    let r = atlc(&["run", "--config", s(&cfg), "--set", "bogus=1", "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("bogus"));
    let r = atlc(&["run", "--config", s(&cfg), "--set", "novalue", "--out", s(&out)]);
    assert_eq!(code(&r), 1);
}

#[test]
fn trajectory_layout_and_summary_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.json", r#"{"kind": "tlc", "cd": 0.4, "T": 12}"#);
    let out = dir.path().join("out");
    let r = atlc(&["run", "--config", s(&cfg), "--out", s(&out), "--trace-candidates"]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    let text = read(&out.join("trajectory.csv"));
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header, TRAJECTORY_HEADER);

    let mut events = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 11);
        // tau and dt_inter_event appear together, only on event rows.
        assert_eq!(f[4].is_empty(), f[10].is_empty(), "{line}");
        if !f[10].is_empty() {
            events += 1;
        }
        for x in [f[0], f[1], f[2], f[3], f[5], f[6]] {
            let digits = x.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
            assert!(digits.trim_start_matches('0').len() <= 9, "{x}");
        }
    }
    let event_rows = read(&out.join("events.csv")).lines().count() - 1;
    assert_eq!(events, event_rows);

    let parsed = parse_trajectory(&text).unwrap();
    let file = ScenarioFile {
        cd: 0.4,
        ..ScenarioFile::default()
    };
    let cfg = file.controller_config();
    let recomputed = parsed.summary(&cfg.params, cfg.slack_cap);
    let row = summary_row("r", "tlc", "unsafe", &recomputed).join(",");
    let written = read(&out.join("summary.csv"));
    assert_eq!(written.lines().nth(1).unwrap(), row);
    assert!(recomputed.min_h < 0.0 && recomputed.infeasible_events > 0);

    // Pointwise TLC has no candidate tables.
    assert!(!out.join("candidates.csv").exists());
}

#[test]
fn output_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.json", r#"{"cd": 0.4, "T": 6}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let r = atlc(&["run", "--config", s(&cfg), "--out", s(out), "--trace-candidates"]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    for name in ["trajectory.csv", "events.csv", "summary.csv", "candidates.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let candidates = read(&a.join("candidates.csv"));
    let first_event: Vec<&str> = candidates.lines().skip(1).filter(|l| l.starts_with("0,")).collect();
    assert_eq!(first_event.len(), 40);
    assert_eq!(first_event.iter().filter(|l| l.ends_with(",1")).count(), 1);
}
