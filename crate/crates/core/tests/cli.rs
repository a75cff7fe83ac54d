use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn pwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwin")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_configs_validate() {
    for name in ["desk.cfg", "ipw.cfg", "pedestrian.cfg", "face.cfg", "scene-file.cfg"] {
        let out = pwin(&["validate-config", "--config", s(&configs().join(name))]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn missing_radius_table_is_a_config_error() {
    let text = std::fs::read_to_string(configs().join("desk.cfg")).unwrap();
    let start = text.find("[rejection]").unwrap();
    let end = text.find("[acceptance]").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.cfg");
    std::fs::write(&path, format!("{}{}", &text[..start], &text[end..])).unwrap();
    let out = pwin(&["run", "--config", s(&path), "--detector", "ipw", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rejection"), "{err}");
    // Nothing ran, so nothing was written.
    assert!(!dir.path().join("traces.jsonl").exists());
}

#[test]
fn unknown_key_and_unknown_detector_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.cfg");
    let text = std::fs::read_to_string(configs().join("ipw.cfg")).unwrap();
    std::fs::write(&path, text.replace("trials = 1", "trails = 1")).unwrap();
    assert_eq!(pwin(&["validate-config", "--config", s(&path)]).status.code(), Some(2));
    let cfg = configs().join("ipw.cfg");
    let out = pwin(&["run", "--config", s(&cfg), "--detector", "nope", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = pwin(&["run", "--config", s(&configs().join("desk.cfg")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "several detectors without --detector");
}

#[test]
fn run_is_byte_identical_and_leaves_config_alone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("ipw.cfg");
    let before = std::fs::read(&cfg).unwrap();
    let run = |sub: &str, seed: &str| {
        let out = dir.path().join(sub);
        let o = pwin(&["run", "--config", s(&cfg), "--seed", seed, "--quiet", "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
        (std::fs::read(out.join("traces.jsonl")).unwrap(), std::fs::read(out.join("curves.csv")).unwrap())
    };
    let a = run("a", "42");
    let b = run("b", "42");
    let c = run("c", "43");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    assert_eq!(std::fs::read(&cfg).unwrap(), before);
    let lines = String::from_utf8(a.0).unwrap();
    assert_eq!(lines.lines().count(), 20);
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["detector"], "ipw");
        assert_eq!(v["trace"]["records"].as_array().unwrap().len(), v["metrics"]["windows_used"].as_u64().unwrap() as usize);
    }
    let timing = std::fs::read_to_string(dir.path().join("a/timing.csv")).unwrap();
    assert!(timing.starts_with("command,runs,seconds\nrun,20,"));
}

#[test]
fn compare_writes_budget_by_detector_table() {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(configs().join("desk.cfg")).unwrap();
    let path = dir.path().join("small.cfg");
    std::fs::write(&path, src.replace("count = 200", "count = 6").replace("budgets = [240, 337, 481, 674, 963]", "budgets = [100, 300]"))
        .unwrap();
    let out_dir = dir.path().join("out");
    let o = pwin(&["compare", "--config", s(&path), "--quiet", "--jobs", "2", "--out", s(&out_dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(out_dir.join("compare.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["budget", "mpw", "ipw", "sipw"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "100");
    for r in &rows {
        for cell in r.iter().skip(1) {
            let v: f64 = cell.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let eff = std::fs::read_to_string(out_dir.join("efficiency.csv")).unwrap();
    assert!(eff.starts_with("detector,reference,reference_budget,"));
    assert_eq!(eff.lines().count(), 1 + 2 * 2);
    assert_eq!(std::fs::read_to_string(out_dir.join("runs.jsonl")).unwrap().lines().count(), 6 * 2 * 3);
}

#[test]
fn sweep_and_curves_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(configs().join("ipw.cfg")).unwrap();
    let path = dir.path().join("small.cfg");
    std::fs::write(&path, src.replace("count = 20", "count = 3")).unwrap();
    let out = dir.path().join("sweep");
    let o = pwin(&["sweep", "--config", s(&path), "--quiet", "--t-high", "-1.0,0.0,1.5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
    let o = pwin(&["sweep", "--config", s(&path), "--t-high", "-3.0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "t_high below t_low");

    let out = dir.path().join("curves");
    let o = pwin(&["curves", "--config", s(&path), "--quiet", "--out", s(&out)]);
    assert!(o.status.success());
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let mut lines = curves.lines();
    assert!(lines.next().unwrap().starts_with("run,i,n_rejected"));
    // Row 0 plus one row per window, for each of the three runs.
    assert_eq!(lines.count(), 3 * (963 + 1));
}
