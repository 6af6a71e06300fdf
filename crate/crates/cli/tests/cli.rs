use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use focustrack_core::RunConfig;

fn focustrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_focustrack")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out-dir", path(dir)];
    args.extend_from_slice(extra);
    stdout(&focustrack(&args));
}

fn ids(mot: &str) -> Vec<i64> {
    let mut ids: Vec<i64> = mot.lines().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn track(dir: &Path, extra: &[&str]) -> String {
    let dets = dir.join("det.txt");
    let feats = dir.join("det.ftfv");
    let mut args = extra.to_vec();
    args.extend_from_slice(&["track", path(&dets), "--features", path(&feats)]);
    stdout(&focustrack(&args))
}

fn metric(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .parse()
        .unwrap()
}

#[test]
fn single_target_keeps_one_identity() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--targets", "1", "--frames", "30", "--motion", "linear"]);
    let out = track(dir.path(), &[]);
    assert_eq!(ids(&out).len(), 1);
    assert_eq!(out.lines().count(), 30);
}

#[test]
fn gap_longer_than_patience_starts_new_identity() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--targets", "1", "--frames", "40", "--motion", "linear", "--occlusion", "0:10:8"]);
    assert_eq!(ids(&track(dir.path(), &["--set", "patience_w=5"])).len(), 2);
    assert_eq!(ids(&track(dir.path(), &["--set", "patience_w=20"])).len(), 1);
}

#[test]
fn simulate_and_track_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let noisy = ["--noise-std", "1", "--descriptor-noise", "0.1"];
    for d in [&a, &b] {
        let mut args = vec!["--set", "seed=7", "simulate", "--out-dir", path(d.path())];
        args.extend_from_slice(&noisy);
        stdout(&focustrack(&args));
    }
    let mut args = vec!["--set", "seed=8", "simulate", "--out-dir", path(c.path())];
    args.extend_from_slice(&noisy);
    stdout(&focustrack(&args));
    for f in ["gt.txt", "det.txt", "det.ftfv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.path().join("det.txt")).unwrap(), fs::read(c.path().join("det.txt")).unwrap());
    assert_eq!(track(a.path(), &[]), track(b.path(), &[]));
}

#[test]
fn tracking_clean_crossing_scene_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &[]);
    let result = dir.path().join("result.txt");
    fs::write(&result, track(dir.path(), &[])).unwrap();
    let report = stdout(&focustrack(&["evaluate", path(&dir.path().join("gt.txt")), path(&result)]));
    assert_eq!(metric(&report, "mota"), 1.0);
    assert_eq!(metric(&report, "idf1"), 1.0);
    assert_eq!(metric(&report, "ids"), 0.0);
}

#[test]
fn ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--frames", "20"]);
    let gt = dir.path().join("gt.txt");
    let report = stdout(&focustrack(&["evaluate", path(&gt), path(&gt)]));
    assert_eq!(metric(&report, "mota"), 1.0);
    assert_eq!(metric(&report, "motp"), 1.0);
    assert_eq!(metric(&report, "fp"), 0.0);
}

#[test]
fn interpolating_gap_free_result_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--targets", "3", "--frames", "25"]);
    let result = dir.path().join("result.txt");
    let tracked = track(dir.path(), &[]);
    fs::write(&result, &tracked).unwrap();
    for method in ["linear2d", "se3_linear"] {
        let filled = stdout(&focustrack(&["interpolate", path(&result), "--method", method]));
        assert_eq!(filled, tracked, "{method}");
    }
}

#[test]
fn interpolation_fills_a_gap() {
    let dir = tempfile::tempdir().unwrap();
    let result = dir.path().join("result.txt");
    fs::write(&result, "1,4,10,20,40,100,1,-1,-1,-1\n5,4,50,20,40,100,1,-1,-1,-1\n").unwrap();
    let out = dir.path().join("filled.txt");
    stdout(&focustrack(&["interpolate", path(&result), "--method", "linear2d", "-o", path(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 5);
    let third: Vec<f64> = text.lines().nth(2).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(&third[..6], &[3.0, 4.0, 30.0, 20.0, 40.0, 100.0]);
}

#[test]
fn toy_assignment_matches_hand_computation() {
    let scene = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_scene.txt");
    let out = stdout(&focustrack(&["assign", path(&scene)]));
    let lines: Vec<&str> = out.lines().collect();
    // Top IoUs among foreground anchors: 0.9 + 0.8 + 0.05 + 0.05 rounds to 2.
    assert_eq!(lines[0], "gt 0 k=2 positives=0,1");
    let cost = |iou: f64, cls: f64| -cls.ln() - 3.0 * (iou + 1e-8).ln();
    let expected = [
        ("0", "0", cost(0.9, 0.5)),
        ("1", "0", cost(0.8, 0.5)),
        ("2", "-", cost(0.05, 0.5)),
        ("3", "-", cost(0.05, 0.5)),
        ("4", "-", cost(1.0, 0.9) + 1e5),
    ];
    for (line, (a, owner, c)) in lines[1..6].iter().zip(expected) {
        assert_eq!(*line, format!("anchor {a} owner={owner} cost={c:.6}"));
    }
    assert!(lines[6].starts_with("loss cls=0.693147 "), "{}", lines[6]);
}

#[test]
fn exit_codes() {
    assert_eq!(focustrack(&["config"]).status.code(), Some(0));
    assert_eq!(focustrack(&["--help"]).status.code(), Some(0));
    assert_eq!(focustrack(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(focustrack(&["--set", "no_such_key=1", "config"]).status.code(), Some(1));
    assert_eq!(focustrack(&["--set", "w_app=abc", "config"]).status.code(), Some(1));
    assert_eq!(focustrack(&["interpolate", "x.txt", "--method", "cubic"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let out = focustrack(&["track", path(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1,1,10,10,x,10,1\n").unwrap();
    let out = focustrack(&["track", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn help_lists_every_config_key() {
    let help = stdout(&focustrack(&["--help"]));
    let defaults = RunConfig::default();
    for key in RunConfig::key_names() {
        let row = help
            .lines()
            .find(|l| l.split_whitespace().next() == Some(key))
            .unwrap_or_else(|| panic!("{key} missing from help"));
        assert_eq!(row.split_whitespace().nth(1), Some(defaults.get(key).unwrap().as_str()), "{key}");
    }
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# tuned\nw_app = 0.7\nw_mot = 0.3\npatience_w = 12\n").unwrap();
    let text = stdout(&focustrack(&["--config", path(&file), "--set", "patience_w=9", "config"]));
    let value = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.trim_start().strip_prefix('=')))
            .unwrap()
            .trim()
            .to_string()
    };
    assert_eq!(value("w_app"), "0.7");
    assert_eq!(value("patience_w"), "9");

    // The printed config loads back to the same text.
    let echo = dir.path().join("echo.cfg");
    fs::write(&echo, &text).unwrap();
    assert_eq!(stdout(&focustrack(&["--config", path(&echo), "config"])), text);

    fs::write(&file, "w_app = 0\nw_mot = 0\n").unwrap();
    assert_eq!(focustrack(&["--config", path(&file), "config"]).status.code(), Some(1));
}

#[test]
fn batch_matches_single_runs() {
    let root = tempfile::tempdir().unwrap();
    let mut manifest = String::new();
    let mut singles = Vec::new();
    for (i, seed) in ["3", "4", "5"].into_iter().enumerate() {
        let seq = root.path().join(format!("seq{i}"));
        let set = format!("seed={seed}");
        stdout(&focustrack(&["--set", &set, "simulate", "--out-dir", path(&seq), "--frames", "30", "--noise-std", "1"]));
        singles.push(track(&seq, &[]));
        manifest.push_str(&format!("seq{i}/det.txt out{i}.txt seq{i}/det.ftfv\n"));
    }
    let list = root.path().join("batch.txt");
    fs::write(&list, manifest).unwrap();
    stdout(&focustrack(&["track", "--batch", path(&list), "--jobs", "2"]));
    for (i, single) in singles.iter().enumerate() {
        assert_eq!(&fs::read_to_string(root.path().join(format!("out{i}.txt"))).unwrap(), single);
    }
}
