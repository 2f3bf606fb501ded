use std::fs;
use std::process::Command;

use sia_sim::channel::ExtendedChannel;
use sia_sim::experiments::CSV_HEADER;

fn sia_sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sia-sim"))
}

#[test]
fn sweep_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let json = dir.path().join("summary.json");
    let status = sia_sim()
        .args(["--n", "2", "--trials", "20", "--snr-start", "0", "--snr-stop", "20", "--snr-step", "10"])
        .args(["--gain-boost", "23", "1000", "--seed", "9", "--slope-from", "0"])
        .arg("--out")
        .arg(&csv)
        .arg("--summary")
        .arg(&json)
        .status()
        .unwrap();
    assert!(status.success());

    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 3 * 2);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 9);
    assert_eq!(summary["config"]["gain_boosts"][0]["factor"], 1000.0);
    assert!(summary["dof_slopes"]["strong-ia"].is_number());
    assert_eq!(summary["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn single_scheme_and_bounded_model() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let status = sia_sim()
        .args(["--n", "1", "--trials", "5", "--snr-start", "10", "--snr-stop", "10", "--scheme", "linear"])
        .args(["--gain-model", "bounded", "--h-min", "0.2", "--h-max", "2"])
        .arg("--out")
        .arg(&csv)
        .arg("--summary")
        .arg(dir.path().join("s.json"))
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("10,linear-fallback,5,"));
}

#[test]
fn bad_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        sia_sim()
            .args(extra)
            .arg("--out")
            .arg(dir.path().join("x.csv"))
            .arg("--summary")
            .arg(dir.path().join("x.json"))
            .output()
            .unwrap()
    };
    for extra in [
        &["--trials", "0"][..],
        &["--n", "0"],
        &["--snr-start", "20", "--snr-stop", "10"],
        &["--gain-boost", "24", "10"],
        &["--gain-boost", "23", "abc"],
        &["--gain-model", "bounded", "--h-min", "3", "--h-max", "1"],
        &["--scheme", "neither"],
    ] {
        let out = run(extra);
        assert!(!out.status.success(), "accepted {extra:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn unwritable_output_exits_nonzero() {
    let out = sia_sim()
        .args(["--n", "1", "--trials", "1", "--snr-start", "0", "--snr-stop", "0"])
        .args(["--out", "/nonexistent-dir/x.csv", "--summary", "/nonexistent-dir/x.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn channel_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("channels.txt");
    let status = sia_sim()
        .args(["--n", "2", "--trials", "4", "--snr-start", "0", "--snr-stop", "0", "--seed", "3"])
        .arg("--out")
        .arg(dir.path().join("d.csv"))
        .arg("--summary")
        .arg(dir.path().join("d.json"))
        .arg("--dump-channels")
        .arg(&dump)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&dump).unwrap();
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        let ch = ExtendedChannel::from_dump_record(line).unwrap();
        assert_eq!(ch.seed(), 3);
        assert_eq!(ch.tau(), 4);
        assert_eq!(ch.to_dump_record(), line);
    }
}
