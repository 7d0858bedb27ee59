//! The `twostream` binary: exit codes, diagnostics and file contracts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use twostream::manifest::read_manifest;
use twostream::tsr::{self, Dtype};
use twostream::Tensor;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twostream"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const DESK: &str = "num_classes = 2\nbatch = 4\nbase_lr = 0.01\nlr_step = 5\nlr_stop = 5\ncanvas_w = 32\n\
                    canvas_h = 24\nscale_set = 24,16\nout_size = 16\nhidden = 8\nclock = none\n";

#[test]
fn synth_writes_one_line_per_video() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["synth", "--out", "d", "--classes", "2", "--videos", "10", "--frames", "30"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["rgb.tsv", "flow.tsv"] {
        let recs = read_manifest(dir.path().join("d").join(name)).unwrap();
        assert_eq!(recs.len(), 20);
        assert!(recs.iter().all(|r| r.num_frames == 30));
    }
}

#[test]
fn adapt_writes_twenty_channels() {
    let dir = tempfile::tempdir().unwrap();
    let w = Tensor::from_fn(&[6, 3, 5, 5], |i| i as f64 / 100.0);
    tsr::write(dir.path().join("w.tsr"), &w, Dtype::F64).unwrap();
    let out = run(dir.path(), &["adapt", "--input", "w.tsr", "--out", "a.tsr", "--channels", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (a, _) = tsr::read(dir.path().join("a.tsr")).unwrap();
    assert_eq!(a.shape(), &[6, 20, 5, 5]);
}

#[test]
fn flow_encode_quantizes() {
    let dir = tempfile::tempdir().unwrap();
    let f = Tensor::new(vec![2, 1, 3], vec![-20.0, 0.0, 2.0, 20.0, 50.0, -50.0]).unwrap();
    tsr::write(dir.path().join("f.tsr"), &f, Dtype::F64).unwrap();
    let out = run(dir.path(), &["flow-encode", "--input", "f.tsr", "--out", "q.tsr", "--bound", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (q, dtype) = tsr::read(dir.path().join("q.tsr")).unwrap();
    assert_eq!(dtype, Dtype::U8);
    assert_eq!(q.data(), &[0.0, 128.0, 140.0, 255.0, 255.0, 0.0]);
}

#[test]
fn unknown_config_key_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "num_classes = 2\nlearning_rate = 1\n").unwrap();
    let out = run(dir.path(), &["augment-preview", "--config", "bad.cfg", "--out", "p"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error[config]:") && err.contains("learning_rate"), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert!(!dir.path().join("p").exists());
}

#[test]
fn malformed_manifest_aborts_before_training() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["synth", "--out", "d", "--classes", "2", "--videos", "1", "--frames", "4"]).status.success());
    fs::write(dir.path().join("c.cfg"), DESK).unwrap();
    let good = fs::read_to_string(dir.path().join("d/rgb.tsv")).unwrap();
    fs::write(dir.path().join("d/bad.tsv"), format!("{good}rgb/c00_v000.tsr\t0\tfour\trgb\n")).unwrap();
    let out = run(dir.path(), &["train", "--config", "c.cfg", "--manifest", "d/bad.tsv", "--out", "t"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error[manifest]:") && err.contains("line 3"), "{err}");
    assert!(!dir.path().join("t").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["synth", "--out", "d", "--classes", "2", "--videos", "1", "--frames", "4"]).status.success());
    fs::write(dir.path().join("c.cfg"), DESK).unwrap();
    let out = run(
        dir.path(),
        &["train", "--config", "c.cfg", "--lr-stop", "3", "--lr-step", "3", "--manifest", "d/rgb.tsv", "--out", "t"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = fs::read_to_string(dir.path().join("t/records.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["iter"], 0);
    assert_eq!(first["elapsed_ms"], 0);
    assert!(dir.path().join("t/checkpoint/manifest.txt").exists());
}

#[test]
fn wrong_stream_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["synth", "--out", "d", "--classes", "2", "--videos", "1", "--frames", "4"]).status.success());
    fs::write(dir.path().join("c.cfg"), DESK).unwrap();
    let out = run(dir.path(), &["train", "--config", "c.cfg", "--manifest", "d/flow.tsv", "--out", "t"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error[manifest]:"));
}

#[test]
fn eval_records_unreadable_videos_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(d, &["synth", "--out", "d", "--classes", "2", "--videos", "2", "--frames", "12"]).status.success());
    fs::write(d.join("c.cfg"), format!("{DESK}eval_frames = 2\n")).unwrap();
    for (stream, manifest) in [("spatial", "d/rgb.tsv"), ("temporal", "d/flow.tsv")] {
        let out = run(d, &["train", "--config", "c.cfg", "--stream", stream, "--manifest", manifest, "--out", stream]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    fs::remove_file(d.join("d/rgb/c01_v000.tsr")).unwrap();
    let out = run(
        d,
        &[
            "eval", "--config", "c.cfg", "--rgb-manifest", "d/rgb.tsv", "--flow-manifest", "d/flow.tsv",
            "--spatial", "spatial/checkpoint", "--temporal", "temporal/checkpoint", "--out", "r.jsonl",
            "--scores", "s.tsr",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = fs::read_to_string(d.join("r.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[2]["index"], 2);
    assert!(lines[2]["error"].is_string());
    assert_eq!(lines[4]["summary"]["failures"], 1);
    assert_eq!(lines[4]["summary"]["videos"], 3);
    let (scores, _) = tsr::read(d.join("s.tsr")).unwrap();
    assert_eq!(scores.shape(), &[3, 3, 2]);
}

#[test]
fn comm_report_lists_every_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["comm-report", "--num-classes", "101", "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["total_params"], 134_674_341u64);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    let excluded = rows[4]["param_sync_bytes"].as_u64().unwrap() - rows[5]["param_sync_bytes"].as_u64().unwrap();
    assert!(excluded > 102_764_544 * 4 * 3 / 2);
}
