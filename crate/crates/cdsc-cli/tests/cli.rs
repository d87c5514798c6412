//! Command-line contract tests: wiring, validation and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn cdsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdsc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SYNTH_CONFIG: &str = r#"{
  "cameras": 2, "zones_per_camera": 3, "identities": 3,
  "frames_per_visit": 80, "min_travel_frames": 15, "max_travel_frames": 45,
  "feature_dim": 8, "appearance_noise_std": 0.0, "drop_probability": 0.0,
  "seed": 3
}"#;

#[test]
fn synth_track_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    write(&cfg, SYNTH_CONFIG);
    let data = dir.path().join("data");

    let out = cdsc(&["synth", "--config", cfg.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["detections.csv", "features.bin", "features.bin.hdr", "topology.json", "truth.csv"] {
        assert!(data.join(file).exists(), "missing {}", file);
    }

    let run = dir.path().join("run.json");
    write(
        &run,
        &format!(
            "{{\"detections\": {:?}, \"features\": {:?}, \"transition_model\": {:?}}}",
            data.join("detections.csv"),
            data.join("features.bin"),
            data.join("topology.json")
        ),
    );
    let outdir = dir.path().join("out");
    let out = cdsc(&["track", "--config", run.to_str().unwrap(), "--out", outdir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(outdir.join("trajectories.csv").exists());
    assert!(outdir.join("report.json").exists());

    let out = cdsc(&[
        "eval",
        "--pred",
        outdir.join("trajectories.csv").to_str().unwrap(),
        "--truth",
        data.join("truth.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("IDF1"), "table missing IDF1: {}", stdout);
    assert!(stdout.contains("1.000"), "expected perfect score: {}", stdout);
}

#[test]
fn synth_missing_field_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    write(&cfg, r#"{"cameras": 2}"#);
    let out = cdsc(&["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("zones_per_camera"), "field not named: {}", stderr);
    assert!(!dir.path().join("d").exists(), "partial output left behind");
}

#[test]
fn synth_same_seed_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    write(&cfg, SYNTH_CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let st = cdsc(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(st.status.code(), Some(0));
    }
    for file in ["detections.csv", "features.bin", "truth.csv", "topology.json"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{} differs",
            file
        );
    }
}

#[test]
fn track_missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run.json");
    write(
        &run,
        "{\"detections\": \"/nonexistent.csv\", \"features\": \"/nonexistent.bin\", \"transition_model\": \"/nonexistent.json\"}",
    );
    let out = cdsc(&["track", "--config", run.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn track_empty_detections_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("empty.csv"), "");
    write(&dir.path().join("features.csv"), "0,1.0,0.0\n");
    write(
        &dir.path().join("topology.json"),
        r#"{"cameras": [0], "transitions": []}"#,
    );
    let run = dir.path().join("run.json");
    write(
        &run,
        &format!(
            "{{\"detections\": {:?}, \"features\": {:?}, \"transition_model\": {:?}}}",
            dir.path().join("empty.csv"),
            dir.path().join("features.csv"),
            dir.path().join("topology.json")
        ),
    );
    let outdir = dir.path().join("out");
    let out = cdsc(&["track", "--config", run.to_str().unwrap(), "--out", outdir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(outdir.join("trajectories.csv")).unwrap(), "");
}

#[test]
fn eval_malformed_csv_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    write(&good, "0,0,1,10,10,5,5\n");
    let bad = dir.path().join("bad.csv");
    write(&bad, "0,0,1,10,10,5,5\nbroken line\n");
    let out = cdsc(&["eval", "--pred", bad.to_str().unwrap(), "--truth", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(":2:"), "line number missing: {}", stderr);
}

#[test]
fn reid_modes_rank_twins_first() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("gallery.csv");
    // nodes 0,1,2 identical; node 3 distant
    write(&features, "0,1.0,0.0\n1,1.0,0.0\n2,1.0,0.0\n3,0.0,9.0\n");
    for mode in ["membership", "distance"] {
        let outdir = dir.path().join(format!("out_{}", mode));
        let out = cdsc(&[
            "reid",
            "--features",
            features.to_str().unwrap(),
            "--query",
            "0",
            "--mode",
            mode,
            "--gamma",
            "1.0",
            "--out",
            outdir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let ranking = std::fs::read_to_string(outdir.join("query_0.csv")).unwrap();
        let rows: Vec<&str> = ranking.lines().collect();
        // twins 1 and 2 first, in some order; the distant node never first
        assert!(rows.len() >= 2, "ranking too short: {}", ranking);
        let first_node = rows[0].split(',').nth(1).unwrap();
        assert!(first_node == "1" || first_node == "2", "{}", ranking);
    }
}

#[test]
fn reid_singleton_query_writes_empty_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("gallery.csv");
    // query node far from everything
    write(&features, "0,1.0,0.0\n1,1.0,0.0\n2,50.0,50.0\n");
    let outdir = dir.path().join("out");
    let out = cdsc(&[
        "reid",
        "--features",
        features.to_str().unwrap(),
        "--query",
        "2",
        "--gamma",
        "1.0",
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(outdir.join("query_2.csv")).unwrap(), "");
}

#[test]
fn bench_small_instance_writes_ratio_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = cdsc(&[
        "bench",
        "--sizes",
        "100",
        "--seeds",
        "2",
        "--density",
        "0.05",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("speedup.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("n,seed,"));
    let mut rows = 0;
    for line in lines {
        let ratio: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(ratio > 0.0);
        rows += 1;
    }
    assert_eq!(rows, 2);
}

#[test]
fn bench_rejects_small_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cdsc(&["bench", "--sizes", "50", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_flag_exits_2() {
    let out = cdsc(&["synth"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cdsc(&["track"]);
    assert_eq!(out.status.code(), Some(2));
}
