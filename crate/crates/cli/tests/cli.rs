use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kinclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinclust"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_corpus(dir: &Path, model: &str) -> String {
    let data = dir.join("data");
    let data_s = data.to_str().unwrap().to_string();
    let o = kinclust(&[
        "synth",
        "--out",
        &data_s,
        "--model",
        model,
        "--subjects",
        "3",
        "--motions-per-cluster",
        "2",
        "--repetitions",
        "2",
        "--frames",
        "30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    data_s
}

#[test]
fn pipeline_runs_and_reruns_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path(), "WristOnly3");
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let first = kinclust(&[
        "pipeline",
        "--data",
        &data,
        "--out",
        out_s,
        "--clusters",
        "5",
    ]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("clusters    computed"));
    for f in [
        "matrix.csv",
        "dendrogram.json",
        "clusters.csv",
        "clusters/fpca_summary.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    // No knee stage when the cluster count is given.
    assert!(!out.join("knee.json").exists());

    let second = kinclust(&[
        "pipeline",
        "--data",
        &data,
        "--out",
        out_s,
        "--clusters",
        "5",
    ]);
    assert!(second.status.success());
    assert!(!stdout(&second).contains("computed"), "{}", stdout(&second));

    let recut = kinclust(&["cut", "--out", out_s, "--clusters", "3"]);
    assert!(recut.status.success(), "{}", stderr(&recut));
    assert!(stdout(&recut).contains("cut         computed"));
}

#[test]
fn stages_compose_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path(), "Full7");
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let steps: [&[&str]; 6] = [
        &["average", "--data", &data, "--out", out_s],
        &["divergence", "--out", out_s, "--measure", "bezier"],
        &["cluster", "--out", out_s, "--linkage", "raw"],
        &["cut", "--out", out_s, "--clusters", "4"],
        &[
            "fpca",
            "--data",
            &data,
            "--out",
            out_s,
            "--fpca-metric",
            "gram",
        ],
        &["trace", "--out", out_s],
    ];
    for step in steps {
        let o = kinclust(step);
        assert!(o.status.success(), "{step:?}: {}", stderr(&o));
    }
    assert!(out.join("trace/cluster_00.csv").is_file());
    let matrix = fs::read_to_string(out.join("matrix.json")).unwrap();
    assert!(matrix.contains("BezierEuclid"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path(), "Full7");
    let cfg = dir.path().join("config.toml");
    fs::write(&cfg, "model = \"ElbowWrist4\"\nclusters = 2\n").unwrap();
    let out = dir.path().join("out");
    let o = kinclust(&[
        "pipeline",
        "--data",
        &data,
        "--out",
        out.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--clusters",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("3 clusters"));
    let header = fs::read_to_string(out.join("clusters/cluster_00/average.csv")).unwrap();
    assert!(header.starts_with("elbow_flexion,supination,wrist_flexion,deviation\n"));
}

#[test]
fn failures_are_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = kinclust(&["knee", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stage `knee`"), "{}", stderr(&o));

    let data = small_corpus(dir.path(), "WristOnly3");
    // Corrupt one segment with a non-finite sample.
    let seg = Path::new(&data).join("segments/t00-1-s00-r1.csv");
    let text = fs::read_to_string(&seg).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = "NaN,0,0".into();
    fs::write(&seg, lines.join("\n") + "\n").unwrap();
    let v = kinclust(&["validate", "--data", &data]);
    assert_eq!(v.status.code(), Some(1));
    assert!(stdout(&v).contains("t00-1-s00-r1"));
    let p = kinclust(&["pipeline", "--data", &data, "--out", out.to_str().unwrap()]);
    assert_eq!(p.status.code(), Some(2));
    let err = stderr(&p);
    assert!(
        err.contains("stage `validate`") && err.contains("t00-1-s00-r1"),
        "{err}"
    );
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = kinclust(&["pipeline", "--out", "x", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no_such_key"));
}
