use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cylust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cylust"))
        .args(args)
        .output()
        .expect("run cylust")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn graph_info_reports_counts() {
    let info = stdout_json(&cylust(&[
        "graph", "info", "--n", "4", "--m", "3", "--sink",
    ]));
    assert_eq!(info["vertices"], 13);
    assert_eq!(info["edges"], 4 * 3 + 4 * 2 + 8);
    assert_eq!(info["degree_histogram"]["4"], 12);
    assert_eq!(info["degree_histogram"]["8"], 1);
}

#[test]
fn count_trees_prints_decimal() {
    let out = cylust(&["count-trees", "--n", "3", "--m", "2"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "75");
    let out = cylust(&["count-trees", "--n", "4", "--m", "2"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "384");
    let out = cylust(&["sandpile", "recurrent-count", "--n", "3", "--m", "1"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "50");
}

#[test]
fn exit_codes() {
    assert_eq!(cylust(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(cylust(&["count-trees", "--n", "3"]).status.code(), Some(1));
    assert_eq!(cylust(&["--help"]).status.code(), Some(0));
    assert_eq!(
        cylust(&["count-trees", "--n", "2", "--m", "4"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cylust(&["sandpile", "recurrent-count", "--n", "3", "--m", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cylust(&["fit", "--input", "/nonexistent/h.csv"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn sample_branches_fit_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let trees = dir.path().join("trees.jsonl");
    let out = cylust(&[
        "--seed",
        "3",
        "sample",
        "--n",
        "3",
        "--m",
        "200",
        "--count",
        "20",
        "--trace",
        "--order",
        "trunk-first",
        "--out",
        path(&trees),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&trees).unwrap();
    assert_eq!(text.lines().count(), 20);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["edges"].as_array().unwrap().len(), 599);
    assert!(first["trace"].is_array());

    let again = cylust(&[
        "--seed",
        "3",
        "sample",
        "--n",
        "3",
        "--m",
        "200",
        "--count",
        "20",
        "--trace",
        "--order",
        "trunk-first",
    ]);
    assert_eq!(again.stdout, text.as_bytes());

    let canonical = dir.path().join("canonical");
    let proof = dir.path().join("proof");
    for (trunk, out_dir) in [("canonical", &canonical), ("proof", &proof)] {
        let out = cylust(&[
            "--out-dir",
            path(out_dir),
            "branches",
            "--in",
            path(&trees),
            "--trunk",
            trunk,
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let histogram = fs::read_to_string(canonical.join("histogram.csv")).unwrap();
    assert!(histogram.starts_with("length,count\n"));
    assert_eq!(
        histogram,
        fs::read_to_string(proof.join("histogram.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(canonical.join("branches.jsonl"))
            .unwrap()
            .lines()
            .count(),
        20
    );

    let fit = stdout_json(&cylust(&[
        "fit",
        "--input",
        path(&canonical.join("histogram.csv")),
        "--min-count",
        "5",
    ]));
    assert!(fit["lambda"].as_f64().unwrap() > 0.5);
    assert!(fit["A"].as_f64().unwrap() > 0.0);
    assert_eq!(fit["fit_range"][0], 1);
}

#[test]
fn fit_rejects_short_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.csv");
    fs::write(&h, "length,count\n1,100\n2,30\n").unwrap();
    let out = cylust(&["fit", "--input", path(&h)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3"));
}

#[test]
fn slash_on_sink_trees() {
    let dir = tempfile::tempdir().unwrap();
    let trees = dir.path().join("trees.jsonl");
    assert!(cylust(&[
        "sample",
        "--n",
        "3",
        "--m",
        "1",
        "--sink",
        "--count",
        "30",
        "--out",
        path(&trees)
    ])
    .status
    .success());
    let out_dir = dir.path().join("slash");
    let out = cylust(&["--out-dir", path(&out_dir), "slash", "--in", path(&trees)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let records = fs::read_to_string(out_dir.join("slash.jsonl")).unwrap();
    for line in records.lines() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        let total = r["left"].as_u64().unwrap() + r["right"].as_u64().unwrap();
        assert_eq!(total, 3);
    }
    // slash needs a sink
    let plain = dir.path().join("plain.jsonl");
    assert!(
        cylust(&["sample", "--n", "3", "--m", "2", "--out", path(&plain)])
            .status
            .success()
    );
    assert_eq!(
        cylust(&["slash", "--in", path(&plain)]).status.code(),
        Some(2)
    );
}

#[test]
fn verify_uniformity_json() {
    let report = stdout_json(&cylust(&[
        "--seed",
        "5",
        "verify-uniformity",
        "--n",
        "3",
        "--m",
        "2",
        "--samples",
        "20000",
        "--order",
        "reversed",
    ]));
    assert_eq!(report["count"], 75);
    assert!(report["p_value"].as_f64().unwrap() > 1e-3);
    assert!(report["statistic"].as_f64().unwrap() > 0.0);
}

#[test]
fn sandpile_avalanches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = cylust(&[
        "--out-dir",
        path(dir.path()),
        "sandpile",
        "avalanches",
        "--n",
        "3",
        "--m",
        "5",
        "--grains",
        "300",
        "--init",
        "stationary",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("avalanches.csv")).unwrap();
    assert!(csv.starts_with("grain,site,topplings,distinct_sites\n"));
    assert_eq!(csv.lines().count(), 301);
    for line in csv.lines().skip(1) {
        let fields: Vec<u64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert!(fields[3] <= fields[2]);
        assert!(fields[3] <= 15);
    }
    assert!(dir.path().join("histogram.csv").exists());
}

#[test]
fn run_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"n":3,"m":120,"replicas":16,"seed":4,"observable":"branches","svg":true}"#,
    )
    .unwrap();
    let mut bodies = Vec::new();
    for threads in ["1", "4"] {
        let target = dir.path().join(threads);
        let out = cylust(&[
            "--threads",
            threads,
            "--out-dir",
            path(&target),
            "run",
            "--spec",
            path(&spec),
            "--assert-bounds",
        ]);
        let summary = stdout_json(&out);
        assert_eq!(summary["bounds_passed"], true);
        let names = [
            "records.jsonl",
            "histogram.csv",
            "maxima.csv",
            "fit.json",
            "bounds.json",
            "histogram.svg",
        ];
        bodies.push(names.map(|n| fs::read(target.join(n)).unwrap()));
    }
    assert_eq!(bodies[0], bodies[1]);

    let flags = dir.path().join("flags");
    let out = cylust(&[
        "--seed",
        "4",
        "--out-dir",
        path(&flags),
        "run",
        "--n",
        "3",
        "--m",
        "120",
        "--replicas",
        "16",
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(flags.join("histogram.csv")).unwrap(), bodies[0][1]);

    let bad = cylust(&[
        "run",
        "--n",
        "3",
        "--m",
        "10",
        "--observable",
        "slash",
        "--sink",
        "--trunk",
        "canonical",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}
