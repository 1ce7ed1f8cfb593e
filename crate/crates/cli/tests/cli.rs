use std::fs;
use std::process::{Command, Output};

fn adatrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adatrace"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn estimate_prints_json_report() {
    let out = adatrace(&[
        "estimate",
        "--fixture",
        "synthetic_algebraic:c=2,n=200",
        "--estimator",
        "hutch++",
        "--budget",
        "30",
        "--seed",
        "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["estimator"], "hutch_pp");
    assert_eq!(v["report"]["matvecs_total"], 30);
    assert_eq!(v["report"]["matvecs_lowrank"], 20);
    assert!(v["relative_error"].as_f64().unwrap() < 0.05);
}

#[test]
fn adaptive_estimate_with_precision() {
    let out = adatrace(&[
        "estimate",
        "--fixture",
        "inverse_tridiag:n=300",
        "--estimator",
        "a_hutch_pp",
        "--precision",
        "4",
        "--block",
        "3",
        "--schedule",
        "batched",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["report"]["rank_used"].as_u64().unwrap() >= 1);
}

#[test]
fn matrix_file_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mtx");
    fs::write(
        &path,
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 2 3\n3 3 4\n2 1 -1\n",
    )
    .unwrap();
    let out = adatrace(&[
        "estimate",
        "--matrix-file",
        path.to_str().unwrap(),
        "--estimator",
        "hutch_pp",
        "--budget",
        "9",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["truth"], 9.0);
    assert!(v["relative_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn sweep_writes_identical_csv_twice() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("spec.json");
    let a = dir.path().join("a.csv");
    fs::write(
        &config,
        r#"{"fixture": {"kind": "synthetic_algebraic", "c": 3, "n": 200},
            "estimator": "a_hutch_pp", "sweep": {"precisions": [2, 3]}, "repeats": 5, "seed": 9}"#,
    )
    .unwrap();
    let out = adatrace(&["sweep", config.to_str().unwrap(), "--output", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read_to_string(&a).unwrap();
    assert!(first.starts_with("fixture,estimator,sweep_value,trial,estimate,truth,relative_error,"));
    assert_eq!(first.lines().count(), 1 + 2 * 5 * 2);
    let again = adatrace(&["sweep", config.to_str().unwrap(), "--output", "-"]);
    assert_eq!(stdout(&again), first);
}

#[test]
fn failure_table_layout() {
    let out = adatrace(&[
        "failure-table",
        "--fixture",
        "synthetic_algebraic:c=3,n=100",
        "--eps",
        "0.1,0.01",
        "--delta",
        "0.05",
        "--repeats",
        "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eps_over_trace,delta=0.05");
    assert_eq!(lines.len(), 3);
}

#[test]
fn fixtures_list_names_every_kind() {
    let out = adatrace(&["fixtures", "list"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for kind in [
        "synthetic_algebraic",
        "graph_triangles",
        "logdet_sprandn",
        "inverse_poisson",
    ] {
        assert!(text.contains(kind), "{kind} missing");
    }
}

#[test]
fn config_errors_exit_with_2() {
    let cases: [&[&str]; 4] = [
        &[
            "estimate",
            "--fixture",
            "nonsense",
            "--estimator",
            "hutch_pp",
            "--budget",
            "3",
        ],
        &[
            "estimate",
            "--fixture",
            "inverse_tridiag:n=50",
            "--estimator",
            "a_hutch_pp",
            "--budget",
            "30",
        ],
        &[
            "estimate",
            "--matrix-file",
            "/nonexistent/file.mtx",
            "--estimator",
            "hutch_pp",
            "--budget",
            "3",
        ],
        &["failure-table", "--fixture", "inverse_tridiag:n=50", "--eps", "inf"],
    ];
    for args in cases {
        assert_eq!(adatrace(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn numerical_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neg.mtx");
    fs::write(
        &path,
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 -1\n2 2 -2\n3 3 -3\n",
    )
    .unwrap();
    let out = adatrace(&[
        "estimate",
        "--matrix-file",
        path.to_str().unwrap(),
        "--estimator",
        "nystrom_pp",
        "--budget",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
