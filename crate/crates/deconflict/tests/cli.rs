use std::path::Path;
use std::process::{Command, Output};

use deconflict::config::REFERENCE_TOML;
use deconflict::report::{read_train_log, ReportFile, REPORT_JSON};

fn deconflict(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deconflict"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = deconflict(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = deconflict(args);
    assert!(!out.status.success(), "{args:?} succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn train_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    ok(&[
        "train",
        "--fleet-a",
        "ppoa2c:X",
        "--fleet-b",
        "random:Y",
        "--episodes",
        "2",
        "--out",
        p(&train),
    ]);
    assert!(train.join("checkpoint_a.bin").exists());
    assert!(!train.join("checkpoint_b.bin").exists());
    let log = read_train_log(&train.join("train_log.csv")).unwrap();
    assert_eq!(log.len(), 2);
    assert_eq!(log[0].a_policy, "PPOA2C(X)");
    assert_eq!(log[0].b_policy, "Random(Y)");
    assert!(log
        .iter()
        .all(|r| r.a_policy_loss.is_some() && r.b_policy_loss.is_none()));

    let learned = dir.path().join("learned");
    let table = ok(&[
        "evaluate",
        "--fleet-a",
        "ppoa2c:X",
        "--fleet-b",
        "rulebased:Y",
        "--checkpoint-a",
        p(&train.join("checkpoint_a.bin")),
        "--episodes",
        "3",
        "--out",
        p(&learned),
    ]);
    assert!(table.starts_with("metric,mean,std\n"));
    let report = ReportFile::read(&learned).unwrap();
    assert_eq!(report.model, "PPOA2C(X)+Rule-based(Y)");
    assert_eq!(report.episodes, 3);
    assert!(report.greedy);

    let random = dir.path().join("random");
    ok(&[
        "evaluate",
        "--fleet-a",
        "random:X",
        "--fleet-b",
        "random:Y",
        "--episodes",
        "3",
        "--out",
        p(&random),
    ]);

    let merged = dir.path().join("table.csv");
    let out = deconflict(&[
        "report",
        p(&learned),
        p(&random),
        p(&dir.path().join("nope")),
        "--out",
        p(&merged),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let table = std::fs::read_to_string(&merged).unwrap();
    assert!(table.starts_with("metric,PPOA2C(X)+Rule-based(Y),Random(X)+Random(Y)\n"));
}

#[test]
fn evaluation_needs_matching_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    ok(&[
        "train",
        "--fleet-a",
        "ppoa2c:X",
        "--fleet-b",
        "random:Y",
        "--episodes",
        "1",
        "--out",
        p(&train),
    ]);
    let err = fails(&[
        "evaluate",
        "--fleet-a",
        "random:X",
        "--fleet-b",
        "ppoa2c:Y",
        "--checkpoint-b",
        p(&train.join("checkpoint_a.bin")),
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert!(err.contains("fleet"), "{err}");
    let err = fails(&[
        "evaluate",
        "--fleet-a",
        "ppoa2c:X",
        "--fleet-b",
        "random:Y",
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert!(err.contains("--checkpoint-a"), "{err}");
}

#[test]
fn bad_arguments_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let err = fails(&[
        "train",
        "--fleet-a",
        "greedy:X",
        "--fleet-b",
        "random:Y",
        "--out",
        p(&out),
    ]);
    assert!(err.contains("unknown policy"), "{err}");
    let err = fails(&[
        "train",
        "--fleet-a",
        "random:X",
        "--fleet-b",
        "random:Y",
        "--out",
        p(&out),
    ]);
    assert!(err.contains("ppoa2c"), "{err}");
    assert!(!fails(&["report"]).is_empty());
}

#[test]
fn scenario_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(
        &path,
        REFERENCE_TOML.replace("d_lowc = 500.0", "d_lowc = 50.0"),
    )
    .unwrap();
    let err = fails(&[
        "evaluate",
        "--scenario",
        p(&path),
        "--fleet-a",
        "random:X",
        "--fleet-b",
        "random:Y",
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert!(err.contains("d_lowc") || err.contains("d_nmac"), "{err}");
}

#[test]
fn report_rejects_other_schema_versions() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e");
    ok(&[
        "evaluate",
        "--fleet-a",
        "random:X",
        "--fleet-b",
        "random:Y",
        "--episodes",
        "1",
        "--out",
        p(&e),
    ]);
    let json = std::fs::read_to_string(e.join(REPORT_JSON)).unwrap();
    std::fs::write(
        e.join(REPORT_JSON),
        json.replace("\"schema_version\": 1", "\"schema_version\": 7"),
    )
    .unwrap();
    let err = fails(&["report", p(&e)]);
    assert!(err.contains("schema version 7"), "{err}");
}

#[test]
fn seed_sweep_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    ok(&[
        "evaluate",
        "--fleet-a",
        "rulebased:X",
        "--fleet-b",
        "random:Y",
        "--episodes",
        "2",
        "--seed",
        "1,2",
        "--out",
        p(&out),
    ]);
    let a = ReportFile::read(&out.join("seed-1")).unwrap();
    let b = ReportFile::read(&out.join("seed-2")).unwrap();
    assert_eq!((a.seed, b.seed), (1, 2));
    let err = fails(&[
        "evaluate",
        "--fleet-a",
        "random:X",
        "--fleet-b",
        "random:Y",
        "--greedy",
        "--sample",
        "--out",
        p(&out),
    ]);
    assert!(err.contains("cannot be used with"), "{err}");
}
