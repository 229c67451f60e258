use std::path::{Path, PathBuf};

use treekd_cli::{run, EXIT_BACKEND, EXIT_INPUT, EXIT_OK};

fn mini() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mini")
}

fn write_config(dir: &Path, extra: &str, property: &str, dataset: &str) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "dataset_path": "{}",
  "property_name": "{property}",
  "seed": 3,
  "forest": {{"n_trees": 12}},
  "output_dir": "out"{extra}
}}"#,
        mini().join(dataset).display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn treekd(config: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["treekd".to_string(), "--config".into(), config.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(argv)
}

fn all_steps(config: &Path) {
    for step in [&["extract"][..], &["train"], &["build-prompts"], &["predict"], &["eval"]] {
        assert_eq!(treekd(config, step), EXIT_OK, "{step:?}");
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "", "Ames Mutagenicity", "ames_mini.csv");
    all_steps(&config);
    let first = snapshot(&tmp.path().join("out"));
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["features.jsonl", "split.json", "tree.json", "forest.json", "train.jsonl", "predictions.jsonl", "metrics.json", "quadrants.json", "cliffs.json", "report.txt"] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    all_steps(&config);
    assert_eq!(first, snapshot(&tmp.path().join("out")));
}

#[test]
fn regression_property_skips_cliffs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "", "Lipophilicity", "lipo_mini.csv");
    all_steps(&config);
    let out = tmp.path().join("out");
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("skipped"), "{report}");
    assert!(report.contains("MAE"));
    assert!(!out.join("cliffs.json").exists());
    assert!(!out.join("quadrants.json").exists());
}

#[test]
fn self_consistency_with_stub() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#", "ensemble": {"mode": "self", "n": 5, "temperature": 0.8}"#,
        "Ames Mutagenicity",
        "ames_mini.csv",
    );
    all_steps(&config);
    let text = std::fs::read_to_string(tmp.path().join("out/predictions.jsonl")).unwrap();
    assert!(text.lines().all(|l| l.contains("\"n\":5")));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cold_self = write_config(tmp.path(), r#", "ensemble": {"mode": "self"}"#, "Ames Mutagenicity", "ames_mini.csv");
    assert_eq!(treekd(&cold_self, &["train"]), EXIT_INPUT);

    let too_many = write_config(tmp.path(), r#", "ensemble": {"n": 13}"#, "Ames Mutagenicity", "ames_mini.csv");
    assert_eq!(treekd(&too_many, &["train"]), EXIT_INPUT);

    let unknown = write_config(tmp.path(), "", "Boiling Point", "ames_mini.csv");
    assert_eq!(treekd(&unknown, &["extract"]), EXIT_INPUT);

    let missing = write_config(tmp.path(), "", "Ames Mutagenicity", "no_such.csv");
    assert_eq!(treekd(&missing, &["extract"]), EXIT_INPUT);

    let secret = write_config(tmp.path(), r#", "predictor": {"kind": "http", "endpoint": "${TREEKD_TEST_UNSET_VAR}", "model": "m"}"#, "Ames Mutagenicity", "ames_mini.csv");
    assert_eq!(treekd(&secret, &["train"]), EXIT_INPUT);

    assert_eq!(treekd(&tmp.path().join("absent.json"), &["train"]), EXIT_INPUT);
    assert_eq!(run(["treekd", "frobnicate"]), EXIT_INPUT);
    assert_eq!(run(["treekd", "--help"]), EXIT_OK);

    // Predictions that do not cover the test split.
    let ok = write_config(tmp.path(), "", "Ames Mutagenicity", "ames_mini.csv");
    all_steps(&ok);
    let predictions = tmp.path().join("out/predictions.jsonl");
    let text = std::fs::read_to_string(&predictions).unwrap();
    std::fs::write(&predictions, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(treekd(&ok, &["eval"]), EXIT_INPUT);
    assert_eq!(treekd(&ok, &["preview-prompt", "--index", "999"]), EXIT_INPUT);
    assert_eq!(treekd(&ok, &["preview-prompt", "--tree", "12"]), EXIT_INPUT);
    assert_eq!(treekd(&ok, &["preview-prompt", "--tree", "11"]), EXIT_OK);
    assert_eq!(treekd(&ok, &["eval", "--scaling", "--sizes", "5"]), EXIT_INPUT);

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let http = write_config(
        tmp.path(),
        &format!(
            r#", "predictor": {{"kind": "http", "endpoint": "http://127.0.0.1:{port}/v1/chat/completions", "model": "m", "timeout_secs": 2}}, "ensemble": {{"retry_attempts": 1}}"#
        ),
        "Ames Mutagenicity",
        "ames_mini.csv",
    );
    assert_eq!(treekd(&http, &["predict"]), EXIT_BACKEND);
}

#[test]
fn seed_and_out_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "", "Ames Mutagenicity", "ames_mini.csv");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert_eq!(treekd(&config, &["--out", a.to_str().unwrap(), "train"]), EXIT_OK);
    assert_eq!(treekd(&config, &["--out", b.to_str().unwrap(), "--seed", "3", "train"]), EXIT_OK);
    assert_eq!(treekd(&config, &["--out", c.to_str().unwrap(), "--seed", "4", "train"]), EXIT_OK);
    let forest = |d: &Path| std::fs::read(d.join("forest.json")).unwrap();
    assert_eq!(forest(&a), forest(&b));
    assert_ne!(forest(&a), forest(&c));
    assert!(!tmp.path().join("out").exists());
}
