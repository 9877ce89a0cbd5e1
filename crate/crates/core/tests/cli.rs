use std::path::Path;

use serket::cli::{run, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use serket::experiment::ExperimentReport;

fn serket(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("serket").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn no_arguments_prints_usage() {
    let (code, _, err) = serket(&[]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("Usage"));
}

#[test]
fn unknown_subcommand_is_named() {
    let (code, _, err) = serket(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("frobnicate"));
}

#[test]
fn missing_flag_is_a_usage_error() {
    let (code, _, err) = serket(&["gen", "--seed", "1"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--spec"));
}

#[test]
fn help_exits_cleanly() {
    let (code, out, _) = serket(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("exp1"));
}

#[test]
fn missing_files_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = serket(&["eval", "--report", &path(dir.path(), "absent.json")]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.starts_with("error:"));
    std::fs::write(dir.path().join("bad.toml"), "[world]\nk_obj = 1\n").unwrap();
    let (code, _, _) = serket(&["gen", "--spec", &path(dir.path(), "bad.toml"), "--seed", "1", "--out", &path(dir.path(), "d.jsonl")]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.toml"), "records_per_category = 1\n").unwrap();
    std::fs::write(dir.path().join("c.toml"), "[exp1]\nroundz = 3\n").unwrap();
    let data = path(dir.path(), "d.jsonl");
    assert_eq!(serket(&["gen", "--spec", &path(dir.path(), "g.toml"), "--seed", "1", "--out", &data]).0, EXIT_OK);
    let (code, _, err) = serket(&[
        "exp1", "--data", &data, "--config", &path(dir.path(), "c.toml"), "--seed", "1", "--report", &path(dir.path(), "r.json"),
    ]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("roundz"));
}

#[test]
fn gen_then_exp1_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.toml"), "records_per_category = 3\n").unwrap();
    std::fs::write(dir.path().join("c.toml"), "[exp1]\ninner_sweeps = 20\nrounds = 5\n").unwrap();
    let data = path(dir.path(), "d.jsonl");
    let report = path(dir.path(), "r.json");
    let (code, out, _) = serket(&["gen", "--spec", &path(dir.path(), "g.toml"), "--seed", "3", "--out", &data]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("30 records"));
    let (code, out, _) = serket(&["exp1", "--data", &data, "--config", &path(dir.path(), "c.toml"), "--seed", "3", "--report", &report]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("independent") && out.contains("serket"));
    let parsed = ExperimentReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ExperimentReport::Exp1(r) = parsed else { panic!("expected an exp1 report") };
    assert_eq!(r.records, 30);
    assert_eq!(r.integration_dims, (10, 10));
    let (code, eval_out, _) = serket(&["eval", "--report", &report]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(eval_out, out);
}
