use std::path::Path;
use std::process::{Command, Output};

fn cyltrans(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyltrans")).args(args).output().expect("running cyltrans")
}

fn line_args<'a>(verb: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        verb,
        "--out",
        out,
        "--override",
        "fixture.kind=line",
        "--override",
        "ambient.density_coefficient=0",
        "--override",
        "resolution.r=8",
        "--override",
        "resolution.t=8",
    ]
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn inverse_then_render_writes_manifests_tables_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cyltrans(&line_args("inverse", out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = read_json(&dir.path().join("record.json"));
    assert_eq!(rec["config"]["pipeline"], "inverse");
    assert_eq!(rec["config"]["resolution"]["r"], 8);
    assert!(rec["acceptance"].as_array().unwrap().iter().all(|c| c["status"] == "skip"));
    let nodes = std::fs::read_to_string(dir.path().join("path_nodes.csv")).unwrap();
    assert!(nodes.starts_with("level,t,node,param_a,param_b,re_z1,im_z1,re_z2,im_z2\r\n"));
    assert_eq!(nodes.lines().count(), 1 + 9 * 9);
    assert!(dir.path().join("inverse_path.json").exists());
    let o = cyltrans(&["render", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(dir.path().join("fan.svg")).unwrap();
    assert!(svg.contains(r#"version="1.1""#));
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"pipeline": "verify", "fixture": {"kind": "line"}, "ambient": {"density_coefficient": 0}}"#).unwrap();
    let out = dir.path().join("o");
    let o = cyltrans(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--override",
        "resolution.t=12",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = read_json(&out.join("record.json"));
    assert_eq!(rec["config"]["pipeline"], "generate");
    assert_eq!(rec["config"]["resolution"]["t"], 12);
    assert_eq!(rec["stages"][0]["name"], "generate");
}

#[test]
fn bad_input_is_reported_with_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cyltrans(&["render", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("path.json"));
    let o = cyltrans(&["generate", "--out", out, "--override", "resolution.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cyltrans(&["generate", "--out", out, "--override", "resolution.m=7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn the_guide_configuration_example_parses() {
    let text = include_str!("../../../book/src/cli.md");
    let start = text.find("```json\n").unwrap() + 8;
    let end = start + text[start..].find("```").unwrap();
    let cfg = cyltrans_cli::config::RunConfig::from_json(&text[start..end], "cli.md").unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.resolution.levels, 8);
}
