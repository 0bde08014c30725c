use std::process::{Command, Output};

use dimerwork::emit::parse_csv;
use dimerwork::{format_sig12, run_single, DimerConfig, Flags, Protocol};

fn dimerwork(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimerwork"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_of(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    let line = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str::<serde_json::Value>(line.trim()).unwrap()["error"].clone()
}

fn meta(csv: &str, key: &str) -> Option<String> {
    parse_csv(csv)
        .unwrap()
        .metadata
        .into_iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
}

#[test]
fn single_csv_matches_library() {
    let out = stdout(&dimerwork(&[
        "single",
        "--u",
        "3",
        "--tau",
        "1.5",
        "--protocol",
        "ks-plda",
        "--no-timestamp",
    ]));
    let expected = run_single(
        &DimerConfig::with_u_tau(3.0, 1.5),
        Protocol::KsPlda,
        Flags::NONE,
    )
    .unwrap();
    let last = out.lines().last().unwrap();
    assert_eq!(
        last,
        format!(
            "3.00000000000,1.50000000000,{}",
            format_sig12(expected.extracted_work)
        )
    );
}

#[test]
fn single_json_reports_the_run() {
    let out = stdout(&dimerwork(&[
        "single",
        "--u",
        "2",
        "--tau",
        "1",
        "--format",
        "json",
        "--fop",
        "--protocol",
        "ks-par",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["protocol"], "ks-par");
    assert_eq!(v["flags"]["fop"], true);
    assert!(v["generated_at"].is_string());
    let p: f64 = v["work_distribution"]["atoms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["probability"].as_f64().unwrap())
        .sum();
    assert!((p - 1.0).abs() < 1e-10);
}

#[test]
fn sweep_without_timestamp_is_reproducible() {
    let args = [
        "sweep",
        "--grid",
        "3x3",
        "--protocol",
        "ks-par",
        "--no-timestamp",
        "--jobs",
        "2",
    ];
    let a = stdout(&dimerwork(&args));
    assert_eq!(a, stdout(&dimerwork(&args)));
    assert_eq!(meta(&a, "generated_at"), None);
    assert_eq!(parse_csv(&a).unwrap().rows.len(), 9);
    let stamped = stdout(&dimerwork(&["sweep", "--grid", "1x1"]));
    assert!(meta(&stamped, "generated_at").is_some());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    std::fs::write(
        &conf,
        "protocol = ks-plda\nu_max = 4\ntau_max = 2\nu_count = 2\ntau_count = 2\nbeta = 1\n",
    )
    .unwrap();
    let conf = conf.to_str().unwrap();
    let from_file = stdout(&dimerwork(&["sweep", "--config", conf, "--no-timestamp"]));
    assert_eq!(meta(&from_file, "protocol").as_deref(), Some("ks-plda"));
    assert_eq!(meta(&from_file, "beta").as_deref(), Some("1"));
    assert_eq!(meta(&from_file, "u_over_j").as_deref(), Some("0:4:2"));
    let overridden = stdout(&dimerwork(&[
        "sweep",
        "--config",
        conf,
        "--protocol",
        "ni",
        "--grid",
        "3x1",
        "--steps",
        "500",
        "--no-timestamp",
    ]));
    assert_eq!(meta(&overridden, "protocol").as_deref(), Some("ni"));
    assert_eq!(meta(&overridden, "u_over_j").as_deref(), Some("0:4:3"));
    assert_eq!(meta(&overridden, "n_steps").as_deref(), Some("500"));
}

#[test]
fn figure_presets_set_protocol_and_grid() {
    let fig5 = stdout(&dimerwork(&[
        "fig5",
        "b",
        "--grid",
        "2x2",
        "--no-timestamp",
    ]));
    assert_eq!(meta(&fig5, "protocol").as_deref(), Some("ks-plda"));
    assert_eq!(meta(&fig5, "tpf").as_deref(), Some("true"));
    assert_eq!(meta(&fig5, "fop").as_deref(), Some("true"));
    assert_eq!(meta(&fig5, "tau_j").as_deref(), Some("0:4:2"));
    assert_eq!(meta(&fig5, "quantity").as_deref(), Some("relative_error"));
    let fig2b = stdout(&dimerwork(&["fig2b", "--grid", "2x2", "--no-timestamp"]));
    assert_eq!(
        meta(&fig2b, "quantity").as_deref(),
        Some("entropy_production")
    );
    let fig3 = stdout(&dimerwork(&[
        "fig3",
        "a",
        "--grid",
        "2x2",
        "--no-timestamp",
    ]));
    // U = 0 column: bare and exact coincide
    for (u, _, v) in parse_csv(&fig3).unwrap().rows {
        if u == 0.0 {
            assert!(v.abs() < 1e-9);
        }
    }
}

#[test]
fn json_output_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    stdout(&dimerwork(&[
        "fig2a",
        "--grid",
        "2x3",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
        "--no-timestamp",
    ]));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 6);
}

#[test]
fn failures_are_machine_readable() {
    let bad = dimerwork(&["sweep", "--protocol", "bogus"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(error_of(&bad)["code"], "config");

    let io = dimerwork(&["sweep", "--grid", "1x1", "--out", "/nonexistent-dir/x.csv"]);
    assert_eq!(error_of(&io)["code"], "io");

    let flags = dimerwork(&["sweep", "--grid", "1x1", "--protocol", "ni", "--tpf"]);
    assert_eq!(error_of(&flags)["code"], "invalid_input");

    let usage = dimerwork(&["fig3", "z"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(error_of(&usage)["code"], "usage");

    let grid = dimerwork(&["sweep", "--grid", "51"]);
    assert_eq!(error_of(&grid)["code"], "config");
}
