use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tristirap");

const SHORT: &str = r#"
name = "short"

[lasers.B]
rabi_over_2pi_MHz = 400
detuning_over_2pi_MHz = 100

[lasers.R]
rabi_over_2pi_MHz = 40
detuning_over_2pi_MHz = "auto_resonance:weak"

[lasers.C]
rabi_over_2pi_MHz = 10
detuning_over_2pi_MHz = 100

[pulses]
tau_us = 4.0

[scenario]
preset = "scan_tau"
observable = "P_Q"

[scenario.scan]
parameter = "pulses.tau_us=delta_t_us"
values = [3.0, 4.0, 5.0]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn error_record(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr);
    let last = line.lines().last().expect("error record on stderr");
    serde_json::from_str(last).expect("machine-parsable error")
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn validate_names_missing_c_laser() {
    let dir = tempfile::tempdir().unwrap();
    let without_c = SHORT.replace("[lasers.C]\nrabi_over_2pi_MHz = 10\ndetuning_over_2pi_MHz = 100\n", "");
    assert!(!without_c.contains("lasers.C"));
    let cfg = write(dir.path(), "no_c.toml", &without_c);
    let out = run(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_record(&out);
    assert_eq!(err["error"]["kind"], "validation");
    let paths: Vec<&str> = err["error"]["fields"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(paths, ["lasers.C"]);
}

#[test]
fn negative_tau_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "neg.toml", &SHORT.replace("tau_us = 4.0", "tau_us = -4.0"));
    let out = run(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_record(&out);
    assert!(err["error"]["fields"].as_array().unwrap().iter().any(|f| f["path"] == "pulses.tau_us"));
    assert!(!dir.path().join("o").exists(), "nothing written for an invalid config");
}

#[test]
fn parse_errors_carry_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.toml", &SHORT.replace("tau_us = 4.0", "tau_usec = 4.0"));
    let out = run(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_record(&out);
    assert_eq!(err["error"]["kind"], "parse");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 17"), "{err}");
}

#[test]
fn validate_echoes_resolved_detuning() {
    let out = run(&["validate", "--config", concat!(env!("CARGO_MANIFEST_DIR"), "/presets/fig3.toml")]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let dr = doc["runs"][0]["resolved"]["lasers"]["R"]["detuning_over_2pi_MHz"].as_f64().unwrap();
    assert!((dr + 0.25).abs() < 1e-12, "{dr}");
}

#[test]
fn unknown_preset_fails_cleanly() {
    let out = run(&["preset", "fig99"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_record(&out)["error"]["message"].as_str().unwrap().contains("fig99"));
}

#[test]
fn scan_output_is_independent_of_workers_and_reproducible_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    for (out, workers) in [(&one, "1"), (&four, "4")] {
        let o = run(&["scan", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(sorted_files(&one), ["resolved_config.toml", "scan.csv", "summary.json"]);
    let a = fs::read(one.join("scan.csv")).unwrap();
    assert_eq!(a, fs::read(four.join("scan.csv")).unwrap());

    let text = String::from_utf8(a.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema_version: 1");
    assert!(lines[1].starts_with("# config: {"));
    assert_eq!(lines[2], "axis_value,one_minus_F,P_Q,status");
    assert_eq!(lines.len(), 6);
    assert!(lines[3..].iter().all(|l| l.ends_with(",ok")));

    // the written snapshot reproduces the same bytes
    let again = dir.path().join("again");
    let snap = one.join("resolved_config.toml");
    let o = run(&["scan", "--config", snap.to_str().unwrap(), "--out", again.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(a, fs::read(again.join("scan.csv")).unwrap());
    assert_eq!(fs::read(snap).unwrap(), fs::read(again.join("resolved_config.toml")).unwrap());
    assert_eq!(sorted_files(&again), ["resolved_config.toml", "scan.csv", "summary.json"]);
}

#[test]
fn run_writes_timeseries_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "single.toml", &SHORT.replace("preset = \"scan_tau\"", "preset = \"full_transfer\"").replace(
        "[scenario.scan]\nparameter = \"pulses.tau_us=delta_t_us\"\nvalues = [3.0, 4.0, 5.0]\n",
        "",
    ));
    let out = dir.path().join("o");
    let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "json", "--rtol", "1e-8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ts: Value = serde_json::from_slice(&fs::read(out.join("timeseries.json")).unwrap()).unwrap();
    assert_eq!(ts["columns"][0], "t_us");
    assert_eq!(ts["columns"].as_array().unwrap().len(), 10);
    assert_eq!(ts["config"]["resolved"]["internal_units"]["integrator"]["rtol"], 1e-8);
    let rows = ts["rows"].as_array().unwrap();
    let last = rows.last().unwrap().as_array().unwrap();
    let trace: f64 = (1..=4).map(|k| last[k].as_f64().unwrap()).sum();
    assert!((trace - 1.0).abs() < 1e-8);

    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let result = &summary["runs"][0]["result"];
    assert!(result["P_Q_final"].as_f64().unwrap() > 0.9);
    assert_eq!(result["stats"]["invariants_hold"], true);
    assert!(summary["wall_time_s"].as_f64().unwrap() >= 0.0);

    // scanning a config without an axis is a config error
    let o = run(&["scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn preset_fig3_summary_is_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["preset", "fig3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    let nf = summary["runs"][0]["result"]["one_minus_F"].as_f64().unwrap();
    assert!((4e-5..=1.6e-4).contains(&nf), "{nf}");
    let csv = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().nth(2).unwrap(), "t_us,rho_SS,rho_PP,rho_DD,rho_QQ,re_rho_SQ,im_rho_SQ,re_rho_DQ,im_rho_DQ,fidelity");
    // no temporary files are left next to the outputs
    assert_eq!(sorted_files(dir.path()), ["resolved_config.toml", "summary.json", "timeseries.csv"]);
}

#[test]
fn list_presets_names_every_figure() {
    let o = run(&["list-presets"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig3", "fig4_weak", "fig4_strong", "fig5", "fig6_strong_near", "fig6_strong_far", "fig6_weak_near",
        "fig6_weak_far", "fig7", "fig8", "reverse"]
    {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
}
