use std::path::Path;
use std::process::{Command, Output};

fn splitee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitee"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_synth_config(dir: &Path, samples: usize) -> String {
    let path = dir.join("synth.toml");
    std::fs::write(
        &path,
        format!(
            r#"
layers = 12
samples = {samples}
seed = 3
sigma = 0.05

[[difficulty_mix]]
weight = 0.65
steepness = 6.0
midpoint = 2.0

[[difficulty_mix]]
weight = 0.35
steepness = 1.0
midpoint = 9.0
"#
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let synth = write_synth_config(dir.path(), 500);
    let out = dir.path().join("out");
    let res = splitee(&[
        "run", "--synth-config", &synth, "--policy", "splitee-s", "--alpha", "0.8",
        "--runs", "3", "--offload-costs", "1,5", "--out", &p(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["config.json", "summary.json", "sweep.csv", "sweep.txt", "regret_o1.csv", "regret_o5.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("accuracy"), "{stdout}");
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let synth = write_synth_config(dir.path(), 400);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = splitee(&[
            "run", "--synth-config", &synth, "--policy", "random-exit", "--alpha", "0.8",
            "--runs", "1", "--out", &p(out),
        ]);
        assert!(res.status.success());
    }
    for name in ["config.json", "summary.json", "sweep.csv", "regret_o3.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let synth = write_synth_config(dir.path(), 300);
    assert!(splitee(&["synth", "--synth-config", &synth, "--out", &p(&trace)]).status.success());
    let validated = splitee(&["validate", &p(&trace)]);
    assert!(String::from_utf8_lossy(&validated.stdout).contains("L = 12, 300 samples"));

    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            "policy = \"final-exit\"\nalpha = 0.8\nruns = 2\noffload_costs = [5.0]\n[trace]\nfile = \"{}\"\n",
            p(&trace)
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = splitee(&["run", "--config", &p(&cfg), "--policy", "cascade", "--out", &p(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"policy\": \"cascade\""));
}

#[test]
fn baseline_deltas_from_flag() {
    let dir = tempfile::tempdir().unwrap();
    let synth = write_synth_config(dir.path(), 600);
    let base = dir.path().join("base");
    let res = splitee(&[
        "run", "--synth-config", &synth, "--policy", "final-exit", "--alpha", "0.8", "--runs", "1",
        "--offload-costs", "5", "--out", &p(&base),
    ]);
    assert!(res.status.success());
    let out = dir.path().join("learned");
    let res = splitee(&[
        "run", "--synth-config", &synth, "--policy", "splitee", "--alpha", "0.8", "--runs", "2",
        "--offload-costs", "5", "--baseline-summary", &p(&base.join("summary.json")), "--out", &p(&out),
    ]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("vs final-exit"));
}

#[test]
fn distinct_exit_codes_for_named_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(&dir.path().join("out"));

    let missing = splitee(&[
        "run", "--trace", "/no/such/trace.jsonl", "--policy", "splitee", "--alpha", "0.8", "--out", &out,
    ]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("not found"));

    let small = write_synth_config(dir.path(), 5);
    let too_small = splitee(&[
        "run", "--synth-config", &small, "--policy", "splitee", "--alpha", "0.8", "--out", &out,
    ]);
    assert_eq!(too_small.status.code(), Some(4));

    let bad_policy = splitee(&[
        "run", "--synth-config", &small, "--policy", "thompson", "--alpha", "0.8", "--out", &out,
    ]);
    assert_eq!(bad_policy.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&bad_policy.stderr).contains("thompson"));

    let bad_trace = dir.path().join("bad.jsonl");
    std::fs::write(&bad_trace, "{\"L\":2}\n{\"id\":\"a\",\"conf\":[1.2,0.5],\"correct\":[true,true]}\n").unwrap();
    let invalid = splitee(&["validate", &p(&bad_trace)]);
    assert_eq!(invalid.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("line 2"));
}
