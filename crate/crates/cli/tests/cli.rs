use std::path::Path;
use std::process::{Command, Output};

fn rsoanom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsoanom"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "seed = 3\nout_dir = \"out\"\n\n[data]\ntle = \"out/synth/corpus.tle\"\nsatcat = \"out/synth/satcat.csv\"\n\
         missions_primary = \"out/synth/missions_primary.csv\"\nmissions_secondary = \"out/synth/missions_secondary.csv\"\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn synth_ingest_train_twice_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_string_lossy().into_owned();
    let synth = json(&rsoanom(&["--out", &out_s, "--seed", "3", "synth", "--scenario", "demo"]));
    assert_eq!(synth["objects"], 8);
    assert!(out.join("synth/corpus.tle").is_file());

    let cfg = write_config(tmp.path());
    let ingest = json(&rsoanom(&["--config", &cfg, "ingest", "--configured"]));
    assert_eq!(ingest["report"]["checksum_warnings"], 0);
    assert_eq!(ingest["selected"], 8);

    let first = json(&rsoanom(&["--config", &cfg, "--workers", "1", "train"]));
    assert_eq!((first["trained"].as_u64(), first["up_to_date"].as_u64()), (Some(8), Some(0)));
    let second = json(&rsoanom(&["--config", &cfg, "--workers", "1", "train"]));
    assert_eq!((second["trained"].as_u64(), second["up_to_date"].as_u64()), (Some(0), Some(8)));

    let score = json(&rsoanom(&["--config", &cfg, "score", "--window", "leadup"]));
    assert!(score["observations"].as_u64().unwrap() > 0);

    let eval = json(&rsoanom(&["--config", &cfg, "evaluate"]));
    assert!(eval["agreement_f1"].as_f64().is_some());
    assert!(out.join("evaluate/agreement.csv").is_file());
    assert!(!out.join("evaluate/temporal.csv").exists());

    let stats = json(&rsoanom(&["--config", &cfg, "stats", "--chi2", "baseline,leadup"]));
    assert!(stats["chi_square"].as_f64().unwrap() >= 0.0);
    assert!(out.join("stats/chi2.csv").is_file());
    assert!(!out.join("stats/monthly.csv").exists());
}

#[test]
fn bad_configuration_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\ntrain_window = \"nowhere\"\n").unwrap();
    let out = rsoanom(&["--config", &cfg.to_string_lossy(), "label"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));

    std::fs::write(&cfg, "seed = 1\nunknown_key = 5\n").unwrap();
    assert_eq!(rsoanom(&["--config", &cfg.to_string_lossy(), "label"]).status.code(), Some(2));

    let missing = tmp.path().join("absent.toml");
    assert_eq!(rsoanom(&["--config", &missing.to_string_lossy(), "label"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_code_two() {
    assert_eq!(rsoanom(&["ingest"]).status.code(), Some(2));
    assert_eq!(rsoanom(&["ingest", "--tle", "a", "--fetch"]).status.code(), Some(2));
    assert_eq!(rsoanom(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rsoanom(&["stats", "--chi2", "baseline"]).status.code(), Some(2));
    assert_eq!(rsoanom(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_string_lossy().into_owned();
    json(&rsoanom(&["--out", &out_s, "synth", "--scenario", "demo"]));
    let cfg = write_config(tmp.path());
    // training before ingest has no records to read
    assert_eq!(rsoanom(&["--config", &cfg, "train"]).status.code(), Some(3));
}
