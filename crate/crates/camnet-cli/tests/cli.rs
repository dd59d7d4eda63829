//! Argument plumbing and exit-code checks. Every KPI behavior itself is
//! covered by the library suites; here we only prove the shell reaches
//! them and reports failures with the right status.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use tempfile::TempDir;

fn camnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_camnet"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// One v2i-solo run shared by the analyze tests.
fn solo_dir() -> &'static Path {
    static DIR: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    let (_, path) = DIR.get_or_init(|| {
        let tmp = TempDir::new().unwrap();
        let out = tmp.path().join("solo");
        let status = camnet()
            .args(["simulate", "--preset", "v2i-solo", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        (tmp, out)
    });
    path
}

#[test]
fn simulate_preset_writes_logs_and_summary() {
    let dir = solo_dir();
    for f in [
        "hydrogen_hp_tx.log",
        "vehicle1_hp_rx.log",
        "vehicle1_lp_tx.log",
        "summary.txt",
    ] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let summary = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary.contains("overall pdr"));
    assert!(summary.contains("scenario v2i-solo"));
}

#[test]
fn print_config_dumps_resolved_toml_without_running() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("never-created");
    let o = camnet()
        .args(["simulate", "--preset", "v2v-highway", "--print-config", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("[scenario]"));
    assert!(text.contains("name = \"v2v-highway\""));
    assert!(!out_dir.exists(), "print-config must not run the scenario");
}

#[test]
fn seed_flag_beats_env_beats_config() {
    let from_env = camnet()
        .args(["simulate", "--preset", "v2v-highway", "--print-config"])
        .env("CAMNET_SEED", "42")
        .output()
        .unwrap();
    assert!(stdout(&from_env).contains("seed = 42"));

    let from_flag = camnet()
        .args(["simulate", "--preset", "v2v-highway", "--print-config", "--seed", "7"])
        .env("CAMNET_SEED", "42")
        .output()
        .unwrap();
    assert!(stdout(&from_flag).contains("seed = 7"));

    let bad_env = camnet()
        .args(["simulate", "--preset", "v2v-highway", "--print-config"])
        .env("CAMNET_SEED", "many")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
    assert!(stderr(&bad_env).contains("CAMNET_SEED"));
}

#[test]
fn simulate_runs_a_custom_config_file() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("tiny.toml");
    std::fs::write(
        &config,
        r#"
            [scenario]
            name = "tiny"
            duration_us = 1000000

            [[node]]
            id = "mast"
            kind = "rsu"
            lat = 51.0
            lon = -2.0
            height_m = 8.0
        "#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let o = camnet()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out_dir.join("mast_hp_tx.log").is_file());
}

#[test]
fn missing_trace_file_exits_one_and_names_the_path() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("broken.toml");
    std::fs::write(
        &config,
        r#"
            [scenario]
            duration_us = 1000000

            [[node]]
            id = "veh"
            kind = "obu"
            trace_file = "no-such-trace.csv"
        "#,
    )
    .unwrap();
    let o = camnet()
        .args(["simulate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("no-such-trace.csv"),
        "stderr: {}",
        stderr(&o)
    );
}

#[test]
fn unknown_preset_exits_one_and_lists_options() {
    let o = camnet()
        .args(["simulate", "--preset", "nope"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("v2i-interferer"));
}

#[test]
fn analyze_pdr_heatmap_stays_in_unit_range() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("heatmap.csv");
    let o = camnet()
        .arg("analyze")
        .arg(solo_dir())
        .args(["--kpi", "pdr-heatmap", "--tx", "hydrogen", "--rx", "vehicle1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cell_x,cell_y,lat,lon,tx,rx,pdr"));
    let mut rows = 0;
    for line in lines {
        let pdr: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&pdr), "pdr {pdr} out of range");
        rows += 1;
    }
    assert!(rows > 10, "only {rows} cells");
}

#[test]
fn analyze_intervals_of_jitterless_mast_is_one_bin() {
    let o = camnet()
        .arg("analyze")
        .arg(solo_dir())
        .args(["--kpi", "intervals", "--tx", "hydrogen"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bin_start,count");
    assert_eq!(lines.len(), 2, "jitterless mast should fill one bin: {text}");
    assert!(lines[1].starts_with("10000,"));
}

#[test]
fn analyze_horizon_and_uplink_produce_exports() {
    let horizon = camnet()
        .arg("analyze")
        .arg(solo_dir())
        .args(["--kpi", "horizon", "--tx", "hydrogen", "--rx", "vehicle1"])
        .output()
        .unwrap();
    assert!(horizon.status.success(), "{}", stderr(&horizon));
    let text = stdout(&horizon);
    assert!(text.starts_with("bin_start,count\n"));
    assert!(text.lines().count() > 2);

    let uplink = camnet()
        .arg("analyze")
        .arg(solo_dir())
        .args(["--kpi", "uplink", "--tx", "vehicle1", "--rx", "hydrogen"])
        .output()
        .unwrap();
    assert!(uplink.status.success(), "{}", stderr(&uplink));
    let text = stdout(&uplink);
    assert!(text.starts_with("lat,lon\n"));
    assert!(text.lines().count() > 100);
}

#[test]
fn analyze_unknown_node_exits_one_and_names_the_file() {
    let o = camnet()
        .arg("analyze")
        .arg(solo_dir())
        .args(["--kpi", "intervals", "--tx", "ghost"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ghost_hp_tx.log"), "{}", stderr(&o));
}

#[test]
fn analyze_missing_selector_exits_one() {
    let o = camnet()
        .arg("analyze")
        .arg(solo_dir())
        .args(["--kpi", "pdr-heatmap", "--tx", "hydrogen"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--rx"));
}

#[test]
fn replay_normalizes_canonical_and_headerless_alike() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    std::fs::create_dir(&raw).unwrap();

    let canonical = std::fs::read_to_string(solo_dir().join("vehicle1_hp_tx.log")).unwrap();
    std::fs::write(raw.join("headered.log"), &canonical).unwrap();
    let headerless: String = canonical.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(raw.join("headerless.log"), &headerless).unwrap();

    let norm = tmp.path().join("norm");
    let o = camnet()
        .arg("replay")
        .arg(&raw)
        .arg("--out")
        .arg(&norm)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read_to_string(norm.join("headered.log")).unwrap();
    let b = std::fs::read_to_string(norm.join("headerless.log")).unwrap();
    assert_eq!(a, canonical, "canonical replay must be the identity");
    assert_eq!(b, canonical, "headerless must normalize to the same bytes");
}

#[test]
fn replay_rejects_empty_dir_and_garbage() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = camnet().arg("replay").arg(&empty).output().unwrap();
    assert_eq!(o.status.code(), Some(1));

    let bad = tmp.path().join("bad");
    std::fs::create_dir(&bad).unwrap();
    std::fs::write(bad.join("junk.log"), "this,is,not,a,log\n").unwrap();
    let o = camnet().arg("replay").arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unrecognized layout"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let o = camnet().arg("simulate").output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = camnet().args(["analyze", "somewhere"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
