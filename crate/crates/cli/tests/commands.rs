use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference_16_stage.cfg")
}

fn capcoupled(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capcoupled"))
        .args(args)
        .arg("--config")
        .arg(config())
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .parse()
        .unwrap()
}

#[test]
fn steady_reports_the_reference_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = capcoupled(&["steady", "--d1", "0.279"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("operating_point.txt")).unwrap();
    let v = value(&text, "v_out_total");
    assert!((v - 176.0).abs() / 176.0 < 0.01, "{v}");
}

#[test]
fn bode_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = capcoupled(&["bode", "--d1", "0.279"], d.path());
        assert!(out.status.success());
    }
    for name in ["gvd.csv", "gvv.csv", "gvi.csv", "gvd_first_order.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
        let text = String::from_utf8(x).unwrap();
        assert_eq!(text.lines().next(), Some("freq_hz,magnitude_db,phase_deg"));
        assert_eq!(text.lines().count(), 401, "{name}");
    }
}

#[test]
fn verify_tables_lists_every_symbol() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(capcoupled(&["verify-tables"], d.path()).status.success());
    }
    let x = fs::read_to_string(a.path().join("verify_tables.txt")).unwrap();
    assert_eq!(x, fs::read_to_string(b.path().join("verify_tables.txt")).unwrap());
    for sym in [
        "D_T",
        "G_T",
        "I_T",
        "R_P",
        "D_P",
        "V_P",
        "omega_p/2pi",
        "Q_p",
        "omega_o/2pi",
        "omega_rz/2pi",
        "K_p",
        "omega_c/2pi",
    ] {
        assert!(x.contains(&format!("\n{sym},")), "{sym}");
    }
    assert!(x.contains("not reconciled"));
}

#[test]
fn design_pi_writes_controller_and_responses() {
    let dir = tempfile::tempdir().unwrap();
    let out = capcoupled(&["design-pi", "--vref", "176", "--form", "loaded"], dir.path());
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("pi_design.txt")).unwrap();
    assert!(value(&text, "k_p") > 0.0);
    assert!(value(&text, "phase_margin_deg") > 45.0);
    for name in ["gc.csv", "glg.csv", "gvvc.csv", "gvic.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn simulations_write_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = capcoupled(&["sim-switched", "--d1", "0.279", "--t-end", "0.001"], dir.path());
    assert!(out.status.success());
    let trace = fs::read_to_string(dir.path().join("trace_switched.csv")).unwrap();
    assert!(trace.starts_with("time_s,v_ac_v,i_ac_a,i_ls_a,v_out_stage_v,v_out_total_v,d1\n"));

    let out = capcoupled(&["sim-closed-loop", "--t-end", "0.002"], dir.path());
    assert!(out.status.success());
    let trace = fs::read_to_string(dir.path().join("trace_closed_loop.csv")).unwrap();
    assert!(trace.lines().next().unwrap().ends_with(",v_ref_v"));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    assert!(capcoupled(&["steady"], dir.path()).status.success());
    let again = capcoupled(&["steady"], dir.path());
    assert_eq!(again.status.code(), Some(3));
    assert!(capcoupled(&["steady", "--force"], dir.path()).status.success());
}

#[test]
fn exit_codes_classify_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = Command::new(env!("CARGO_BIN_EXE_capcoupled"))
        .args(["steady", "--config", "/nonexistent.cfg", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));

    let bad = capcoupled(&["steady", "--vref", "1000"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("TargetOutOfRange"));

    let scenario = dir.path().join("bad.scn");
    fs::write(&scenario, "0.01, meteor_strike, 3\n").unwrap();
    let bad = capcoupled(
        &["sim-closed-loop", "--scenario", scenario.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(1));

    let usage = capcoupled(&["steady", "--no-such-flag"], dir.path());
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn version_mentions_schema() {
    let out = Command::new(env!("CARGO_BIN_EXE_capcoupled"))
        .arg("--version")
        .output()
        .unwrap();
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        "capcoupled 0.1.0 (config schema 1)"
    );
}
