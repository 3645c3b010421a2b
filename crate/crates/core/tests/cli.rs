use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use apc_platform::controllers::ControllerId;
use apc_platform::numerics::format_g9;
use apc_platform::platform::{run_standalone, PlatformSetup};

fn apc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("APC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn summary_value(summary: &str, key: &str) -> String {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("{key} missing from\n{summary}"))
        .trim()
        .to_string()
}

#[test]
fn local_only_scenario_matches_standalone_pi() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "pi.scenario", "duration = 1.0\n[controllers]\nenabled = [0]\n");
    let out = apc(&["simulate", scenario.to_str().unwrap(), "--out", "res"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(tmp.path().join("res/summary.txt")).unwrap();

    let mut setup = PlatformSetup::canonical(2021);
    setup.duration = 1.0;
    let trace = run_standalone(&setup, ControllerId::LOCAL_PI).unwrap();
    let sse = trace.sse(setup.selector.w_e);
    assert_eq!(summary_value(&summary, "SSE_tot:"), format_g9(sse.total));
    assert_eq!(summary_value(&summary, "SSE_v:"), format_g9(sse.sse_v));
    let trace_csv = std::fs::read_to_string(tmp.path().join("res/trace.csv")).unwrap();
    assert_eq!(trace_csv.lines().count(), 501);
    let horizons = std::fs::read_to_string(tmp.path().join("res/horizons.csv")).unwrap();
    assert_eq!(horizons.lines().count(), 3);
}

#[test]
fn malformed_scenarios_leave_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.scenario", "duration = \n"),
        ("field.scenario", "[selector]\nhorizon = 0.05\n"),
        ("ids.scenario", "[controllers]\nenabled = [0, 9]\n"),
        ("missing.scenario", "[disturbance]\nkind = \"file\"\npath = \"nowhere.csv\"\n"),
    ];
    for (name, text) in cases {
        let path = write(tmp.path(), name, text);
        let out = apc(&["simulate", path.to_str().unwrap(), "--out", "res"], tmp.path());
        assert!(!out.status.success(), "{name} should fail");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
        assert!(!tmp.path().join("res").exists(), "{name} left outputs behind");
    }
    let out = apc(&["simulate", "absent.scenario"], tmp.path());
    assert!(!out.status.success());
    let syntax = apc(&["simulate", "syntax.scenario"], tmp.path());
    assert!(String::from_utf8_lossy(&syntax.stderr).contains("line 1"));
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_apc"))
        .args(["step-study", "--controller", "1", "--duration", "0.2"])
        .current_dir(tmp.path())
        .env("APC_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("from-env/step_response.csv").exists());
    assert!(tmp.path().join("from-env/step_summary.txt").exists());
}

#[test]
fn step_study_zero_step_is_flat() {
    let tmp = tempfile::tempdir().unwrap();
    let out = apc(
        &["step-study", "--controller", "2", "--step", "0", "--duration", "0.3", "--out", "s"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("s/step_response.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cells[3] - 10.0).abs() < 1e-9 && (cells[4] - 1.4).abs() < 1e-9, "{line}");
    }
    let bad = apc(&["step-study", "--controller", "4"], tmp.path());
    assert!(!bad.status.success());
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn analyze_default_and_custom_models() {
    let tmp = tempfile::tempdir().unwrap();
    let out = apc(&["analyze", "--out", "a"], tmp.path());
    assert!(out.status.success());
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("poles: {0, -75}"));
    assert!(report.contains("[0.8, 0.2]") && report.contains("[0.2, 0.8]"));
    assert!(report.contains("[1, 4]"));
    for csv in ["sweep_g.csv", "sweep_gd.csv", "rejection.csv"] {
        let text = std::fs::read_to_string(tmp.path().join("a").join(csv)).unwrap();
        assert_eq!(text.lines().count(), 201, "{csv}");
    }

    let model = write(
        tmp.path(),
        "diag.toml",
        "a = [[-1.0, 0.0], [0.0, -2.0]]\nb = [[3.0, 0.0], [0.0, 5.0]]\ngd = [[1.0], [1.0]]\n",
    );
    let out = apc(&["analyze", "--model", model.to_str().unwrap(), "--out", "b"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("[1, 0]") && report.contains("[0, 1]"), "{report}");
}
