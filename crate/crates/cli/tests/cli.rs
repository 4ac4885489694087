use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use packetscat::wigner::{negativity_volume, WignerGrid};
use packetscat_cli::run::{ASYMMETRY_HEADER, SCALING_HEADER};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_packetscat"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(config: &Path, out: &Path, threads: Option<usize>) -> Output {
    let mut cmd = bin();
    if let Some(n) = threads {
        cmd.arg("--threads").arg(n.to_string());
    }
    cmd.arg("run").arg(config).arg("--out").arg(out).output().unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

#[test]
fn minimal_config_gives_zero_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&configs().join("minimal.json"), &out, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["status"], "ok");
    let bins = r["bins"].as_array().unwrap();
    assert_eq!(bins.len(), 3 * 16);
    assert!(bins.iter().all(|b| b["first_order_ratio"].as_f64() == Some(0.0)));
    let csv = fs::read_to_string(out.join("asymmetry.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(ASYMMETRY_HEADER));
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!((cells[4], cells[5]), ("", ""));
    }
    assert!(!out.join("scaling.csv").exists());
}

#[test]
fn cat_negativity_recomputed_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&configs().join("cat_wigner.json"), &out, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let reported = report(&out)["wigner"][0]["negativity_volume"].as_f64().unwrap();
    let grid = WignerGrid::from_csv(&fs::read_to_string(out.join("wigner_cat.csv")).unwrap()).unwrap();
    let recomputed = negativity_volume(&grid);
    assert!(reported > 0.01);
    assert!((recomputed - reported).abs() <= 1e-9, "{recomputed} {reported}");
}

#[test]
fn missing_mass_exits_1_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(configs().join("minimal.json")).unwrap()).unwrap();
    cfg["particles"][1].as_object_mut().unwrap().remove("mass");
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = run(&path, &out, None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("particles[1].mass"));
    assert!(!out.exists());
}

#[test]
fn numerical_failure_exits_2_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(configs().join("cat_wigner.json")).unwrap()).unwrap();
    // Far too narrow a window: the packet spills over the edges.
    cfg["observables"]["wigner"][0]["grid"]["r_range"] = json!([-500.0, 500.0]);
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = run(&path, &out, None);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "numerical_failure");
    let diag = &r["diagnostics"][0];
    assert_eq!(diag["stage"], "wigner:cat");
    assert_eq!(diag["kind"], "aliasing_detected");
    assert!(!out.join("wigner_cat.csv").exists());
    // The remaining observables still ran.
    assert!(out.join("asymmetry.csv").exists());
}

#[test]
fn shipped_configs_validate() {
    let mut count = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let o = bin().arg("validate").arg(&path).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&o.stdout));
        assert!(o.stdout.is_empty());
        count += 1;
    }
    assert!(count >= 5);
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(configs().join("minimal.json")).unwrap()).unwrap();
    cfg["particles"][0]["packet"]["sigma"] = json!([-0.001]);
    let path = write_config(dir.path(), &cfg);
    let o = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.starts_with("particles[0].packet.sigma[0]:"));

    cfg["particles"][1]["packet"] = json!({"dim": 1, "kind": "vortex", "sigma": [0.001], "kappa": 0.002, "ell": 1});
    cfg["colour"] = json!("blue");
    let path = write_config(dir.path(), &cfg);
    let o = bin().arg("validate").arg(&path).output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("vortex requires dim=2"), "{text}");
    assert!(text.contains("colour: unknown key"), "{text}");
    assert!(text.lines().count() >= 3, "{text}");
}

#[test]
fn output_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["vortex_mc.json", "scaling.json"] {
        let (one, many) = (dir.path().join(format!("{name}-1")), dir.path().join(format!("{name}-n")));
        assert_eq!(run(&configs().join(name), &one, Some(1)).status.code(), Some(0));
        assert_eq!(run(&configs().join(name), &many, Some(8)).status.code(), Some(0));
        for entry in fs::read_dir(&one).unwrap() {
            let file = entry.unwrap().file_name();
            if file.to_string_lossy().ends_with(".csv") {
                assert_eq!(fs::read(one.join(&file)).unwrap(), fs::read(many.join(&file)).unwrap(), "{file:?}");
            }
        }
        let (a, b) = (report(&one), report(&many));
        assert_eq!(a["config_hash"], b["config_hash"]);
        assert_eq!(a["bins"], b["bins"]);
    }
}

#[test]
fn scaling_table_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&configs().join("scaling.json"), &out, None).status.code(), Some(0));
    let csv = fs::read_to_string(out.join("scaling.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(SCALING_HEADER));
    assert_eq!(csv.lines().count(), 6);
    let r = report(&out);
    assert!(r["scaling"]["quadratic_fraction"].as_f64().unwrap() < 0.1);
    assert!(r["counts"]["oracle_evaluations"].as_u64().unwrap() > 0);
    assert_eq!(r["seed"], 7);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn nm_kev_configs_report_atom_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&configs().join("atom.json"), &out, None).status.code(), Some(0));
    let r = report(&out);
    let scale = r["atom_scale"][0]["scale"].as_f64().unwrap();
    assert!((scale - 0.53).abs() < 1e-12);
    let atom = r["atom_scale"][0]["asymmetry"].as_f64().unwrap().abs();
    assert!(atom > 1e-3, "{atom}");
}

#[test]
fn version_flag() {
    let o = bin().arg("--version").output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}
