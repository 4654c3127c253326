//! End-to-end runs of the `abpole` binary on coarse settings.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn abpole(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abpole")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every output file is listed and its hash matches; nothing else lies outside the cache.
fn check_manifest(dir: &Path) {
    let m = manifest(dir);
    let files = m["files"].as_object().unwrap();
    for (name, hash) in files {
        let bytes = fs::read(dir.join(name)).unwrap();
        assert_eq!(hash.as_str().unwrap(), hex(&bytes), "{name}");
    }
    let mut on_disk = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let e = entry.unwrap();
        let name = e.file_name().into_string().unwrap();
        if e.path().is_file() && name != "manifest.json" {
            on_disk.push(name);
        }
    }
    for name in on_disk {
        assert!(files.contains_key(&name), "{name} missing from the manifest");
    }
    let cfg = fs::read(dir.join("effective-config.json")).unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap(), hex(&cfg));
}

fn snapshot(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| fs::read(dir.join(n)).unwrap()).collect()
}

#[test]
fn dry_run_materialises_defaults() {
    let o = abpole(&["branch", "--dry-run", "--set", "h.base_h=0.05"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["kind"], "branch");
    assert_eq!(v["h"]["base_h"], 0.05);
    assert_eq!(v["h"]["pole_divisor"], 8.0);
    assert_eq!(v["domain"]["shape"]["type"], "disk");
    assert!(v["tolerances"]["solve"].is_number());
}

#[test]
fn bad_configurations_are_errors() {
    let o = abpole(&["spectrum", "--dry-run", "--set", "colour=blue"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"kind": "cones"}"#).unwrap();
    let o = abpole(&["branch", "--dry-run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("config is for `cones`"), "{}", stderr(&o));

    let o = abpole(&["plot", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);

    // A pole outside the domain is reported with its coordinates.
    let out = dir.path().join("run");
    let o = abpole(&["branch", "--out", out.to_str().unwrap(), "--set", "h.base_h=0.1", "--set", r#"t={"values":[1.5,1.2,0.9,0.6]}"#]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("α = 0"), "{}", stderr(&o));
}

#[test]
fn validate_disk_passes_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("vd");
    let o = abpole(&["validate-disk", "--out", out.to_str().unwrap(), "--set", "h_levels=[0.08,0.04]"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    check_manifest(&out);
    let clusters = fs::read_to_string(out.join("clusters.csv")).unwrap();
    assert_eq!(clusters.lines().count(), 4);
    assert!(clusters.lines().skip(1).all(|l| l.ends_with(",true")), "{clusters}");

    let names = ["clusters.csv", "spectrum.csv", "summary.json", "manifest.json"];
    let before = snapshot(&out, &names);
    let cfg = out.join("effective-config.json");
    let o = abpole(&["validate-disk", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(snapshot(&out, &names), before);

    // Without a cache the solves are repeated and give the same bytes.
    let cold = dir.path().join("cold");
    let o = abpole(&["validate-disk", "--config", cfg.to_str().unwrap(), "--out", cold.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(snapshot(&cold, &names[..3]), before[..3].to_vec());
}

#[test]
fn branch_run_fits_and_plots_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("br");
    let o = abpole(&["branch", "--out", out.to_str().unwrap(), "--set", "h.base_h=0.08"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let fits = fs::read_to_string(out.join("fits.csv")).unwrap();
    let rows: Vec<Vec<&str>> = fits.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let coeff = |r: &Vec<&str>| r[4].parse::<f64>().unwrap();
    assert!(coeff(&rows[0]) < 0.0 && coeff(&rows[1]) > 0.0, "{fits}");

    let o = abpole(&["plot", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read(out.join("plots/branches.svg")).unwrap();
    assert!(String::from_utf8_lossy(&svg).starts_with("<svg"));
    check_manifest(&out);
    assert!(manifest(&out)["files"]["plots/branches.svg"].is_string());
    let o = abpole(&["plot", out.to_str().unwrap(), "--what", "branches"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(out.join("plots/branches.svg")).unwrap(), svg);

    // A rerun drops plots that no longer belong to the outputs.
    let cfg = out.join("effective-config.json");
    let before = snapshot(&out, &["branch.csv", "fits.csv"]);
    let o = abpole(&["branch", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(snapshot(&out, &["branch.csv", "fits.csv"]), before);
    assert!(!out.join("plots").exists());
    check_manifest(&out);
}

#[test]
fn too_few_distances_are_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("few");
    let o = abpole(&["branch", "--out", out.to_str().unwrap(), "--set", "h.base_h=0.1", "--set", r#"t={"values":[0.2,0.1,0.05]}"#]);
    assert_eq!(code(&o), 2, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("no fit"));
    check_manifest(&out);
}

#[test]
fn rectangle_splits_along_the_long_axis() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cones");
    let o = abpole(&[
        "cones",
        "--out",
        out.to_str().unwrap(),
        "--set",
        r#"domain={"shape":{"type":"rectangle","w1":1.0,"w2":0.6}}"#,
        "--set",
        "h.base_h=0.08",
        "--set",
        r#"alphas={"values":[0.0,3.141592653589793]}"#,
    ]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(out.join("cones.csv")).unwrap();
    let row: Vec<&str> = csv.lines().find(|l| l.starts_with("0.0,")).unwrap().split(',').collect();
    assert_eq!(row[1], "split");
    let (lo, hi): (f64, f64) = (row[5].parse().unwrap(), row[7].parse().unwrap());
    assert!(lo < 0.0 && hi > 0.0, "{csv}");
    let o = abpole(&["plot", out.to_str().unwrap(), "--what", "cones"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    check_manifest(&out);
}

#[test]
fn g_table_with_property_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = abpole(&["gtable", "--out", out.to_str().unwrap(), "--set", "k=[1]"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let table = fs::read_to_string(out.join("gtable.csv")).unwrap();
    let extrapolated = table.lines().filter(|l| l.contains(",true,")).count();
    assert_eq!(extrapolated, 17);
    let props = fs::read_to_string(out.join("properties.csv")).unwrap();
    assert!(props.lines().count() > 5 && !props.contains(",false,"), "{props}");
    let o = abpole(&["plot", out.to_str().unwrap(), "--what", "g"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("plots/g.svg")).unwrap().contains("ζ₀"));
}

#[test]
fn prediction_matches_measured_slopes_on_the_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = abpole(&["predict", "--out", out.to_str().unwrap(), "--set", "h.base_h=0.06", "--set", r#"blowup={"radii":[4,8,16],"h_levels":[0.125,0.0625]}"#]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(out.join("predict.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    check_manifest(&out);
}

#[test]
fn spectrum_without_crack() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sq");
    let o = abpole(&[
        "spectrum",
        "--out",
        out.to_str().unwrap(),
        "--set",
        r#"domain={"shape":{"type":"rectangle","w1":0.5,"w2":0.5}}"#,
        "--set",
        "pole=null",
        "--set",
        "count=1",
        "--set",
        "h_levels=[0.08,0.04]",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("spectrum.json")).unwrap()).unwrap();
    let l = s["extrapolated"][0].as_f64().unwrap();
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    assert!((l - exact).abs() < 5e-3 * exact, "{l}");
}
