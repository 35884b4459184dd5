use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use driftflow_cli::execute::{parse_manifest, CERTIFICATE_FILE, MANIFEST_FILE};
use driftflow_cli::exit;
use driftflow_cli::sweep::SweepSummary;
use tempfile::TempDir;

const SHARP: &str = "name = \"sharp\"\n[geometry]\nkind = \"scaled_gaussian\"\nu0 = 2.0\n\
[flow]\nhorizon = 0.6931471805599453\neigen_count = 1\ntracked_scalars = 1\noutput_every = 10\n";

fn driftflow(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_driftflow"));
    cmd.args(args).env_remove("DRIFTFLOW_OUT");
    if let Some(p) = env_out {
        cmd.env("DRIFTFLOW_OUT", p);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn columns(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = csv.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn sharp_run_matches_bound_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sharp.toml", SHARP);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = driftflow(&["run", "--strict", "--config", &cfg, "--out", out.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(!csv.contains('\r') && csv.ends_with('\n'));
    let (header, rows) = columns(&csv);
    assert_eq!(
        header,
        ["t", "lambda_0", "lambda_1", "bound_1", "volume", "E_1", "residual_IJ", "residual_commutator"]
    );
    assert_eq!(rows.len(), 71);
    for r in &rows {
        assert!(((r[2] - r[3]) / r[3]).abs() < 1e-8);
    }
    for f in ["trajectory.csv", "bounds.csv", MANIFEST_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let m = parse_manifest(&fs::read_to_string(a.join(MANIFEST_FILE)).unwrap()).unwrap();
    let listed: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(listed, ["trajectory.csv", "bounds.csv"]);
    let mut on_disk: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    on_disk.sort();
    assert_eq!(on_disk, ["bounds.csv", "trajectory.csv"]);
    assert!(m.oracle_reports.iter().any(|r| r.oracle == "dense_spectrum"));
    assert!(m.all_passed());
}

#[test]
fn config_error_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", "name = \"bad\"\n[geometry]\nkind = \"round_circle\"\na0 = -1.0\n");
    let out = dir.path().join("out");
    let o = driftflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=config reason=\""), "{err}");
    assert!(!out.exists());

    let cfg = write(&dir, "typo.toml", &format!("{SHARP}hoizon = 1.0\n"));
    let o = driftflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(exit::CONFIG));

    let o = driftflow(&["run", "--config", "/nonexistent/x.toml"], None);
    assert_eq!(o.status.code(), Some(exit::IO));
}

#[test]
fn stability_error_has_its_own_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "rough.toml",
        "name = \"rough\"\n[geometry]\nkind = \"circle\"\nmetric = { cos = [1.0] }\n\
         weight = { cos = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1e-3] }\n\
         [resolution]\ncircle_nodes = 32\n[flow]\nhorizon = 1.0\neigen_count = 1\noutput_every = 100\nmode_cutoff = 16\n",
    );
    let out = dir.path().join("out");
    let o = driftflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(exit::STABILITY), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error kind=stability"));
    assert!(!out.exists());
}

#[test]
fn strict_turns_failed_checks_into_exit_code() {
    let dir = TempDir::new().unwrap();
    let text = SHARP.replace("output_every = 10\n", "output_every = 10\n[verify]\nbound_slack = 0.0\ncommutator_tolerance = 0.0\n");
    let cfg = write(&dir, "tight.toml", &text);
    let out = dir.path().join("out");
    let o = driftflow(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(exit::OK));
    let o = driftflow(&["run", "--strict", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(exit::VERIFICATION));
    assert!(out.join(MANIFEST_FILE).exists());
}

#[test]
fn splitting_scenario_emits_valid_certificate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "split.toml",
        "name = \"split\"\n[geometry]\nkind = \"product\"\n\
         [[geometry.factors]]\nkind = \"scaled_gaussian\"\nu0 = 1.0\n\
         [[geometry.factors]]\nkind = \"round_circle\"\na0 = 0.25\n\
         [resolution]\ncircle_nodes = 32\nhermite_order = 12\n\
         [flow]\nhorizon = 0.2\neigen_count = 2\noutput_every = 20\nmode_cutoff = 16\n\
         [verify]\nsplitting = true\n",
    );
    let o = driftflow(&["run", "--config", &cfg], Some(dir.path()));
    assert_eq!(o.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("split");
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join(CERTIFICATE_FILE)).unwrap()).unwrap();
    assert_eq!(cert["outcome"], "certificate");
    assert_eq!(cert["valid"], true);
    let m = parse_manifest(&fs::read_to_string(run.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert!(m.files.iter().any(|f| f.name == CERTIFICATE_FILE));
}

#[test]
fn sweep_runs_each_point_in_its_own_directory() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "sweep.toml",
        "name = \"g\"\n[geometry]\nkind = \"scaled_gaussian\"\nu0 = 2.0\n[flow]\nhorizon = 0.2\neigen_count = 1\noutput_every = 10\n\
         [sweep]\n\"geometry.u0\" = [1.5, 3.0]\n\"flow.eigen_count\" = [1, 2]\n",
    );
    let out = dir.path().join("sweep");
    let o = driftflow(&["sweep", "--strict", "--jobs", "2", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: SweepSummary = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(summary.runs.len(), 4);
    for (i, r) in summary.runs.iter().enumerate() {
        assert_eq!(r.index, i);
        assert!(out.join(&r.dir).join(MANIFEST_FILE).exists());
    }
    let (header, _) = columns(&fs::read_to_string(out.join("run-0001/trajectory.csv")).unwrap());
    assert!(header.contains(&"lambda_1".to_string()) && !header.contains(&"lambda_2".to_string()));

    let o = driftflow(&["report", "--strict", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(exit::OK));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("run ")).count(), 4);

    fs::write(out.join("run-0002/bounds.csv"), "tampered\n").unwrap();
    fs::write(out.join("run-0003/stray.txt"), "x").unwrap();
    let o = driftflow(&["report", "--strict", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(exit::VERIFICATION));
    assert!(String::from_utf8_lossy(&o.stdout).contains("problems=2"));
}
