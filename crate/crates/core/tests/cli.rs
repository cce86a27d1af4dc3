use std::fs;
use std::path::Path;
use std::process::Command;

use vfv::io::load_field;

fn vfv(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vfv")).args(args).output().expect("binary runs")
}

const TINY_MC: &str = "\
[grid]
nx = 8
ny = 8
[scheme]
t_final = 0.05
[kh]
eps_perturb = 0.1
[mc]
seed = 11
counts = 1,2
repetitions = 2
n_ref = 2
ladder = 8
";

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.ini");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn solve_keeps_constant_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[grid]\nnx = 16\nny = 16\n[scheme]\nt_final = 0.25\n[initial]\nkind = uniform\nrho = 1\nu1 = 0.5\n[output]\nsnapshots = 0,0.125\n",
    );
    let out = dir.path().join("solve");
    let res = vfv(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let first = load_field(out.join("snapshot_000.efld")).unwrap();
    let last = load_field(out.join("snapshot_002.efld")).unwrap();
    assert_eq!(first, last);
    assert!(first.rho().iter().all(|r| *r == 1.0));
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert!(steps.starts_with("step,t,picard_iters,residual,mass_drift,energy\n"));
    assert_eq!(steps.lines().count(), 1 + 8);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "solve");
    assert_eq!(manifest["formats"]["field"], "EFLD1");
    let canonical = fs::read_to_string(out.join("config.ini")).unwrap();
    assert_eq!(manifest["config_sha256"], vfv::cli::config_hash(&canonical));
    // the stored configuration reproduces the run
    let again = vfv::config::parse_config(&canonical).unwrap();
    assert_eq!(again.nx, 16);
}

#[test]
fn monte_carlo_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY_MC);
    let run = |kind: &str, name: &str, workers: &str| {
        let out = dir.path().join(name);
        let res = vfv(&[kind, "--config", &cfg, "--out", out.to_str().unwrap(), "--set", &format!("run.workers={workers}")]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        out
    };
    let a = run("mc-e1", "a", "1");
    let b = run("mc-e1", "b", "2");
    let e1 = fs::read(a.join("e1.csv")).unwrap();
    assert_eq!(e1, fs::read(b.join("e1.csv")).unwrap());
    assert_eq!(fs::read(a.join("e1_plot.csv")).unwrap(), fs::read(b.join("e1_plot.csv")).unwrap());

    let c = run("mc-e2", "c", "1");
    assert_eq!(e1, fs::read(c.join("e2.csv")).unwrap());
    let text = String::from_utf8(e1).unwrap();
    assert!(text.starts_with("N,err_rho,ord_rho,err_m1,ord_m1,err_m2,ord_m2\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn total_error_and_consistency_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{TINY_MC}pairs = 4:1,8:2\nreference_cells = 16\n[consistency]\nlevels = 8,16\n"),
    );
    let out = dir.path().join("te");
    let res = vfv(&["total-error", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("total_error.csv")).unwrap();
    assert!(table.starts_with("h,N,err_rho"));
    assert_eq!(table.lines().count(), 3);

    let out = dir.path().join("cons");
    let res = vfv(&["consistency", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("consistency.csv")).unwrap();
    assert!(table.starts_with("h,e1,e2,e3\n"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn failures_leave_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scheme]\nalpha = 0.9\n");
    let out = dir.path().join("bad");
    let res = vfv(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(record["status"], "error");
    assert_eq!(record["kind"], "config");
    assert!(record["message"].as_str().unwrap().contains("scheme.alpha"));
    assert!(!out.join("manifest.json").exists());

    let res = vfv(&["solve", "--set", "grid.bogus=1", "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
}

#[test]
fn norms_of_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let grid = vfv::Grid::unit_square(8).unwrap();
    let state = vfv::FieldSet::uniform(grid, 3.0, [0.0, -1.0]).unwrap();
    let path = dir.path().join("f.efld");
    vfv::io::save_field(&path, &state).unwrap();
    let res = vfv(&["norms", path.to_str().unwrap(), "--q", "1,2", "--ell", "1,4"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let vals: Vec<f64> = row[2..].iter().map(|v| v.parse().unwrap()).collect();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert_eq!(vals[1], 0.0);
        assert!((vals[2] - 3.0).abs() < 1e-12);
    }
}
