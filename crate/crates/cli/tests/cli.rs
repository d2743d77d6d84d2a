use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use skinflow_cli::commands::config_from_manifest;
use skinflow_cli::RunConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skinflow"))
}

fn run_in(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Header metadata and data rows of a CSV dataset.
fn read_csv(path: &Path) -> (Value, Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let meta: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (meta, header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn out(dir: &Path, file: &str) -> PathBuf {
    dir.join("out").join(file)
}

#[test]
fn predict_single_gamma() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), Some("[predict]\ngammas = [-0.5]\n"), &["predict"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (meta, header, rows) = read_csv(&out(d.path(), "predict.csv"));
    assert_eq!(rows.len(), 1);
    let a_in: f64 = rows[0][col(&header, "a_in")].parse().unwrap();
    let a_out: f64 = rows[0][col(&header, "a_out")].parse().unwrap();
    assert!((a_in - 2.16478).abs() < 1e-5);
    assert!((a_out - 5.22625).abs() < 1e-5);
    assert_eq!(rows[0][col(&header, "regime")], "coexistence");
    // defaults are materialized in the embedded config
    assert_eq!(meta["config"]["classifier"]["base_length"].as_f64().unwrap(), 50.0 * std::f64::consts::PI);
    assert_eq!(meta["config"]["basin"]["density"]["s0"].as_f64().unwrap(), 4.0);
}

#[test]
fn predict_grid_has_fold_at_minus_one() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), None, &["predict"]);
    assert!(o.status.success());
    let (_, header, rows) = read_csv(&out(d.path(), "predict.csv"));
    let regime = col(&header, "regime");
    let g = col(&header, "gamma");
    let first_coexist = rows.iter().find(|r| r[regime] == "coexistence").unwrap();
    let last_skin = rows.iter().filter(|r| r[regime] == "skin_only").last().unwrap();
    assert!(last_skin[g].parse::<f64>().unwrap() < -1.0);
    assert!(first_coexist[g].parse::<f64>().unwrap() > -1.0);
    assert!(rows.iter().any(|r| r[regime] == "fold_point"));
}

#[test]
fn invalid_model_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), Some("[model]\na = -0.5\n"), &["predict"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a must be > 0"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_rejected_with_location() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), Some("[integrator]\nrel_tol = 1e-9\nrel_tl = 1e-9\n"), &["predict"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("rel_tl") && e.contains("line 3"), "{e}");
}

#[test]
fn unknown_figure_and_command_exit_4() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), None, &["reproduce", "fig5"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("fig5"));
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn sweep_validation() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), Some("[sweep]\nn_steps = 5\n"), &["sweep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_steps"));
}

#[test]
fn empty_bifurcation_range_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), Some("[bifurcation]\ngamma_start = -0.5\ngamma_stop = -0.5\n"), &["bifurcation"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty gamma range"));
}

#[test]
fn numerical_failure_keeps_partial_output() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), Some("[bifurcation]\ncorrector_iterations = 1\nmin_step = 0.01\n"), &["bifurcation"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let (meta, _, rows) = read_csv(&out(d.path(), "bifurcation_branch.csv"));
    assert!(!rows.is_empty());
    assert!(meta["info"]["stop_reason"].as_str().unwrap().starts_with("error"));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out(d.path(), "manifest.json")).unwrap()).unwrap();
    assert!(manifest["status"].as_str().unwrap().contains("numerical failure"));
}

#[test]
fn output_is_deterministic_and_manifest_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[trajectory]\ngamma = -0.5\nslope = 10.0\nsamples = 501\n";
    let first = run_in(d.path(), Some(cfg), &["trajectory"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let a = std::fs::read(out(d.path(), "trajectory.csv")).unwrap();
    let second = run_in(d.path(), Some(cfg), &["trajectory"]);
    assert!(second.status.success());
    let b = std::fs::read(out(d.path(), "trajectory.csv")).unwrap();
    assert_eq!(a, b);

    let manifest_path = out(d.path(), "manifest.json");
    let back = config_from_manifest(&manifest_path).unwrap();
    let (meta, header, rows) = read_csv(&out(d.path(), "trajectory.csv"));
    let embedded: RunConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(back, embedded.finalize().unwrap());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), skinflow_cli::commands::config_sha256(&back));

    assert_eq!(rows.len(), 501);
    assert_eq!(meta["info"]["classification"]["outcome"], "Extended");
    // floats carry 17 significant digits
    let x = &rows[1][col(&header, "x")];
    assert_eq!(x.split('e').next().unwrap().len(), 18, "{x}");
    let v: f64 = rows[1][col(&header, "v")].parse().unwrap();
    let vn: f64 = rows[1][col(&header, "v_norm")].parse().unwrap();
    assert!((vn - v / 4.0).abs() < 1e-15 * v.abs().max(1.0));
}

#[test]
fn toml_round_trip_of_effective_config() {
    let cfg = RunConfig::default().finalize().unwrap();
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
}

#[test]
fn json_format_mirrors_columns() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), Some("[predict]\ngammas = [-1.5, -0.5, 0.0, 0.3]\n"), &["predict", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out(d.path(), "predict.json")).unwrap()).unwrap();
    let cols = doc["columns"].as_array().unwrap();
    assert_eq!(cols[0]["name"], "gamma");
    let a_in = &cols.iter().find(|c| c["name"] == "a_in").unwrap()["values"];
    assert!(a_in[0].is_null());
    assert!((a_in[1].as_f64().unwrap() - 2.164784400584788).abs() < 1e-15);
    assert_eq!(doc["metadata"]["config"]["output"]["format"], "json");
}

#[test]
fn window_confined_sweep_never_switches() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[sweep]\ngamma_high = -0.1\ngamma_low = -0.85\ndirection = \"down\"\nn_steps = 30\n";
    let o = run_in(d.path(), Some(cfg), &["sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, header, rows) = read_csv(&out(d.path(), "sweep_summary.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col(&header, "switch_gamma")], "");
    assert_eq!(rows[0][col(&header, "label_changes")], "0");
}

#[test]
fn malformed_density_file_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("mu.csv"), "s,density\n0,1\n1,abc\n").unwrap();
    let cfg = format!("[basin.density]\nkind = \"file\"\npath = \"{}\"\n", d.path().join("mu.csv").display());
    let o = run_in(d.path(), Some(&cfg), &["basin"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("abc"));
}

#[test]
fn custom_density_gives_the_same_basin_shape() {
    let d = tempfile::tempdir().unwrap();
    let mut table = String::from("# gaussian slope density\ns,density\n");
    for k in -400..=400 {
        let s = k as f64 * 0.1;
        table += &format!("{s},{}\n", (-s * s / 200.0).exp());
    }
    std::fs::write(d.path().join("mu.csv"), table).unwrap();
    let cfg = format!(
        "[basin]\nstep = 0.1\n[basin.density]\nkind = \"file\"\npath = \"{}\"\n",
        d.path().join("mu.csv").display()
    );
    let o = run_in(d.path(), Some(&cfg), &["basin", "--workers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (meta, header, rows) = read_csv(&out(d.path(), "basin_points.csv"));
    let gc = meta["info"]["gamma_c"].as_f64().unwrap();
    let (g, p) = (col(&header, "gamma"), col(&header, "p_skin"));
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[g].parse().unwrap(), r[p].parse().unwrap())).collect();
    assert!(pts.iter().filter(|(x, _)| *x < gc).all(|(_, p)| *p == 1.0));
    assert!(pts.iter().filter(|(x, _)| *x >= 0.0).all(|(_, p)| *p == 0.0));
    let inside: Vec<f64> = pts.iter().filter(|(x, _)| *x > gc && *x < 0.0).map(|(_, p)| *p).collect();
    assert!(inside.windows(2).all(|w| w[1] < w[0]));
    assert!(1.0 - inside[0] >= 0.05);
}

#[test]
fn zero_workers_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), None, &["predict", "--workers", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["predict", "--out"]).arg(d.path().join("env")).env("SKINFLOW_WORKERS", "3").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn reproduce_fig2_writes_nine_panels() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), None, &["reproduce", "fig2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out(d.path(), "manifest.json")).unwrap()).unwrap();
    let sets = manifest["datasets"].as_array().unwrap();
    assert_eq!(sets.len(), 9);
    assert!(sets.iter().all(|s| s["runtime_s"].as_f64().unwrap() >= 0.0));
    let (meta, _, _) = read_csv(&out(d.path(), "fig2e_profile.csv"));
    assert_eq!(meta["info"]["classification"]["outcome"], "Skin");
    let (meta, _, _) = read_csv(&out(d.path(), "fig2f_profile.csv"));
    assert_eq!(meta["info"]["classification"]["outcome"], "Extended");
    let (meta, header, rows) = read_csv(&out(d.path(), "fig2c_portrait.csv"));
    assert_eq!(meta["info"]["cycles"].as_array().unwrap().len(), 2);
    let kinds: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[col(&header, "kind")].as_str()).collect();
    assert!(kinds.contains("stable_cycle") && kinds.contains("unstable_cycle"));
}

#[test]
fn reproduce_fig3_deviation_is_small() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), None, &["reproduce", "fig3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, header, rows) = read_csv(&out(d.path(), "fig3_branch.csv"));
    let (g, dev) = (col(&header, "gamma"), col(&header, "rel_deviation"));
    let mut checked = 0;
    for r in &rows {
        let gamma: f64 = r[g].parse().unwrap();
        if (-0.9..=0.5).contains(&gamma) && !r[dev].is_empty() {
            assert!(r[dev].parse::<f64>().unwrap().abs() < 0.1, "gamma {gamma}");
            checked += 1;
        }
    }
    assert!(checked > 20);
    let (_, fh, fr) = read_csv(&out(d.path(), "fig3_fold.csv"));
    assert!((fr[0][col(&fh, "gamma_c")].parse::<f64>().unwrap() + 1.0).abs() < 0.05);
}
