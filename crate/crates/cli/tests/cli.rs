use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;
use vde::trajectory::Trajectory;
use vde::vde::VdeModel;

fn vde_cmd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vde"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn vde")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = vde_cmd(dir, args);
    assert!(
        out.status.success(),
        "vde {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, value: Value) -> String {
    std::fs::write(dir.join(name), value.to_string()).unwrap();
    name.to_string()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn small_config() -> Value {
    json!({
        "simulation": {"n_trajectories": 4, "n_steps": 200000, "save_stride": 100},
        "vde": {"hidden_layers": 1, "hidden_width": 8, "epochs": 1, "dropout": 0.0},
        "split": {"n_splits": 3},
        "msm": {"n_clusters": 6},
        "generate": {"n_steps": 20, "n_starts": 2, "n_bins": 20}
    })
}

/// Simulated data plus a fitted tiny VDE in `dir`.
fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", small_config());
    ok(dir.path(), &["--config", &cfg, "--out", "sim", "simulate"]);
    ok(dir.path(), &["--config", &cfg, "--out", "fit_vde", "fit", "--method", "vde", "sim"]);
    dir
}

#[test]
fn simulate_writes_trajectories_manifest_and_resolved_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        json!({"simulation": {"n_trajectories": 2, "n_steps": 1000, "save_stride": 100}}),
    );
    ok(dir.path(), &["--config", &cfg, "--out", "a", "simulate"]);
    ok(dir.path(), &["--config", &cfg, "--out", "b", "simulate"]);
    for i in 0..2 {
        let f = format!("traj_{i:03}.csv");
        let t = Trajectory::load(dir.path().join("a").join(&f)).unwrap();
        assert_eq!((t.n_frames(), t.n_features()), (10, 2));
        let a = std::fs::read(dir.path().join("a").join(&f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&f)).unwrap();
        assert_eq!(a, b, "reruns are bit-identical");
    }
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"].as_array().unwrap().len(), 2);
    let resolved: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(resolved["command"], "simulate");
    assert_eq!(resolved["config"]["simulation"]["n_steps"], 1000);
}

#[test]
fn single_saved_frame() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        json!({"simulation": {"n_trajectories": 1, "n_steps": 100, "save_stride": 100}}),
    );
    ok(dir.path(), &["--config", &cfg, "simulate"]);
    let t = Trajectory::load(dir.path().join("out/traj_000.csv")).unwrap();
    assert_eq!(t.n_frames(), 1);
}

#[test]
fn seed_flag_changes_the_ensemble() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        json!({"simulation": {"n_trajectories": 1, "n_steps": 1000, "save_stride": 100}}),
    );
    ok(dir.path(), &["--config", &cfg, "--out", "a", "simulate"]);
    ok(dir.path(), &["--config", &cfg, "--seed", "5", "--out", "b", "simulate"]);
    let a = std::fs::read(dir.path().join("a/traj_000.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/traj_000.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", json!({"simulation": {"n_stepz": 10}}));
    let out = vde_cmd(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_stepz"));
}

#[test]
fn invalid_value_and_missing_input_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", json!({"simulation": {"dt": -1.0}}));
    assert_eq!(vde_cmd(dir.path(), &["--config", &cfg, "simulate"]).status.code(), Some(2));
    let out = vde_cmd(dir.path(), &["fit", "--method", "pca", "missing.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn vde_lag_longer_than_data_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        json!({"simulation": {"n_trajectories": 2, "n_steps": 500, "save_stride": 100}, "vde": {"lag": 50}}),
    );
    ok(dir.path(), &["--config", &cfg, "--out", "sim", "simulate"]);
    let out = vde_cmd(dir.path(), &["--config", &cfg, "fit", "--method", "vde", "sim"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_outputs_and_downstream_commands() {
    let dir = setup();
    let d = dir.path();
    let cfg = "run.json";

    // VDE model loads and re-serializes to identical bytes
    let bytes = std::fs::read(d.join("fit_vde/model.json")).unwrap();
    let model = VdeModel::load(&bytes[..]).unwrap();
    let mut again = Vec::new();
    model.save(&mut again).unwrap();
    assert_eq!(again, bytes);
    assert_eq!(read_csv(&d.join("fit_vde/history.csv")).len(), 1);

    ok(d, &["--config", cfg, "--out", "fit_tica", "fit", "--method", "tica", "sim"]);
    let eig = read_csv(&d.join("fit_tica/eigenvalues.csv"));
    assert_eq!(eig.len(), 1);
    let l: f64 = eig[0][1].parse().unwrap();
    assert!(l > 0.0 && l <= 1.0 + 1e-6);
    assert!(!eig[0][2].is_empty());

    ok(d, &["--out", "lat", "transform", "--model", "fit_tica/model.json", "sim"]);
    let lat = Trajectory::load(d.join("lat/latent_traj_000.csv")).unwrap();
    assert_eq!((lat.n_frames(), lat.feature_names()), (2000, &["tic1".to_string()][..]));

    ok(d, &["--config", cfg, "--out", "gen", "generate", "--model", "fit_vde/model.json", "sim"]);
    for i in 0..5 {
        assert_eq!(read_csv(&d.join(format!("gen/generated_{i}.csv"))).len(), 40);
        assert_eq!(read_csv(&d.join(format!("gen/fes_{i}.csv"))).len(), 20);
    }
    assert_eq!(read_csv(&d.join("gen/alphas.csv")).len(), 5);
    let out = vde_cmd(d, &["--config", cfg, "generate", "--model", "fit_tica/model.json", "sim"]);
    assert_eq!(out.status.code(), Some(2));

    ok(d, &["--config", cfg, "--out", "fes", "export-fes", "--model", "fit_vde/model.json", "sim"]);
    assert_eq!(read_csv(&d.join("fes/fes.csv")).len(), 100);
}

#[test]
fn paired_splits_and_in_sample_identity() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "run.json", "--out", "cv", "score", "--methods", "tica,pca", "sim"]);
    let rows = read_csv(&d.join("cv/scores.csv"));
    let seeds = |m: &str| rows.iter().filter(|r| r[0] == m).map(|r| r[2].clone()).collect::<Vec<_>>();
    assert_eq!(seeds("tica").len(), 3);
    assert_eq!(seeds("tica"), seeds("pca"));
    let summary = read_csv(&d.join("cv/summary.csv"));
    assert_eq!(summary.len(), 2);

    // a pre-fitted VDE is scored under the same splits
    ok(d, &[
        "--config", "run.json", "--out", "cv_vde", "score", "--methods", "vde",
        "--model", "vde=fit_vde/model.json", "sim",
    ]);
    let vde_rows = read_csv(&d.join("cv_vde/scores.csv"));
    assert_eq!(vde_rows.iter().map(|r| r[2].clone()).collect::<Vec<_>>(), seeds("tica"));

    // in-sample: the score is the sum of the top m eigenvalues of the fitted MSM
    ok(d, &["--config", "run.json", "--out", "ins", "score", "--methods", "tica", "--in-sample", "sim"]);
    let got: f64 = read_csv(&d.join("ins/summary.csv"))[0][2].parse().unwrap();
    let trajs: Vec<Trajectory> = (0..4)
        .map(|i| Trajectory::load(d.join(format!("sim/traj_{i:03}.csv"))).unwrap())
        .collect();
    let p = vde::baselines::LinearProjection::fit_tica(&trajs, 10, 1, vde::baselines::DEFAULT_RIDGE).unwrap();
    let params = vde::pipeline::MsmParams { n_clusters: 6, ..Default::default() };
    let (_, msm) = vde::pipeline::fit_msm(&p, &trajs, &params, 0).unwrap();
    let want: f64 = msm.eigenvalues[..2].iter().sum();
    assert!((got - want).abs() < 1e-8, "{got} vs {want}");
}

#[test]
fn salience_of_exact_transitions_is_zero() {
    let dir = setup();
    let d = dir.path();
    let model = VdeModel::load(std::fs::File::open(d.join("fit_vde/model.json")).unwrap()).unwrap();
    let src = Trajectory::load(d.join("sim/traj_000.csv")).unwrap();
    let frames = src.frames().slice(ndarray::s![..50, ..]).to_owned();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let tgt = model.propagate(&frames, 0.0, &mut rng).unwrap();
    let names = src.feature_names().to_vec();
    let write = |name: &str, f: ndarray::Array2<f64>| {
        let t = Trajectory::new(f, 1.0, names.clone()).unwrap();
        t.write_csv(std::fs::File::create(d.join(name)).unwrap()).unwrap();
    };
    write("src.csv", frames);
    write("tgt.csv", tgt);
    std::fs::write(d.join("groups.json"), r#"{"x1": "both", "x2": "both"}"#).unwrap();
    ok(d, &[
        "--out", "sal", "salience", "--model", "fit_vde/model.json", "--sources", "src.csv",
        "--targets", "tgt.csv", "--groups", "groups.json",
    ]);
    let rows = read_csv(&d.join("sal/saliency.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r[1].parse::<f64>().unwrap().abs() < 1e-10, "{r:?}");
    }
    assert_eq!(read_csv(&d.join("sal/gradients.csv")).len(), 50);
    assert_eq!(read_csv(&d.join("sal/group_saliency.csv")).len(), 1);
}

#[test]
fn export_fes_two_bins() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut text = String::from("z\n");
    for v in [0.0, 0.0, 0.0, 1.0] {
        text.push_str(&format!("{v}\n"));
    }
    std::fs::write(d.join("z.csv"), text).unwrap();
    let cfg = write_config(d, "c.json", json!({"fes": {"n_bins": 2}}));
    ok(d, &["--config", &cfg, "export-fes", "z.csv"]);
    let rows = read_csv(&PathBuf::from(d).join("out/fes.csv"));
    let f: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(f[0], 0.0);
    assert!((f[1] - 3f64.ln()).abs() < 1e-12);
}
