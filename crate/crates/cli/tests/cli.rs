use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn pathsens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathsens"))
        .args(args)
        .env_remove("PATHSENS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn estimates(r: &Value) -> Vec<f64> {
    r["directions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["estimate"].as_f64().unwrap())
        .collect()
}

fn short_schlogl(out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec!["schlogl", "--horizon", "20000", "--seed", "5", "--out", out];
    args.extend_from_slice(extra);
    pathsens(&args)
}

#[test]
fn schlogl_report_has_oracle_and_fim() {
    let tmp = TempDir::new().unwrap();
    let out = short_schlogl(tmp.path(), &["--trace-every", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(tmp.path());
    assert_eq!(r["model"], "schlogl");
    assert_eq!(r["estimator"], "h1");
    assert_eq!(r["directions"].as_array().unwrap().len(), 8);
    for d in r["directions"].as_array().unwrap() {
        assert!(d["exact"].as_f64().unwrap() > 0.0);
        assert!(d["quadratic"].as_f64().unwrap() > 0.0);
    }
    assert_eq!(r["fim"]["matrix"].as_array().unwrap().len(), 16);
    assert_eq!(r["eigen"]["values"].as_array().unwrap().len(), 4);
    let opt = &r["optimality"];
    assert_eq!(opt["a_optimality"], opt["d_optimality"]);
    assert_eq!(r["config"]["seed"], 5);
    assert_eq!(r["config"]["schlogl"]["x0"], 100);
    assert_eq!(r["partial"], false);
    let traces = fs::read_to_string(tmp.path().join("traces.csv")).unwrap();
    assert!(traces.starts_with("quantity,replica,samples,horizon,estimate"));
}

#[test]
fn embedded_config_replays_bit_exactly() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert_eq!(code(&short_schlogl(&first, &["--replicas", "2"])), 0);
    let embedded = first.join("report.json");
    let out = pathsens(&[
        "schlogl",
        "--config",
        embedded.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (a, b) = (report(&first), report(&second));
    assert_eq!(a["directions"], b["directions"]);
    assert_eq!(a["fim"], b["fim"]);
    assert_eq!(a["runs"], b["runs"]);
}

#[test]
fn estimators_share_the_trajectory() {
    let tmp = TempDir::new().unwrap();
    let (h1, h2) = (tmp.path().join("h1"), tmp.path().join("h2"));
    assert_eq!(code(&short_schlogl(&h1, &["--estimator", "h1"])), 0);
    assert_eq!(code(&short_schlogl(&h2, &["--estimator", "h2"])), 0);
    let (a, b) = (report(&h1), report(&h2));
    assert_eq!(a["runs"], b["runs"]);
    assert_ne!(estimates(&a), estimates(&b));
    assert_eq!(b["estimator"], "h2");
}

#[test]
fn no_directions_gives_fim_only() {
    let tmp = TempDir::new().unwrap();
    let out = short_schlogl(tmp.path(), &["--directions", "none"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(tmp.path());
    assert!(r["directions"].as_array().unwrap().is_empty());
    assert!(r["fim"].is_object());
}

#[test]
fn explicit_and_log_scale_directions() {
    let tmp = TempDir::new().unwrap();
    let out = short_schlogl(tmp.path(), &["--directions", "0,0.1,0,0;0,0,0,-0.1", "--log-scale"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(tmp.path());
    let dirs = r["directions"].as_array().unwrap();
    assert_eq!(dirs.len(), 2);
    assert!((dirs[0]["direction"][1].as_f64().unwrap() - 0.1).abs() < 1e-15);
    assert!((dirs[1]["direction"][3].as_f64().unwrap() + 0.35).abs() < 1e-15);
    assert!(r["fim_log_scale"].is_object());
}

#[test]
fn inadmissible_direction_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = short_schlogl(tmp.path(), &["--directions", "0,-5,0,0"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("admissible"), "{}", stderr(&out));
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn config_errors_point_at_the_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "model = \"schlogl\"\nseed = 3\n\n[schlogl]\nvolume = -2.0\n").unwrap();
    let out = pathsens(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("run.toml:5:"), "{}", stderr(&out));

    fs::write(&cfg, "model = \"schlogl\"\nhorizonn = 5\n").unwrap();
    let out = pathsens(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("run.toml:2:"), "{}", stderr(&out));
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    let out_dir = tmp.path().join("out");
    fs::write(
        &cfg,
        format!(
            "model = \"schlogl\"\nhorizon = 10000\nseed = 1\nout = {:?}\n\n[directions]\nmode = \"axes\"\nepsilon0 = 0.1\n",
            out_dir.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = pathsens(&["run", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(&out_dir);
    assert_eq!(r["config"]["seed"], 9);
    assert_eq!(r["directions"].as_array().unwrap().len(), 4);
    assert_eq!(r["directions"][0]["direction"][0], 0.1);
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_pathsens"))
        .args(["schlogl", "--horizon", "5000", "--directions", "none"])
        .env("PATHSENS_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&status), 0, "{}", stderr(&status));
    assert!(tmp.path().join("report.json").exists());
}

#[test]
fn langevin_run_with_level_sets() {
    let tmp = TempDir::new().unwrap();
    let out = pathsens(&[
        "langevin",
        "--horizon",
        "3000",
        "--burn-in",
        "200",
        "--directions",
        "axes",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(tmp.path());
    assert_eq!(r["estimator"], "h2");
    assert_eq!(r["directions"].as_array().unwrap().len(), 3);
    assert_eq!(r["config"]["langevin"]["dim"], 1);
    let level = fs::read_to_string(tmp.path().join("level_sets.csv")).unwrap();
    assert!(level.starts_with("i,j,level,x,y"));
    assert!(level.lines().count() > 64);
}

#[test]
fn langevin_rejects_h1() {
    let out = pathsens(&["langevin", "--estimator", "h1", "--horizon", "100"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("h2"));
}

#[test]
fn langevin_with_halved_time_step() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("lv.toml");
    fs::write(&cfg, "horizon = 2000\nburn_in = 100\n\n[langevin]\ndt = 0.005\nalpha = 0.1\n").unwrap();
    let out = pathsens(&[
        "langevin",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn zgb_snapshots_and_phase_diagram() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("zgb.toml");
    fs::write(&cfg, "horizon = 6.0\nburn_in = 1.0\n\n[zgb]\nside = 12\n").unwrap();
    let out = pathsens(&[
        "zgb",
        "--config",
        cfg.to_str().unwrap(),
        "--snapshots",
        "--phase-k1",
        "0.3,0.4",
        "--phase-k2",
        "0.8,0.9",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(tmp.path());
    let fim = r["fim"]["matrix"].as_array().unwrap();
    assert_eq!(fim[1], 0.0);
    assert_eq!(fim[2], 0.0);
    for name in ["unperturbed", "k1", "k2"] {
        let snap = fs::read_to_string(tmp.path().join(format!("snapshot_{name}.txt"))).unwrap();
        assert_eq!(snap.lines().count(), 12);
    }
    let phase = fs::read_to_string(tmp.path().join("phase_diagram.csv")).unwrap();
    let mut lines = phase.lines();
    assert_eq!(
        lines.next().unwrap(),
        "p1,p2,evec_max_x,evec_max_y,eval_max,evec_min_x,evec_min_y,eval_min,valid"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn absorbing_state_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("poison.toml");
    // a tiny lattice with CO adsorption dominant poisons quickly
    fs::write(&cfg, "params = [0.95, 0.5]\ndirections = { mode = \"axes\", epsilon0 = 0.01 }\n\n[zgb]\nside = 3\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let partial = tmp.path().join("partial");
    let out = pathsens(&[
        "zgb", "--config", cfg, "--horizon", "1000", "--burn-in", "0", "--out", partial.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    let r = report(&partial);
    assert_eq!(r["partial"], true);
    assert!(r["errors"][0].as_str().unwrap().contains("absorbing"));

    let none = tmp.path().join("none");
    let out = pathsens(&[
        "zgb", "--config", cfg, "--horizon", "1000", "--burn-in", "900", "--out", none.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("absorbing"));
}

#[test]
fn model_flag_conflicts_are_rejected() {
    let out = pathsens(&["zgb", "--model", "schlogl"]);
    assert_eq!(code(&out), 2);
    let out = pathsens(&["run"]);
    assert_eq!(code(&out), 2);
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "{}", stderr(out));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn exact_verify_random_chain() {
    let v = json(&pathsens(&["exact", "verify", "--states", "3", "--horizon", "4", "--seed", "2"]));
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
    assert!(v["rer"].as_f64().unwrap() > 0.0);
}

#[test]
fn exact_schlogl_stationary_export() {
    let tmp = TempDir::new().unwrap();
    let v = json(&pathsens(&["exact", "schlogl", "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(v["modes"].as_array().unwrap().len(), 2);
    let top = v["most_sensitive"].as_array().unwrap();
    assert!((top[1].as_f64().unwrap().abs() - 0.978).abs() < 0.01);
    let csv = fs::read_to_string(tmp.path().join("stationary.csv")).unwrap();
    assert!(csv.starts_with("x,probability"));
    let total: f64 = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn exact_oracles_vanish_for_identical_inputs() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("p.txt");
    fs::write(&p, "# two states\n0.7 0.3\n0.4 0.6\n").unwrap();
    let p = p.to_str().unwrap();
    let chain = json(&pathsens(&["exact", "chain", "--chain", p, "--perturbed", p]));
    assert_eq!(chain["rer"], 0.0);
    assert_eq!(chain["stationary_relative_entropy"], 0.0);
    let verify = json(&pathsens(&["exact", "verify", "--chain", p]));
    assert_eq!(verify["path_relative_entropy"], 0.0);
    let periodic = json(&pathsens(&[
        "exact", "periodic", "--phase", p, "--phase", p, "--perturbed-phase", p, "--perturbed-phase", p,
    ]));
    assert_eq!(periodic["rer"], 0.0);
    let semi = json(&pathsens(&["exact", "semi-markov", "--embedded", p, "--rates", "1,2"]));
    assert_eq!(semi["rer"], 0.0);
    assert!((semi["mean_sojourn"].as_f64().unwrap() - (4.0 / 7.0 + 1.5 / 7.0)).abs() < 1e-6);
}

#[test]
fn exact_rejects_reducible_input() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("p.txt");
    fs::write(&p, "1 0\n0 1\n").unwrap();
    let p = p.to_str().unwrap();
    let out = pathsens(&["exact", "chain", "--chain", p, "--perturbed", p]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("reducible"));
}
