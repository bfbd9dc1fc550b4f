use std::fs;
use std::path::Path;
use std::process::Command;

fn rpde(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_rpde")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "rpde {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MODEL: &str = r#"
dim = 1
diffusion = ["0.125"]
drift = ["-x"]
reaction = "0"

[noise]
sigma = [["0.2"]]
nu = ["0.3*sin(x)"]
g = ["0.2*cos(x)"]
"#;

#[test]
fn rough_sample_lift_and_distance() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let ra = dir.path().join("ra.csv");
    rpde(&["rough", "sample", "--seed", "1", "--mesh", "0.0625", "--dim", "2", "--out", s(&a), "--rough-out", s(&ra)]);
    rpde(&["rough", "sample", "--seed", "2", "--mesh", "0.0625", "--dim", "2", "--out", s(&b)]);
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("t,z1,z2"));
    assert_eq!(text.lines().count(), 18);
    let lifted = dir.path().join("lifted.csv");
    rpde(&["rough", "lift", "--input", s(&a), "--out", s(&lifted)]);
    assert_eq!(fs::read_to_string(&lifted).unwrap(), fs::read_to_string(&ra).unwrap());

    let same: serde_json::Value = serde_json::from_str(&rpde(&["rough", "dist", "--a", s(&a), "--b", s(&a)])).unwrap();
    assert_eq!(same["distance"], 0.0);
    let d: serde_json::Value =
        serde_json::from_str(&rpde(&["rough", "dist", "--a", s(&ra), "--b", s(&lifted), "--rough", "--p", "2.2"])).unwrap();
    assert_eq!(d["distance"], 0.0);
    let d: serde_json::Value = serde_json::from_str(&rpde(&["rough", "dist", "--a", s(&a), "--b", s(&b)])).unwrap();
    assert!(d["distance"].as_f64().unwrap() > 0.0);
}

#[test]
fn flows_transform_and_pde() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.toml");
    fs::write(&model, MODEL).unwrap();
    let driver = dir.path().join("driver.csv");
    rpde(&["rough", "sample", "--seed", "3", "--mesh", "0.03125", "--dim", "3", "--horizon", "0.5", "--out", s(&driver)]);

    let bundle = dir.path().join("bundle.csv");
    let grid = "-4:4:81";
    rpde(&[
        "flows", "solve", "--model", s(&model), "--grid", grid, "--driver", s(&driver), "--times", "0.25,0.5", "--pipeline",
        "--out", s(&bundle),
    ]);
    let emitted: serde_json::Value = serde_json::from_str(&rpde(&[
        "transform", "emit", "--model", s(&model), "--grid", grid, "--bundle", s(&bundle), "--at", "0.5,-0.3,1.0",
    ]))
    .unwrap();
    assert!((emitted["node"][0].as_f64().unwrap() + 0.3).abs() < 1e-12);
    assert!(emitted["diffusion"][0].as_f64().unwrap() > 0.0);
    assert!(emitted["reaction"].as_f64().unwrap().is_finite());

    let out = dir.path().join("u.csv");
    rpde(&[
        "pde", "solve", "--model", s(&model), "--grid", grid, "--driver", s(&driver), "--horizon", "0.5", "--outputs",
        "0.25,0.5", "--out", s(&out),
    ]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(summary["times"].as_array().unwrap().len(), 3);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 3 * 81);
}

#[test]
fn zakai_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    rpde(&["zakai", "simulate", "--seed", "4", "--mesh", "0.0078125", "--out-dir", s(&sim)]);
    let obs = sim.join("observation.csv");
    assert!(sim.join("signal.csv").exists());

    let filt = dir.path().join("filter");
    rpde(&["zakai", "filter", "--observation", s(&obs), "--grid", "-10:10:201", "--out-dir", s(&filt)]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(filt.join("summary.json")).unwrap()).unwrap();
    assert!(summary["mass"][1].as_f64().unwrap() > 0.0);

    let oracle = dir.path().join("oracle");
    rpde(&[
        "zakai", "oracle", "--observation", s(&obs), "--grid", "-10:10:201", "--particles", "2000", "--out-dir",
        s(&oracle),
    ]);
    let pf: serde_json::Value = serde_json::from_str(&fs::read_to_string(oracle.join("summary.json")).unwrap()).unwrap();
    let pde_mean = summary["mean"][1][0].as_f64().unwrap();
    let pde_std = summary["std"][1][0].as_f64().unwrap();
    assert!((pf["mean"][0].as_f64().unwrap() - pde_mean).abs() < 0.5 * pde_std);

    let cfg = dir.path().join("exp.toml");
    let out = dir.path().join("exp");
    fs::write(
        &cfg,
        "kind = \"stability\"\nlevels = [4, 5, 6]\nfine_level = 8\ngrid = \"-10:10:201\"\n",
    )
    .unwrap();
    rpde(&["zakai", "experiment", "--config", s(&cfg), "--seed", "2", "--out-dir", s(&out)]);
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(out.join("summary.json").exists());
    assert!(out.join("convergence.dat").exists());
}

#[test]
fn bad_input_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_rpde"))
        .args(["zakai", "filter", "--observation", "/nonexistent.csv", "--out-dir", "/tmp/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
