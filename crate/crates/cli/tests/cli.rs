use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mtf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtf"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("mtf runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_CIRCLE: &[&str] = &[
    "--kind", "circle", "--d", "1", "--ambient", "3", "--frame", "identity", "--scale", "0.4",
];

#[test]
fn compile_square_reports_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtf(dir.path(), &["compile", "square", "--dim", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("100/100 exact"));
    let net = json(&dir.path().join("square.json"));
    assert_eq!(net["contract"]["op"], "square");
    let report = json(&dir.path().join("square_selftest.json"));
    assert_eq!(report["self_test"]["passed"], 100);
    assert_eq!(report["depth"], 3);
}

#[test]
fn every_op_passes_self_test() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["sum", "--dim", "8", "--bound", "2"],
        &["add", "--consts", "0.5,-0.25,1"],
        &["mul", "--consts", "-2,3"],
        &["product", "--dim", "4"],
        &["power", "--dim", "2", "--r", "13"],
        &["series", "--r", "5", "--bound", "0.9"],
        &["div", "--range", "0.5", "2", "--r", "8"],
    ];
    for c in cases {
        let mut args = vec!["compile"];
        args.extend_from_slice(c);
        let o = mtf(dir.path(), &args);
        assert_eq!(code(&o), 0, "{c:?}: {}", stdout(&o));
        assert!(stdout(&o).contains("100/100"), "{c:?}");
    }
}

#[test]
fn division_order_follows_tolerance() {
    // q0 = 1.5/2.5 = 0.6 and the smallest r with 0.6^(r+1)/0.5 ≤ 1e-6 is 28.
    let dir = tempfile::tempdir().unwrap();
    let o = mtf(dir.path(), &["compile", "div", "--range", "0.5", "2", "--tol", "1e-6"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("r = 28 chosen"), "{}", stdout(&o));
    assert!(stdout(&o).contains("100/100 within tolerance"));
    let report = json(&dir.path().join("div_selftest.json"));
    assert_eq!(report["division"]["r"], 28);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mtf(dir.path(), &["compile", "power", "--dim", "2"])), 2);
    assert_eq!(code(&mtf(dir.path(), &["compile", "cube", "--dim", "2"])), 2);
    assert_eq!(code(&mtf(dir.path(), &["compile", "div", "--range", "0.5", "2"])), 2);
    assert_eq!(code(&mtf(dir.path(), &["synthesize", "--kind", "circle"])), 2);
    assert_eq!(code(&mtf(dir.path(), &["eval", "--network", "/nonexistent.json", "--x", "1"])), 2);
}

#[test]
fn infeasible_configs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["synthesize"];
    args.extend_from_slice(SMALL_CIRCLE);
    args.extend_from_slice(&["--alpha", "1", "--epsilon", "1.5"]);
    let o = mtf(dir.path(), &args);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ε = 1.5"));
    assert_eq!(code(&mtf(dir.path(), &["compile", "product", "--dim", "3", "--ell", "5"])), 3);
    let mut args = vec!["sweep", "approx"];
    args.extend_from_slice(SMALL_CIRCLE);
    args.extend_from_slice(&["--alpha", "1", "--epsilons", "0.19,0.15"]);
    assert_eq!(code(&mtf(dir.path(), &args)), 3);
}

#[test]
fn failed_rate_check_exits_4() {
    // A smooth target with analytic features beats the Hölder rate by a wide
    // margin at this seed.
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["--seed", "5", "sweep", "gen"];
    args.extend_from_slice(SMALL_CIRCLE);
    args.extend_from_slice(&[
        "--target", "sine", "--alpha", "1", "--n", "200,500,1500,4000,8000", "--samples", "2000", "--features",
        "analytic",
    ]);
    let o = mtf(dir.path(), &args);
    assert_eq!(code(&o), 4, "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
    assert!(dir.path().join("gen_sweep.csv").exists());
}

fn synth(out: &Path) -> Output {
    let mut args = vec!["--seed", "7", "synthesize"];
    args.extend_from_slice(SMALL_CIRCLE);
    args.extend_from_slice(&["--alpha", "1", "--amplitude", "0.002", "--epsilon", "0.19", "--samples", "500"]);
    mtf(out, &args)
}

#[test]
fn synthesize_audit_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = synth(a.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    assert_eq!(code(&synth(b.path())), 0);
    for f in ["network.json", "audit.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let audit = json(&a.path().join("audit.json"));
    let s = audit["plan"]["division"]["stages"].as_u64().unwrap() as usize;
    // η̃ stages, division, weighting, output sum.
    assert_eq!(audit["audit"]["L_T"].as_u64().unwrap() as usize, (1 + 8) + (3 * s + 5) + 3 + 2);
    assert!(audit["sup_error"].as_f64().unwrap() <= 0.19);

    let net = a.path().join("network.json");
    let o = mtf(a.path(), &["audit", "--network", net.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let na = json(&a.path().join("network_audit.json"));
    assert_eq!(na["L_T"], audit["audit"]["L_T"]);
    assert_eq!(na["m_T"], audit["audit"]["m_T"]);
}

#[test]
fn eval_compiled_program() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mtf(dir.path(), &["compile", "square", "--dim", "3"])), 0);
    let net = dir.path().join("square.json");
    let o = mtf(dir.path(), &["eval", "--network", net.to_str().unwrap(), "--x", "0.5,-0.25,1"]);
    assert_eq!(code(&o), 0);
    let vals: Vec<f64> = stdout(&o).trim().split(',').map(|v| v.parse().unwrap()).collect();
    let want = [0.25, 0.0625, 1.0];
    for (v, w) in vals.iter().zip(want) {
        assert!((v - w).abs() <= 1e-9, "{vals:?}");
    }
    let inputs = dir.path().join("in.csv");
    fs::write(&inputs, "0.1,0.2,0.3\n-1,0,1\n").unwrap();
    let o = mtf(dir.path(), &["eval", "--network", net.to_str().unwrap(), "--inputs", inputs.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let o = mtf(dir.path(), &["eval", "--network", net.to_str().unwrap(), "--x", "0.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("from_config");
    fs::write(
        &cfg,
        serde_json::json!({ "dim": 2, "bound": 0.5, "out": out.to_str().unwrap() }).to_string(),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mtf"))
        .args(["--config", cfg.to_str().unwrap(), "compile", "square", "--dim", "4"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("square_selftest.json"));
    assert_eq!(report["input_dim"], 4);
    assert_eq!(report["config"]["bound"], 0.5);
}

#[test]
fn id_sweep_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--seed", "3", "sweep", "id", "--kind", "sphere", "--d", "2", "--ambient", "10", "--sigmas", "0,0.05,0.3",
        "--n", "600", "--k", "15",
    ];
    let oa = mtf(a.path(), &args);
    assert_eq!(code(&oa), 0, "{}", stdout(&oa));
    assert_eq!(code(&mtf(b.path(), &args)), 0);
    for f in ["id_sweep.csv", "id_sweep.json", "id_config.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.path().join("id_sweep.csv")).unwrap();
    assert!(csv.starts_with("sigma,id_est,id_clean"));
}

#[test]
fn approx_sweep_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("approx.json");
    fs::write(
        &cfg,
        serde_json::json!({
            "manifold": { "kind": "circle", "d": 1, "D": 3, "placement": { "frame": "identity", "scale": 0.4 } },
            "target": { "kind": "constant", "alpha": 1.0, "amplitude": 0.01 },
            "axis": { "epsilon": [0.19, 0.17, 0.15, 0.13] },
            "test_samples": 300,
            "seed": 1
        })
        .to_string(),
    )
    .unwrap();
    let o = mtf(dir.path(), &["--config", cfg.to_str().unwrap(), "sweep", "approx"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("slope test skipped"));
    let csv = fs::read_to_string(dir.path().join("approx_sweep.csv")).unwrap();
    assert!(csv.starts_with("delta,sup_err,L_T,m_T,ell,kappa_obs"));
    assert_eq!(csv.lines().count(), 5);
}
