use std::fs;
use std::path::Path;

use blowup_lab::cli::{run, EXIT_CHECK, EXIT_IO, EXIT_OK, EXIT_USAGE};

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("blowup-lab").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, name: &str) -> std::path::PathBuf {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "# short run\nd = 8\nlambda_min = 0.05\nframe_every = 50\n").unwrap();
    let out = dir.join(name);
    assert_eq!(cli(&["simulate", "--config", p(&cfg), "--out", p(&out)]), EXIT_OK);
    out
}

#[test]
fn verify_all_passes_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    assert_eq!(cli(&["verify-all", "--threads", "3", "--out", p(&out)]), EXIT_OK);
    let r = json(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["dims"], serde_json::json!([7, 8, 11]));
    let m = json(&dir.path().join("verify.manifest.json"));
    assert_eq!(m["subcommand"], "verify-all");
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn injected_fault_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    assert_eq!(cli(&["verify-all", "--d", "8", "--inject-fault", "ck-sign", "--out", p(&out)]), EXIT_CHECK);
    let r = json(&out);
    let failed: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"modes.explicit_solution"), "{failed:?}");
}

#[test]
fn bad_dimension_lists_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    assert_eq!(cli(&["verify-all", "--d", "--out", p(&out)]), EXIT_USAGE);
    assert_eq!(cli(&["verify-all", "--d", "6", "--out", p(&out)]), EXIT_USAGE);
    assert_eq!(cli(&["verify-all", "--d", "x"]), EXIT_USAGE);
    assert!(!out.exists());
}

#[test]
fn unknown_subcommand_and_missing_flags() {
    assert_eq!(cli(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(cli(&["profile"]), EXIT_USAGE);
    assert_eq!(cli(&["profile", "--d", "5", "--out", "/nonexistent/q.csv"]), EXIT_USAGE);
    assert_eq!(cli(&["--help"]), EXIT_OK);
}

#[test]
fn profile_writes_named_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.csv");
    assert_eq!(cli(&["profile", "--d", "8", "--n", "512", "--out", p(&out)]), EXIT_OK);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "y,Q,LamQ,V,Z,Gamma");
    assert_eq!(lines.count(), 512);
    let m = json(&dir.path().join("q.manifest.json"));
    assert_eq!(m["config"]["d"], 8);
    assert_eq!(m["outputs"][0], p(&out));
}

#[test]
fn operator_rejects_k_below_l() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tk.csv");
    assert_eq!(cli(&["operator", "--d", "8", "--K", "1", "--L", "3", "--out", p(&out)]), EXIT_USAGE);
}

#[test]
fn operator_writes_tk_and_phi_m() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tk.csv");
    assert_eq!(cli(&["operator", "--d", "8", "--K", "3", "--L", "2", "--n", "3072", "--out", p(&out)]), EXIT_OK);
    assert!(fs::read_to_string(&out).unwrap().starts_with("y,T_0,T_1,T_2,T_3\n"));
    let r = json(&dir.path().join("tk_phim.json"));
    let id = r["identity_matrix"].as_array().unwrap();
    assert_eq!(id.len(), 3);
    let base = id[0][0].as_f64().unwrap();
    for (i, row) in id.iter().enumerate() {
        for (k, v) in row.as_array().unwrap().iter().enumerate() {
            let want = if i != k {
                0.0
            } else if i % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            assert!((v.as_f64().unwrap() / base - want).abs() < 1e-6, "({i}, {k}) = {v}");
        }
    }
}

#[test]
fn qb_reports_fitted_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("qb.json");
    assert_eq!(cli(&["qb", "--d", "8", "--b1", "1e-3", "--out", p(&out)]), EXIT_OK);
    let r = json(&out);
    assert_eq!(r["exponents"].as_array().unwrap().len(), 3);
    assert!(r["exponents"].as_array().unwrap().iter().all(|e| e.as_f64().unwrap() > 0.0));
    assert_eq!(cli(&["qb", "--d", "8", "--b1", "0.5", "--out", p(&out)]), EXIT_USAGE);
}

#[test]
fn modes_writes_series_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("modes.csv");
    assert_eq!(cli(&["modes", "--d", "8", "--ell", "1", "--L", "2", "--s0", "20", "--out", p(&out)]), EXIT_OK);
    assert!(fs::read_to_string(&out).unwrap().starts_with("s,t,lambda,b_1,b_2\n"));
    let fit = json(&dir.path().join("modes_fit.json"));
    let q = fit["fit"]["exponent_t"].as_f64().unwrap();
    let want = fit["expected_exponent_t"].as_f64().unwrap();
    assert!((q / want - 1.0).abs() < 0.01, "{q} vs {want}");
}

#[test]
fn simulate_then_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = simulate(dir.path(), "run");
    for f in ["trajectory.csv", "rate_report.json", "manifest.json"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    assert!(run_dir.join("frames").read_dir().unwrap().count() > 0);
    let header = fs::read_to_string(run_dir.join("trajectory.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "t,s,lambda,b_1,b_2,E,E_2");
    let report = json(&run_dir.join("rate_report.json"));
    assert_eq!(cli(&["plotdata", p(&run_dir)]), EXIT_OK);
    let overlay = fs::read_to_string(run_dir.join("fit_overlay.csv")).unwrap();
    let row: Vec<f64> = overlay.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[2], report["exponent"].as_f64().unwrap());
    assert!(run_dir.join("loglog.csv").exists());
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a");
    let b = simulate(dir.path(), "b");
    for f in ["trajectory.csv", "rate_report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn corrupted_trajectory_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = simulate(dir.path(), "run");
    let path = run_dir.join("trajectory.csv");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(str::to_string).collect();
    lines[3] = lines[3].replacen(',', ",oops,", 1);
    fs::write(&path, lines.join("\n")).unwrap();
    assert_eq!(cli(&["plotdata", p(&run_dir)]), EXIT_IO);
    let err = blowup_lab::cli::output::read_trajectory(&path).unwrap_err();
    assert!(err.to_string().contains("line 4"), "{err}");
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("absent.cfg");
    assert_eq!(cli(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("r"))]), EXIT_IO);
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "d = 8\nlambda_min = lots\n").unwrap();
    assert_eq!(cli(&["simulate", "--config", p(&bad), "--out", p(&dir.path().join("r"))]), EXIT_IO);
}
