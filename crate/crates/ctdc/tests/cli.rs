use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::Parser;
use ctdc::cli::{Cli, RunConfig};
use nalgebra::DMatrix;
use serde_json::Value;
use tempfile::TempDir;

fn ctdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctdc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ctdc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ctdc(args).status.code().expect("exit code")
}

fn renewal_json(gamma: f64, rho: f64, ccp: Option<&[f64]>) -> String {
    let ccp = ccp.map_or(String::new(), |c| format!(r#", "ccp": {c:?}"#));
    format!(
        r#"{{"model": "renewal", "n_states": 5,
            "parameters": {{"gamma": {gamma}, "lambda": 1.0, "beta_cost": -1.0, "mu_cost": 4.0}},
            "rho": {rho}, "shock_scale": 1.0{ccp}}}"#
    )
}

const ENTRY_EXIT: &str = r#"{"model": "entry_exit", "n_firms": 2, "n_demand": 2,
    "parameters": {"theta_ec": -0.5, "theta_rn": -0.05, "theta_d": 0.1, "lambda": 1.0, "gamma": 0.3}}"#;

const REPLACE: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parses CSV text into the header and rows of numbers.
fn table(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let (h, rows) = table(text);
    let c = h.iter().position(|x| x == name).unwrap();
    rows.iter().map(|r| r[c]).collect()
}

/// Dense renewal generator at fixed replacement probabilities.
fn renewal_dense(gamma: f64, lambda: f64, replace: &[f64]) -> DMatrix<f64> {
    let k = replace.len();
    let mut q = DMatrix::zeros(k, k);
    for s in 0..k {
        if s + 1 < k {
            q[(s, s + 1)] += gamma;
        }
        if s > 0 {
            q[(s, 0)] += lambda * replace[s];
        }
    }
    for s in 0..k {
        let out: f64 = (0..k).filter(|&c| c != s).map(|c| q[(s, c)]).sum();
        q[(s, s)] = -out;
    }
    q
}

#[test]
fn expm_row_matches_dense_exponential() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &renewal_json(0.5, 0.05, Some(&REPLACE)));
    let out = ok(&["expm", "-c", s(&cfg), "--delta", "1", "--vector", "e:0", "--tol", "1e-12"]);
    let row = column(&out, "value");
    let mass: f64 = row.iter().sum();
    assert!((mass - 1.0).abs() <= 1e-12, "mass {mass}");
    let p = renewal_dense(0.5, 1.0, &REPLACE).exp();
    for (l, v) in row.iter().enumerate() {
        assert!((v - p[(0, l)]).abs() < 1e-12, "{l}: {v} vs {}", p[(0, l)]);
    }
    let out = ok(&["expm", "-c", s(&cfg), "--vector", "e:2", "--side", "column"]);
    for (k, v) in column(&out, "value").iter().enumerate() {
        assert!((v - p[(k, 2)]).abs() < 1e-12);
    }
}

#[test]
fn expm_at_zero_time_returns_input() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &renewal_json(0.5, 0.05, None));
    let out = ok(&["expm", "-c", s(&cfg), "--delta", "0", "--vector", "e:3"]);
    assert_eq!(column(&out, "value"), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    let vec_csv = write(&dir, "v.csv", "state,value\n0,0.5\n1,0\n2,0\n3,0\n4,0.5\n");
    let out = ok(&["expm", "-c", s(&cfg), "--delta", "0", "--vector", s(&vec_csv)]);
    assert_eq!(column(&out, "value"), vec![0.5, 0.0, 0.0, 0.0, 0.5]);
}

#[test]
fn expm_derivative_matches_finite_difference_of_runs() {
    let dir = TempDir::new().unwrap();
    let (g, h) = (0.5, 1e-5);
    let run = |gamma: f64, extra: &[&str]| {
        let cfg = write(&dir, &format!("g{gamma}.json"), &renewal_json(gamma, 0.05, Some(&REPLACE)));
        let mut args = vec!["expm", "-c", s(&cfg), "--delta", "1.5", "--vector", "e:1", "--tol", "1e-14"];
        args.extend_from_slice(extra);
        ok(&args)
    };
    let base = run(g, &["--deriv", "gamma", "--deriv", "lambda"]);
    let analytic = column(&base, "d_gamma");
    let up = column(&run(g + h, &[]), "value");
    let down = column(&run(g - h, &[]), "value");
    for k in 0..5 {
        let fd = (up[k] - down[k]) / (2.0 * h);
        assert!((analytic[k] - fd).abs() <= 1e-9_f64.max(1e-6 * fd.abs()), "{k}: {} vs {fd}", analytic[k]);
    }
    assert_eq!(column(&base, "d_lambda").len(), 5);
}

#[test]
fn expm_writes_generator_in_matrix_market_format() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &renewal_json(0.5, 0.05, Some(&REPLACE)));
    let mtx = dir.path().join("q.mtx");
    ok(&["expm", "-c", s(&cfg), "--write-q", s(&mtx)]);
    let q = ctdc::io::read_matrix_market(std::fs::File::open(&mtx).unwrap()).unwrap();
    let want = renewal_dense(0.5, 1.0, &REPLACE);
    for (r, c, v) in q.iter() {
        assert!((v - want[(r, c)]).abs() < 1e-15);
    }
    assert_eq!(q.row_ptr(), &[0, 2, 5, 8, 11, 13]);
}

fn solve(cfg: &Path, dir: &TempDir, method: &str, tol: &str) -> (Vec<f64>, Value) {
    let report = dir.path().join(format!("{method}{tol}.json"));
    let out = ok(&["solve", "-c", s(cfg), "--method", method, "--tol", tol, "--report", s(&report)]);
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    (column(&out, "value"), rep)
}

#[test]
fn solve_methods_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &renewal_json(0.5, 0.05, None));
    let (vi, rep) = solve(&cfg, &dir, "vi", "1e-11");
    let (nk, _) = solve(&cfg, &dir, "nk", "1e-11");
    let (rvi, _) = solve(&cfg, &dir, "rvi", "1e-11");
    for k in 0..5 {
        assert!((vi[k] - nk[k]).abs() <= 1e-8, "{k}");
        assert!((rvi[k] - nk[k]).abs() <= 1e-8, "{k}");
    }
    assert_eq!(rep["method"], "vi");
    assert_eq!(rep["residuals"].as_array().unwrap().len() as u64, rep["iterations"].as_u64().unwrap());
}

#[test]
fn looser_tolerance_needs_fewer_iterations() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &renewal_json(0.5, 0.05, None));
    for method in ["vi", "nk", "rvi"] {
        let loose = solve(&cfg, &dir, method, "1e-2").1["iterations"].as_u64().unwrap();
        let tight = solve(&cfg, &dir, method, "1e-10").1["iterations"].as_u64().unwrap();
        assert!(loose <= tight, "{method}: {loose} > {tight}");
    }
}

#[test]
fn relative_value_iteration_beats_value_iteration_when_nearly_undiscounted() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &renewal_json(0.5, 1e-4, Some(&REPLACE)));
    let rvi = solve(&cfg, &dir, "rvi", "1e-6").1["iterations"].as_u64().unwrap();
    let vi = solve(&cfg, &dir, "vi", "1e-6").1["iterations"].as_u64().unwrap();
    assert!(rvi < vi, "rvi {rvi} vs vi {vi}");
}

#[test]
fn solve_entry_exit_reports_ccps() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "e.json", ENTRY_EXIT);
    let out = ok(&["solve", "-c", s(&cfg), "--player", "1"]);
    let (h, rows) = table(&out);
    assert_eq!(h, ["state", "value", "ccp_0", "ccp_1"]);
    assert_eq!(rows.len(), 8);
    for r in rows {
        assert!((r[2] + r[3] - 1.0).abs() < 1e-12);
    }
}

fn simulate(dir: &TempDir, cfg: &Path, seed: &str) -> PathBuf {
    let data = dir.path().join(format!("d{seed}.csv"));
    ok(&["simulate", "-c", s(cfg), "--markets", "2", "--obs", "400", "--seed", seed, "--out", s(&data)]);
    data
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "e.json", ENTRY_EXIT);
    let a = std::fs::read(simulate(&dir, &cfg, "5")).unwrap();
    let b = ok(&["simulate", "-c", s(&cfg), "--markets", "2", "--obs", "400", "--seed", "5"]);
    assert_eq!(a, b.as_bytes());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("market_id,obs_index,state_index\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 401);
}

#[test]
fn loglik_reports_value_and_gradient() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "e.json", ENTRY_EXIT);
    let data = simulate(&dir, &cfg, "3");
    let rep: Value = serde_json::from_str(&ok(&["loglik", "-c", s(&cfg), "--data", s(&data)])).unwrap();
    assert_eq!(rep["n_transitions"], 800);
    assert_eq!(rep["gradient"].as_array().unwrap().len(), 5);
    let at = |gamma: f64| -> f64 {
        let theta = format!("--theta=-0.5,-0.05,0.1,1.0,{gamma}");
        let v: Value = serde_json::from_str(&ok(&["loglik", "-c", s(&cfg), "--data", s(&data), &theta])).unwrap();
        v["loglik"].as_f64().unwrap()
    };
    let h = 1e-5;
    let fd = (at(0.3 + h) - at(0.3 - h)) / (2.0 * h);
    let g = rep["gradient"][4].as_f64().unwrap();
    assert!((g - fd).abs() < 1e-5 * g.abs().max(1.0), "{g} vs {fd}");
}

#[test]
fn fit_gradient_modes_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "e.json", ENTRY_EXIT);
    let data = simulate(&dir, &cfg, "11");
    let fit = |mode: &str| -> Value {
        let out = ok(&["fit", "-c", s(&cfg), "--data", s(&data), "--gradient", mode, "--start=0,0,0,0.5,0.5"]);
        serde_json::from_str(&out).unwrap()
    };
    let a = fit("analytic");
    let n = fit("numeric");
    assert_eq!(a["converged"], true);
    assert_eq!(n["converged"], true);
    for j in 0..5 {
        let (x, y) = (a["theta_hat"]["values"][j].as_f64().unwrap(), n["theta_hat"]["values"][j].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-4, "{j}: {x} vs {y}");
    }
    let (ea, en) = (a["n_func_evals"].as_u64().unwrap(), n["n_func_evals"].as_u64().unwrap());
    assert!(en > ea, "{en} vs {ea}");
    assert_eq!(a["wall_time"], 0.0);
}

#[test]
fn monte_carlo_output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |tag: &str, threads: &str| {
        let (csv, table) = (dir.path().join(format!("{tag}.csv")), dir.path().join(format!("{tag}.txt")));
        let reps = dir.path().join(format!("{tag}-reps.csv"));
        ok(&[
            "mc", "--players", "3", "--demand", "3", "--obs", "1000", "--reps", "25", "--seed", "42", "--threads",
            threads, "--csv", s(&csv), "--out", s(&table), "--replications", s(&reps),
        ]);
        [csv, table, reps].map(|p| std::fs::read(p).unwrap())
    };
    let a = run("a", "1");
    let b = run("b", "2");
    assert_eq!(a, b);
    let text = String::from_utf8(a[1].clone()).unwrap();
    assert!(text.contains("Func. Eval.") && !text.contains("Time (s)"));
    let csv = String::from_utf8(a[0].clone()).unwrap();
    assert!(csv.starts_with("parameter,true_value,mean,median,sd,rmse,mean_bias,median_bias\ntheta_ec,-0.5,"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "r.json", &renewal_json(0.5, 0.05, None));
    let bad_cfg = write(&dir, "bad.json", r#"{"model": "renewal", "n_states": 1}"#);
    let data = write(&dir, "d.csv", "market_id,obs_index,state_index\n0,0,0\n0,1,9\n");
    let garbled = write(&dir, "g.csv", "market_id,obs_index,state_index\n0,0,zero\n");
    assert_eq!(code(&["expm", "-c", "missing.json"]), 2);
    assert_eq!(code(&["expm", "-c", s(&bad_cfg)]), 2);
    assert_eq!(code(&["expm", "-c", s(&cfg), "--deriv", "mu"]), 2);
    assert_eq!(code(&["expm", "-c", s(&cfg), "--unknown-flag"]), 2);
    assert_eq!(code(&["expm", "-c", s(&cfg), "--eta", "0.1"]), 3);
    assert_eq!(code(&["solve", "-c", s(&cfg), "--method", "vi", "--max-iter", "3"]), 3);
    assert_eq!(code(&["loglik", "-c", s(&cfg), "--data", s(&data)]), 4);
    assert_eq!(code(&["fit", "-c", s(&cfg), "--data", s(&garbled)]), 4);
    assert_eq!(code(&["fit", "-c", s(&cfg), "--data", "missing.csv"]), 4);
    assert_eq!(code(&["fit", "-c", s(&cfg), "--data", s(&data), "--max-iter", "0"]), 4);
    let stderr = String::from_utf8(ctdc(&["expm", "-c", "missing.json"]).stderr).unwrap();
    assert!(stderr.starts_with("error: configuration error"));
}

#[test]
fn help_lists_defaults() {
    for (cmd, expected) in [("expm", 4), ("solve", 5), ("loglik", 2), ("fit", 5), ("mc", 13), ("simulate", 5)] {
        let out = ok(&[cmd, "--help"]);
        let n = out.matches("[default:").count();
        assert!(n >= expected, "{cmd}: {n} defaults\n{out}");
    }
}

#[test]
fn run_configs_round_trip() {
    let argv: [&[&str]; 6] = [
        &["ctdc", "expm", "-c", "m.json", "--deriv", "gamma", "--side", "column", "--tol", "1e-10"],
        &["ctdc", "solve", "-c", "m.json", "--method", "rvi", "--player", "2"],
        &["ctdc", "loglik", "-c", "m.json", "--data", "d.csv", "--theta=-1,0.5"],
        &["ctdc", "fit", "-c", "m.json", "--data", "d.csv", "--gradient", "numeric", "--start=-0.1,0,0,1,1"],
        &["ctdc", "mc", "--reps", "7", "--theta0=0.1,0,0,1,1", "--threads", "3", "--timing"],
        &["ctdc", "simulate", "-c", "m.json", "--markets", "4"],
    ];
    for args in argv {
        let cfg = Cli::try_parse_from(args).unwrap().run_config();
        let json = cfg.to_json();
        let back = RunConfig::from_json(&json).unwrap();
        assert_eq!(back, cfg, "{json}");
        assert_eq!(RunConfig::from_json(&back.to_json()).unwrap(), back);
    }
}
