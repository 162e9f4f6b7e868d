use std::fs;
use std::process::{Command, Output};

fn igd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igd-sync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bounds_prints_toy_values() {
    let o = igd(&[
        "bounds", "--L", "4", "--ell", "2", "--gamma", "0.25", "--r", "0.03", "--eps", "0.1",
        "--nodes", "2",
    ]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("q               5.0095"), "{s}");
    assert!(s.contains("igdds_gap_bound 1.0000000000e-2"), "{s}");
}

#[test]
fn bounds_rejects_large_r() {
    let o = igd(&[
        "bounds", "--L", "4", "--ell", "2", "--gamma", "0.25", "--r", "0.45", "--eps", "0.1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_csvs_and_traces_that_recertify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = igd(&[
        "run",
        "--n",
        "4",
        "--nodes",
        "3",
        "--eps",
        "0.1,1",
        "--algos",
        "alg1,igdds,gd",
        "--trials",
        "2",
        "--iters",
        "150",
        "--seed",
        "3",
        "--save-traces",
        "--on-violation",
        "fail",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(conv.starts_with("algo,eps,iter,mean_gap,std_gap,trials\n"));
    // 3 algorithms × 2 ε × 151 iterates + header
    assert_eq!(conv.lines().count(), 1 + 6 * 151);
    let syncs = fs::read_to_string(out.join("syncs.csv")).unwrap();
    assert!(syncs.starts_with("algo,eps,m,mean_gap_at_sync,trials_contributing\n"));
    let viol = fs::read_to_string(out.join("violations.csv")).unwrap();
    assert_eq!(viol.lines().count(), 1);

    let trace = out.join("traces").join("trial1_alg1_eps0.1.json");
    let c = igd(&["certify", "--trace", trace.to_str().unwrap()]);
    assert!(c.status.success(), "{}", stdout(&c));
    assert!(stdout(&c).contains("drift"));
}

#[test]
fn tampered_trace_fails_certification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = igd(&[
        "run",
        "--n",
        "3",
        "--nodes",
        "2",
        "--eps",
        "0.5",
        "--algos",
        "alg1",
        "--trials",
        "1",
        "--iters",
        "50",
        "--save-traces",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let path = out.join("traces").join("trial0_alg1_eps0.5.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v["trace"]["steps"][3]["nodes"][0]["deviation"] = serde_json::json!(1e6);
    let iter = v["trace"]["steps"][3]["iter"].as_u64().unwrap();
    fs::write(&path, v.to_string()).unwrap();
    let c = igd(&["certify", "--trace", path.to_str().unwrap()]);
    assert_eq!(c.status.code(), Some(3));
    assert!(
        stdout(&c).contains(&format!("drift,0,{iter},0,")),
        "{}",
        stdout(&c)
    );
}

#[test]
fn config_file_with_cli_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    fs::write(
        &cfg,
        "# small run\nn = 3\nnodes = 2\neps = 0.1\nalgos = gd\ntrials = 1\niters = 20\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = igd(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--iters",
        "30",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 1 + 31);

    let s = igd(&["sanity", "--config", cfg.to_str().unwrap()]);
    assert!(s.status.success());
    assert!(stdout(&s).contains("gamma L r_bar^2"));
}

#[test]
fn config_errors_exit_two() {
    let o = igd(&["run", "--trials", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = igd(&[
        "run",
        "--algos",
        "alg1",
        "--topology",
        "ring",
        "--trials",
        "1",
        "--iters",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = igd(&["run", "--error-mode", "gauss"]);
    assert_eq!(o.status.code(), Some(2));
}
