use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ciric-dp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen(dir: &Path, name: &str, states: &str, controls: &str) -> String {
    let path = dir.join(name).to_str().unwrap().to_string();
    let o = run(&[
        "gen",
        "--states",
        states,
        "--controls",
        controls,
        "--discount",
        "0.9",
        "--seed",
        "1",
        "--out",
        &path,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    path
}

fn json_out(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON report on stdout")
}

#[test]
fn gen_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.json", "20", "4");
    let b = gen(dir.path(), "b.json", "20", "4");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let model = ciric_dp::load_model(&a).unwrap();
    assert_eq!(ciric_dp::DpModel::n_states(&model), 20);
}

#[test]
fn gen_rejects_unit_discount() {
    let o = run(&[
        "gen",
        "--states",
        "2",
        "--controls",
        "2",
        "--discount",
        "1.0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_methods_agree() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen(dir.path(), "m.json", "6", "3");
    let vi = json_out(&run(&[
        "solve", "--model", &m, "--method", "vi", "--tol", "1e-10",
    ]));
    let en = json_out(&run(&["solve", "--model", &m, "--method", "enumerate"]));
    let pi = json_out(&run(&["solve", "--model", &m, "--method", "pi_exact"]));
    assert_eq!(vi["schema_version"], 1);
    assert!(vi["residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(en["iterations"], 729);
    for other in [&en, &pi] {
        let gap = vi["v_star"]
            .as_array()
            .unwrap()
            .iter()
            .zip(other["v_star"].as_array().unwrap())
            .map(|(a, b)| (a.as_f64().unwrap() - b.as_f64().unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 2e-8, "gap {gap}");
    }
}

#[test]
fn solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let big = gen(dir.path(), "big.json", "7", "10");
    let o = run(&["solve", "--model", &big, "--method", "enumerate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n_states\": 2}").unwrap();
    assert_eq!(
        run(&["solve", "--model", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["solve", "--model", "/nonexistent/model.json"])
            .status
            .code(),
        Some(2)
    );

    let m = gen(dir.path(), "m.json", "4", "2");
    let o = run(&["solve", "--model", &m, "--method", "vi", "--max-iters", "3"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json_out(&o)["converged"], false);
}

#[test]
fn pir_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen(dir.path(), "m.json", "8", "3");
    let out = dir.path().join("out");
    let o = run(&[
        "pir",
        "--model",
        &m,
        "--seeds",
        "1..4",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let summary: Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["summary"]["converged"], 4);
    assert!(summary["summary"]["max_final_error"].as_f64().unwrap() <= 1e-7);
    for seed in 1..=4 {
        let csv = std::fs::read_to_string(out.join(format!("trace_seed_{seed}.csv"))).unwrap();
        assert!(csv.starts_with("k,branch,residual,certified_bound,wall_time_ns\n"));
    }
}

#[test]
fn pir_precondition_and_nonconvergence() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen(dir.path(), "m.json", "5", "2");
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let o = run(&[
        "pir",
        "--model",
        &m,
        "--seed",
        "1",
        "--v0-shift",
        "-1",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("states"));

    let o = run(&[
        "pir",
        "--model",
        &m,
        "--seed",
        "1",
        "--max-iters",
        "2",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));

    let o = run(&[
        "pir",
        "--model",
        &m,
        "--seed",
        "1",
        "--lambda",
        "1.5",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn certify_reports() {
    let o = run(&["certify", "example1", "--samples", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json_out(&o);
    assert_eq!(r["target"], "example1");
    assert_eq!(r["quasi"]["violations"], 0);
    assert!(r["banach_refuted"].as_bool().unwrap());

    let o = run(&["certify", "lambda-op", "--lambda", "0.5", "--samples", "20"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        json_out(&o)["cases"][0]["max_oracle_deviation"]
            .as_f64()
            .unwrap()
            <= 1e-9
    );
}
