use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str], model: &str) -> Output {
    run_env(args, model, None)
}

fn run_env(args: &[&str], model: &str, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_riskhedge"));
    cmd.arg(args[0]).arg(data(model)).args(&args[1..]);
    match threads {
        Some(n) => cmd.env("RISKHEDGE_THREADS", n),
        None => cmd.env_remove("RISKHEDGE_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn exit_codes() {
    let cases = [
        ("validate", "binomial.json", 0),
        ("validate", "no_payoff.json", 0),
        ("validate", "bad_probs.json", 2),
        ("validate", "bad_cone.json", 2),
        ("check-na", "binomial.json", 0),
        ("check-na", "arbitrage.json", 3),
        ("check-na", "trinomial_cvar.json", 3),
        ("price", "binomial.json", 0),
        ("price", "arbitrage.json", 4),
        ("price", "no_payoff.json", 2),
        ("dual-price", "two_period.json", 0),
        ("dual-price", "arbitrage.json", 3),
        ("ftap", "binomial.json", 0),
        ("ftap", "arbitrage.json", 0),
        ("ftap", "bad_probs.json", 2),
    ];
    for (cmd, model, expected) in cases {
        let out = run(&[cmd], model);
        assert_eq!(code(&out), expected, "{cmd} {model}");
        let r = report(&out);
        assert_eq!(r["command"], cmd);
        let keys: Vec<&String> = r.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["command", "model_digest", "payload", "tolerances", "version"]);
    }
}

#[test]
fn missing_file_is_a_validation_error() {
    let out = run(&["validate"], "does_not_exist.json");
    assert_eq!(code(&out), 2);
    assert_eq!(report(&out)["payload"]["status"], "invalid");
}

#[test]
fn binomial_price_matches_golden_report() {
    let out = run(&["price", "--direct"], "binomial.json");
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/binomial_price.json"))
        .unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
    let r: Value = serde_json::from_str(&golden).unwrap();
    assert_eq!(r["payload"]["root_price"].as_f64().unwrap(), 0.333333333333);
    assert_eq!(r["payload"]["nodes"][0]["theta"][0].as_f64().unwrap(), 0.666666666667);
    assert_eq!(r["model_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn reports_are_deterministic_across_runs_and_thread_counts() {
    for cmd in ["check-na", "price", "dual-price", "ftap"] {
        let a = run_env(&[cmd], "two_period.json", None);
        let b = run_env(&[cmd], "two_period.json", None);
        let c = run_env(&[cmd], "two_period.json", Some("1"));
        let d = run_env(&[cmd], "two_period.json", Some("3"));
        assert_eq!(a.stdout, b.stdout, "{cmd}");
        assert_eq!(a.stdout, c.stdout, "{cmd}");
        assert_eq!(a.stdout, d.stdout, "{cmd}");
    }
}

#[test]
fn arbitrage_price_is_minus_infinity() {
    let out = run(&["price"], "trinomial_cvar.json");
    assert_eq!(code(&out), 4);
    let r = report(&out);
    assert_eq!(r["payload"]["root_price"], "-inf");
    assert_eq!(r["payload"]["nodes"][0]["status"], "unbounded");
}

#[test]
fn check_na_witness_direction() {
    let out = run(&["check-na", "--time", "0"], "arbitrage.json");
    let v = &report(&out)["payload"]["verdicts"][0];
    assert_eq!(v["aip"], false);
    assert_eq!(v["aip_direction"][0].as_f64().unwrap(), 1.0);
    let out = run(&["check-na", "--time", "1"], "binomial.json");
    assert_eq!(code(&out), 2);
}

#[test]
fn dual_price_report() {
    let r = report(&run(&["dual-price"], "binomial.json"));
    let p = &r["payload"];
    assert_eq!(p["root_value"].as_f64().unwrap(), 0.333333333333);
    assert_eq!(p["gap"].as_f64().unwrap(), 0.0);
    let k = &p["witness"]["kernels"][0]["kernel"];
    assert_eq!(k[0].as_f64().unwrap(), 0.333333333333);
    assert_eq!(k[1].as_f64().unwrap(), 0.666666666667);
}

#[test]
fn ftap_report_on_arbitrage() {
    let p = report(&run(&["ftap", "--samples", "4"], "arbitrage.json"))["payload"].clone();
    assert_eq!(p["na"], false);
    assert_eq!(p["polytopes_nonempty"], false);
    assert_eq!(p["ngd"][0], false);
    assert_eq!(p["consistent"], true);
}

#[test]
fn csv_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    let out = run(&["price", "--csv", path.to_str().unwrap()], "two_period.json");
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "node_id,time,price,attained,theta_1");
    assert_eq!(lines.len(), 8);
    assert!(lines[1].starts_with("0,0,"));
    assert!(lines[7].starts_with("6,2,0.0,true,"));

    let path = dir.path().join("arb.csv");
    run(&["price", "--csv", path.to_str().unwrap()], "arbitrage.json");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("0,0,-inf,false,"));
}

#[test]
fn exact_mode_agrees_with_floats() {
    let f = report(&run(&["price"], "two_period.json"));
    let e = report(&run(&["price", "--exact"], "two_period.json"));
    assert_eq!(f["payload"]["root_price"], e["payload"]["root_price"]);
    assert_eq!(e["tolerances"]["exact"], true);
}
