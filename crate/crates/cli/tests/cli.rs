use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robusthedge"))
        .current_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
        .args(args)
        .output()
        .unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn sorted(v: &Value) -> Vec<String> {
    let mut out: Vec<String> = v.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect();
    out.sort();
    out
}

#[test]
fn price_examples() {
    let v = json(&["price", "fixtures/m2.json", "--side", "sub", "--arith", "exact"]);
    assert_eq!(v["price"], "11/24");
    assert_eq!(v["h_star"][0], "0");
    assert_eq!(v["replay"]["ok"], true);
    assert_eq!(sorted(&v["tau_star"]), ["d", "u"]);
    let v = json(&["price", "fixtures/m2.json", "--side", "tilde", "--arith", "exact"]);
    assert_eq!(v["price"], "41/48");
    let v = json(&["price", "fixtures/m2.json", "--side", "super", "--arith", "exact"]);
    assert_eq!(v["price"], "2/3");
    assert_eq!(v["h_star"][0], "1/2");
    let v = json(&["price", "fixtures/m1.json", "--side", "super"]);
    assert_eq!(v["price"].as_f64(), Some(0.25));
}

#[test]
fn check_examples() {
    let v = json(&["check", "fixtures/m2.json", "--what", "gap", "--arith", "exact"]);
    assert_eq!(v["sup_inf"], "11/24");
    assert_eq!(v["inf_sup"], "1/2");
    assert_eq!(v["gap"], "1/24");
    let v = json(&["check", "fixtures/m2.json", "--what", "na", "--arith", "exact"]);
    assert_eq!(v["holds"], true);
    assert_eq!(v["witness"]["transitions"]["u"], serde_json::json!(["1/3", "1/3", "1/3"]));
    let out = run(&["check", "fixtures/redundant.json", "--what", "redundancy", "--arith", "exact"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["holds"], false);
    assert!(v["violations"].as_array().unwrap().iter().any(|x| x["h"][1] == "1"));
    let v = json(&["check", "fixtures/m2.json", "--what", "reasonable"]);
    assert_eq!(v["holds"], true);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["price", "fixtures/missing.json"]).status.code(), Some(1));
    let dir = std::env::temp_dir().join(format!("robusthedge-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\"horizon\": 1}").unwrap();
    assert_eq!(run(&["price", bad.to_str().unwrap()]).status.code(), Some(1));
    // a call quoted above every attainable price
    let arb = dir.join("arb.json");
    std::fs::write(
        &arb,
        r#"{"horizon": 1,
            "tree": {"nodes": [
                {"id": "r", "time": 0, "price": 2},
                {"id": "a", "time": 1, "parent": "r", "price": 1},
                {"id": "b", "time": 1, "parent": "r", "price": 3}]},
            "payoff": {"rule": {"kind": "put", "strike": 2}},
            "options": [{"vanilla": {"maturity": 1, "strike": 2, "kind": "call"}, "price": 1}]}"#,
    )
    .unwrap();
    let out = run(&["price", arb.to_str().unwrap(), "--arith", "exact"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["holds"], false);
    assert!(v["arbitrage"].is_object());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn converge_grid_exact() {
    let out = run(&["converge", "fixtures/grid_exact.json", "--n-range", "4..6", "--arith", "exact", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().unwrap().clone();
    let err = headers.iter().position(|h| h == "err").unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[err].parse::<f64>().unwrap(), 0.0);
    }
    let out = run(&["converge", "fixtures/grid_exact.json", "--n-range", "5..5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need >= 2 levels"));
}

#[test]
fn discretize_round_trips() {
    let out = run(&["discretize", "fixtures/continuum_a.json", "--n", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = std::env::temp_dir().join(format!("robusthedge-disc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("level2.json");
    std::fs::write(&file, &out.stdout).unwrap();
    let v = json(&["check", file.to_str().unwrap(), "--what", "na"]);
    assert_eq!(v["holds"], true);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn stopping_region() {
    let v = json(&["stopping", "fixtures/m2.json", "--h", "0", "--mode", "sup-inf", "--arith", "exact"]);
    assert_eq!(v["value"], "11/24");
    assert_eq!(sorted(&v["tau_star"]), ["d", "u"]);
    let out = run(&["stopping", "fixtures/m2.json", "--h", "1,2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exact_output_is_deterministic() {
    let a = run(&["price", "fixtures/m2.json", "--side", "super", "--arith", "exact"]);
    let b = run(&["price", "fixtures/m2.json", "--side", "super", "--arith", "exact", "--threads", "1"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn every_fixture_loads_and_prices() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let p = path.to_str().unwrap();
        let out = if doc.get("tree").is_some() {
            run(&["price", p, "--side", "super"])
        } else {
            run(&["converge", p, "--n-range", "2..3"])
        };
        assert!(out.status.success(), "{p}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
