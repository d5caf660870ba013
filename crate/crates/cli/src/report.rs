//! Deterministic JSON reports.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// A float rounded to 12 significant digits. Infinities and NaN become the
/// strings `"inf"`, `"-inf"` and `"nan"`.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        return Value::from("nan");
    }
    if x.is_infinite() {
        return Value::from(if x > 0.0 { "inf" } else { "-inf" });
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    // no negative zero in reports
    Value::from(if rounded == 0.0 { 0.0 } else { rounded })
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn opt_nums(xs: Option<&Vec<f64>>) -> Value {
    xs.map_or(Value::Null, |v| nums(v))
}

/// Same text as [`num`], for CSV cells.
pub fn cell(x: f64) -> String {
    match num(x) {
        Value::String(s) => s,
        v => v.to_string(),
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub tol: f64,
    pub exact: bool,
}

pub fn render(command: &str, model_digest: &str, payload: Value, tolerances: Tolerances) -> String {
    let mut top = Map::new();
    top.insert("command".into(), command.into());
    top.insert("model_digest".into(), model_digest.into());
    top.insert("payload".into(), payload);
    top.insert(
        "tolerances".into(),
        json!({ "tol": num(tolerances.tol), "exact": tolerances.exact }),
    );
    top.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    // serde_json's default map is ordered by key
    serde_json::to_string_pretty(&Value::Object(top)).expect("report serializes")
}
