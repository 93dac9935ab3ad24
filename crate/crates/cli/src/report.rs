//! JSON and CSV rendering. Every number goes through [`num`], which rounds to
//! 15 significant digits and spells non-finite values as strings so that the
//! output is valid JSON and byte-stable across runs.

use serde_json::{json, Value};
use utilmax_core::numeric::round_sig15;
use utilmax_core::solvers::DualityCertificate;
use utilmax_core::verify::CheckReport;
use utilmax_core::{Error, Result};

pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::String("NaN".into())
    } else if x == f64::INFINITY {
        Value::String("inf".into())
    } else if x == f64::NEG_INFINITY {
        Value::String("-inf".into())
    } else {
        json!(round_sig15(x))
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// Inverse of [`num`].
pub fn read_num(v: &Value, what: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad(what)),
        Value::String(s) => match s.as_str() {
            "NaN" => Ok(f64::NAN),
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => Err(bad(what)),
        },
        _ => Err(bad(what)),
    }
}

pub fn read_nums(v: &Value, what: &str) -> Result<Vec<f64>> {
    v.as_array().ok_or_else(|| bad(what))?.iter().map(|x| read_num(x, what)).collect()
}

fn bad(what: &str) -> Error {
    Error::Domain(format!("report field `{what}` is missing or not numeric"))
}

pub fn check_json(rep: &CheckReport) -> Value {
    json!({
        "name": rep.name,
        "pass": rep.pass,
        "worst_residual": num(rep.worst()),
        "tolerance": num(rep.tolerance),
        "rows": rep.rows.iter().map(|r| json!({
            "location": r.location,
            "residual": num(r.residual),
            "pass": r.pass,
        })).collect::<Vec<_>>(),
        "notes": rep.notes,
    })
}

pub fn certificate_json(c: &DualityCertificate) -> Value {
    json!({
        "gap": num(c.gap),
        "fenchel_residual": num(c.fenchel_residual),
        "budget_residual": num(c.budget_residual),
        "vertex_slacks": nums(&c.vertex_slacks),
        "mixture_slacks": nums(&c.mixture_slacks),
        "supermartingale_residual": num(c.supermartingale_residual),
        "supergradient_distance": num(c.supergradient_distance),
        "recovery_residual": num(c.recovery_residual),
        "dual_agreement": num(c.dual_agreement),
        "satiation": check_json(&c.satiation),
        "passed": c.passed,
        "failures": c.failures,
    })
}

/// Flattens a JSON document into `(path, value)` rows.
pub fn flatten(v: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, x)| walk(&key(k), x, out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| walk(&key(&i.to_string()), x, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", v, &mut out);
    out
}

pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Text form of a number as written to CSV cells.
pub fn cell(x: f64) -> String {
    match num(x) {
        Value::String(s) => s,
        v => v.to_string(),
    }
}
