//! Deterministic rendering of reports: floats rounded to 12 significant
//! digits, JSON objects with sorted keys, CSV with a header row. Identical
//! inputs must produce byte-identical output.

use serde_json::{json, Map, Value};

use crate::cmtest::{CMReport, ClassReport, CmMethod};
use crate::measure::{LevyReport, ScanReport, Verdict};
use crate::operators::{ChuReport, OperatorTable, Route};
use crate::represent::{NChainReport, RhoReport, StarReport};

/// Round to 12 significant digits (the report precision).
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// %g-style fixed 12-significant-digit formatting, trailing zeros trimmed.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..12).contains(&exp) {
        let prec = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.prec$}"))
    } else {
        let s = format!("{v:.11e}");
        match s.split_once('e') {
            Some((mantissa, e)) => format!("{}e{}", trim_zeros(mantissa), e),
            None => s,
        }
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// A JSON value for a float: a rounded number, or a string for non-finite.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        serde_json::Number::from_f64(round_sig(v))
            .map(Value::Number)
            .unwrap_or(Value::Null)
    } else {
        Value::String(fmt_sig(v))
    }
}

pub fn opt_num(v: Option<f64>) -> Value {
    v.map(num).unwrap_or(Value::Null)
}

pub fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn scan_report_json(r: &ScanReport) -> Value {
    json!({
        "verdict": verdict_str(r.verdict),
        "min_value": num(r.min_value),
        "witness": opt_num(r.witness),
        "points_checked": r.points_checked,
    })
}

pub fn levy_report_json(r: &LevyReport) -> Value {
    json!({
        "admissible": r.admissible,
        "mass_near_zero": num(r.mass_near_zero),
        "weighted_tail": num(r.weighted_tail),
    })
}

pub fn cm_report_json(r: &CMReport) -> Value {
    let orders: Vec<Value> = r
        .orders
        .iter()
        .map(|o| {
            json!({
                "order": o.order,
                "min_value": num(o.min_value),
                "witness": opt_num(o.witness),
                "conclusive": o.conclusive,
            })
        })
        .collect();
    json!({
        "method": match r.method {
            CmMethod::DerivativeSign => "derivative_sign",
            CmMethod::FiniteDifference => "finite_difference",
        },
        "tolerance": num(r.tolerance),
        "verdict": verdict_str(r.verdict),
        "first_failure": r.first_failure.map(|(order, x, v)| json!({
            "order": order, "x": num(x), "value": num(v),
        })).unwrap_or(Value::Null),
        "orders": orders,
    })
}

/// Long-form minima matrix: one row per derivative order.
pub fn cm_report_csv(r: &CMReport) -> String {
    let mut out = String::from("order,min_value,witness,conclusive\n");
    for o in &r.orders {
        out.push_str(&format!(
            "{},{},{},{}\n",
            o.order,
            fmt_sig(o.min_value),
            o.witness.map(fmt_sig).unwrap_or_default(),
            o.conclusive
        ));
    }
    out
}

pub fn class_report_json(r: &ClassReport) -> Value {
    let per_k: Vec<Value> = r
        .per_k
        .iter()
        .map(|o| {
            let mut m = Map::new();
            m.insert("k".into(), json!(o.k));
            m.insert("cm".into(), cm_report_json(&o.report));
            m.insert(
                "measure_scan".into(),
                o.measure_scan
                    .as_ref()
                    .map(scan_report_json)
                    .unwrap_or(Value::Null),
            );
            m.insert(
                "measure_note".into(),
                o.measure_note
                    .clone()
                    .map(Value::String)
                    .unwrap_or(Value::Null),
            );
            Value::Object(m)
        })
        .collect();
    json!({
        "lambda": num(r.lam),
        "N": r.n_class,
        "verdict": verdict_str(r.verdict),
        "member": r.is_member(),
        "first_failure_k": r.first_failure_k,
        "per_k": per_k,
        "disagreements": r.disagreements,
        "notes": r.notes,
    })
}

pub fn class_report_csv(r: &ClassReport) -> String {
    let mut out = String::from("k,order,min_value,witness,conclusive\n");
    for o in &r.per_k {
        for ord in &o.report.orders {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                o.k,
                ord.order,
                fmt_sig(ord.min_value),
                ord.witness.map(fmt_sig).unwrap_or_default(),
                ord.conclusive
            ));
        }
    }
    out
}

pub fn operator_table_json(t: &OperatorTable) -> Value {
    let mut routes = Map::new();
    for (ri, route) in Route::ALL.iter().enumerate() {
        let per_k: Vec<Value> = t.c_values[ri]
            .iter()
            .map(|row| Value::Array(row.iter().map(|&v| num(v)).collect()))
            .collect();
        routes.insert(route.name().to_string(), Value::Array(per_k));
    }
    let t_vals: Vec<Value> = t
        .t_values
        .iter()
        .map(|per_k| {
            Value::Array(
                per_k
                    .iter()
                    .map(|row| Value::Array(row.iter().map(|&v| num(v)).collect()))
                    .collect(),
            )
        })
        .collect();
    json!({
        "lambda": num(t.lam),
        "k_max": t.k_max,
        "n_max": t.n_max,
        "grid": t.grid.iter().map(|&x| num(x)).collect::<Vec<_>>(),
        "c_routes": Value::Object(routes),
        "t_values": t_vals,
        "discrepancy": num(t.discrepancy),
        "discrepancy_witness": t.discrepancy_witness.map(|(r, k, x)| json!({
            "route": r.name(), "k": k, "x": num(x),
        })).unwrap_or(Value::Null),
        "low_x_warning": t.low_x_warning,
    })
}

pub fn operator_table_csv(t: &OperatorTable) -> String {
    let mut out = String::from("route,n,k,x,value\n");
    for (ri, route) in Route::ALL.iter().enumerate() {
        for (k, row) in t.c_values[ri].iter().enumerate() {
            for (ix, &v) in row.iter().enumerate() {
                out.push_str(&format!(
                    "{},0,{},{},{}\n",
                    route.name(),
                    k,
                    fmt_sig(t.grid[ix]),
                    fmt_sig(v)
                ));
            }
        }
    }
    for (n, per_k) in t.t_values.iter().enumerate() {
        for (k, row) in per_k.iter().enumerate() {
            for (ix, &v) in row.iter().enumerate() {
                out.push_str(&format!(
                    "t,{},{},{},{}\n",
                    n,
                    k,
                    fmt_sig(t.grid[ix]),
                    fmt_sig(v)
                ));
            }
        }
    }
    out
}

pub fn chu_report_json(lam: f64, n: usize, k: usize, m: usize, r: &ChuReport) -> Value {
    json!({
        "lambda": num(lam),
        "n": n, "k": k, "m": m,
        "lhs": num(r.lhs),
        "rhs": num(r.rhs),
        "abs_gap": num(r.abs_gap),
        "rel_gap": num(r.rel_gap),
    })
}

pub fn star_report_json(r: &StarReport) -> Value {
    json!({
        "all_pass": r.all_pass,
        "entries": r.entries.iter().map(|e| json!({
            "j": e.j,
            "min_normalized": num(e.min_normalized),
            "witness": opt_num(e.witness),
            "pass": e.pass,
        })).collect::<Vec<_>>(),
    })
}

pub fn n_chain_report_json(r: &NChainReport) -> Value {
    json!({
        "identity_max_gap": num(r.identity_max_gap),
        "identity_pass": r.identity_pass,
        "derivative_decay": r.derivative_decay.iter().map(|(j, mags, pass)| json!({
            "j": j,
            "magnitudes": mags.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            "pass": pass,
        })).collect::<Vec<_>>(),
        "all_pass": r.all_pass,
    })
}

pub fn rho_report_json(r: &RhoReport) -> Value {
    json!({
        "max_differential_gap": num(r.max_differential_gap),
        "differential_witness": opt_num(r.differential_witness),
        "max_convolution_gap": num(r.max_convolution_gap),
        "convolution_witness": opt_num(r.convolution_witness),
        "pass": r.pass,
    })
}

/// Plot-ready decay probe: x, remainder, scaled remainder.
pub fn decay_probe_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("x,remainder,scaled_remainder\n");
    for &(x, r, xr) in rows {
        out.push_str(&format!("{},{},{}\n", fmt_sig(x), fmt_sig(r), fmt_sig(xr)));
    }
    out
}
