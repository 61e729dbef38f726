//! Rendering query results.

use std::fmt::Write as _;

use aggrec_core::{Tuple, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

/// 17 significant digits, trailing zeros dropped but at least one digit
/// after the point, so the text reads back as the same float.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0.0".into()
        } else {
            "0.0".into()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..17).contains(&exp) {
        return format!("{x:.16e}");
    }
    let decimals = (16 - exp).max(1) as usize;
    let mut s = format!("{x:.decimals$}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    s
}

fn field(v: &Value, quote_symbols: bool) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(x) => format_float(*x),
        Value::Symbol(s) if quote_symbols => csv_quote(s.as_str()),
        Value::Symbol(s) => s.as_str().to_string(),
        Value::Pair(p) => {
            let inner = format!("({}, {})", field(&p.0, false), field(&p.1, false));
            if quote_symbols {
                csv_quote(&inner)
            } else {
                inner
            }
        }
    }
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// One `predicate,field,...` line per tuple, the same shape the CSV fact
/// reader accepts.
pub fn render_csv<'a>(predicate: &str, tuples: impl IntoIterator<Item = &'a Tuple>) -> String {
    let mut out = String::new();
    for t in tuples {
        out.push_str(predicate);
        for v in t {
            out.push(',');
            out.push_str(&field(v, true));
        }
        out.push('\n');
    }
    out
}

pub fn render_table<'a>(predicate: &str, tuples: impl IntoIterator<Item = &'a Tuple>) -> String {
    let rows: Vec<Vec<String>> = tuples
        .into_iter()
        .map(|t| t.iter().map(|v| field(v, false)).collect())
        .collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .map(|r| r.get(c).map_or(0, String::len))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = format!("{predicate} ({} rows)\n", rows.len());
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        let _ = writeln!(out, "  {}", line.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [
            133333.33333333334,
            0.1,
            110000.0,
            1e-9,
            6.02e23,
            -2.5,
            1.0 / 3.0,
        ] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            assert!(s.contains('.'), "{s}");
        }
        assert_eq!(format_float(110000.0), "110000.0");
    }

    #[test]
    fn csv_quotes_symbols() {
        let t = vec![Value::from("a"), Value::Float(0.5), Value::Int(3)];
        assert_eq!(render_csv("p", [&t]), "p,\"a\",0.5,3\n");
    }
}
