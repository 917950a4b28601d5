//! Number formatting shared by every TSV artifact.
//!
//! Values are written with the shortest decimal representation that parses
//! back to the same `f64`, so save → load → save is byte-stable and loads
//! are bit-exact.

pub fn f64_to_string(v: f64) -> String {
    format!("{v}")
}

/// Parses a finite decimal; rejects `NaN` and infinities.
pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn join_f64(values: &[f64], sep: &str) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        out.push_str(&f64_to_string(*v));
    }
    out
}

/// `key=value` pairs separated by single spaces, as used in file headers.
pub fn parse_header_fields(line: &str) -> Vec<(&str, &str)> {
    line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect()
}
