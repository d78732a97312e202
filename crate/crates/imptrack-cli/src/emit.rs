//! Deterministic numeric formatting and file emission.
//!
//! All numeric output is printed with 12 significant digits; identical
//! runs produce byte-identical CSV and JSON files.

/// Significant digits used for every emitted number.
pub const SIG_DIGITS: usize = 12;

/// Format like printf `%.12g`: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= SIG_DIGITS as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}"))
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0');
    t.strip_suffix('.').unwrap_or(t).to_string()
}

/// Round a value to 12 significant digits (for JSON payloads).
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    fmt_sig(x).parse().unwrap_or(x)
}

/// Assemble CSV text: optional `#` comment lines, a header, then rows of
/// 12-significant-digit numbers. LF line endings.
pub fn csv_text(comments: &[String], header: &[&str], rows: &[Vec<CsvField>]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|f| match f {
                CsvField::Num(x) => fmt_sig(*x),
                CsvField::Text(s) => s.clone(),
                CsvField::Empty => String::new(),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One CSV cell.
pub enum CsvField {
    Num(f64),
    Text(String),
    Empty,
}
