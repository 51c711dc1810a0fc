//! Engineering-notation numbers: `4.7k`, `2.2u`, `1meg`, `1e-12`.

/// Parse a number with an optional engineering suffix. Suffixes are
/// case-insensitive and `meg` is matched before `m` (milli).
pub fn parse_value(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i == digits_start || (i == digits_start + 1 && bytes[digits_start] == b'.') {
        return None;
    }
    let significand = &text[..i];
    let mut exponent: i32 = 0;
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_digits = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits {
            exponent = text[i + 1..j].parse().ok()?;
            i = j;
        }
    }
    exponent += match text[i..].to_ascii_lowercase().as_str() {
        "" => 0,
        "t" => 12,
        "g" => 9,
        "meg" => 6,
        "k" => 3,
        "m" => -3,
        "u" | "µ" => -6,
        "n" => -9,
        "p" => -12,
        "f" => -15,
        _ => return None,
    };
    // decimal exponent arithmetic keeps `100u` identical to `100e-6`
    let v: f64 = format!("{significand}e{exponent}").parse().ok()?;
    v.is_finite().then_some(v)
}

/// Canonical text for a value; parses back to the identical `f64`.
pub fn format_value(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
