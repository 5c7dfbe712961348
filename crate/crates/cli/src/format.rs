//! Number formatting shared by every CSV and JSON output.

pub const SIG_DIGITS: usize = 12;

/// Rounds to [`SIG_DIGITS`] significant digits. Non-finite values pass through.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{:.*e}", SIG_DIGITS - 1, v).parse().expect("formatted float parses")
}

/// Shortest text that parses back to `round_sig(v)`.
pub fn fmt_num(v: f64) -> String {
    let r = round_sig(v);
    if r.is_nan() {
        "NaN".into()
    } else if r.is_infinite() {
        if r > 0.0 { "inf".into() } else { "-inf".into() }
    } else if r == 0.0 || (1e-4..1e15).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// `round_sig` for JSON fields, which have no encoding for infinities.
pub fn json_num(v: f64) -> Option<f64> {
    v.is_finite().then(|| round_sig(v))
}
