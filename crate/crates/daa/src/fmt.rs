//! Float formatting for all emitted text files: 6 significant decimal
//! digits, `.` decimal separator regardless of locale, scientific notation
//! only when the plain form would be unwieldy (mirrors C's `%.6g` except
//! that trailing zeros are kept, so columns line up).

/// Formats `v` with 6 significant digits.
///
/// Exact zero becomes `"0"`. Values whose rounded decimal exponent lies in
/// `[-4, 5]` are written positionally (`123.457`, `0.000123457`), everything
/// else in scientific notation (`1.23457e8`). Non-finite values pass through
/// as `inf`/`NaN` so a caller bug stays visible instead of panicking here.
pub fn fmt_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    // Format scientific first: the exponent after rounding to 6 significant
    // digits decides the presentation (e.g. 999999.6 rounds up into e6).
    let sci = format!("{v:.5e}");
    let epos = sci.find('e').expect("scientific format always has an exponent");
    let exp: i32 = sci[epos + 1..].parse().expect("exponent is an integer");
    if (-4..=5).contains(&exp) {
        let decimals = (5 - exp) as usize;
        format!("{v:.decimals$}")
    } else {
        sci
    }
}
