//! Locale-free number formatting for CSV output.

/// Formats like C's `%g`: 6 significant digits, trailing zeros removed,
/// scientific notation for exponents below -4 or above 5.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round to 6 significant digits first; the exponent may shift (9.999995 -> 1e1).
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `fmt_g`, or an empty field when the value is undefined.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf() {
        // expected strings produced by printf("%g")
        let cases = [
            (0.0, "0"),
            (90.0, "90"),
            (12288.0, "12288"),
            (0.84972, "0.84972"),
            (21.01, "21.01"),
            (-0.19993, "-0.19993"),
            (1e-5, "1e-05"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (99.99995, "99.9999"),
            (999999.5, "1e+06"),
            (1.0 / 3.0, "0.333333"),
            (100.0, "100"),
            (5e-300, "5e-300"),
            (-3.0, "-3"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g(x), want, "formatting {x:?}");
        }
    }

    #[test]
    fn undefined_is_empty() {
        assert_eq!(fmt_opt(None), "");
        assert_eq!(fmt_opt(Some(0.5)), "0.5");
    }
}
