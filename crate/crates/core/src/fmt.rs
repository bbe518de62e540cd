//! Deterministic numeric text output with 12 significant digits.

/// Formats `x` with 12 significant digits: fixed-point for magnitudes in
/// `[1e-9, 1e15)`, scientific otherwise. Negative zero prints as `0`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let sci = format!("{x:.11e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-9..15).contains(&exp) {
        let prec = (11 - exp).max(0) as usize;
        format!("{x:.prec$}")
    } else {
        sci
    }
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(175.934753782135), "175.934753782");
        assert_eq!(num(5e-6), "0.00000500000000000");
        assert_eq!(num(-1.472), "-1.47200000000");
        assert_eq!(num(1.0 / 3.0), "0.333333333333");
        assert_eq!(num(1.23e-9), "0.00000000123000000000");
        assert_eq!(num(1.23e-12), "1.23000000000e-12");
        assert_eq!(num(2e20), "2.00000000000e20");
    }

    #[test]
    fn zero_and_rounding_edges() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(9.999999999999999), "10.0000000000");
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn parses_back_to_twelve_digits() {
        for x in [1.0e-5, 1.23456789012345, 123456.789012345, -0.000271828182845] {
            let back: f64 = num(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-12, "{x}");
        }
    }
}
