//! Number formatting for CSV output.

/// Formats `x` with 12 significant digits, in plain decimal notation for
/// moderate magnitudes and scientific notation otherwise. Trailing zeros are
/// dropped, so parsing the text and formatting again is stable.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Units of `10⁻¹²` used for price columns.
pub const PRICE_SCALE: f64 = 1e12;

/// Rounds `x` to the nearest multiple of `10⁻¹²`, as an integer count.
pub fn to_price_units(x: f64) -> i128 {
    (x * PRICE_SCALE).round() as i128
}

/// Writes an integer count of `10⁻¹²` units with exactly 12 decimals.
pub fn price_units_to_string(units: i128) -> String {
    let sign = if units < 0 { "-" } else { "" };
    let mag = units.unsigned_abs();
    format!(
        "{sign}{}.{:012}",
        mag / 1_000_000_000_000,
        mag % 1_000_000_000_000
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(-0.5), "-0.5");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(123456.7890123456), "123456.789012");
        assert_eq!(sig12(2.5e-9), "2.5e-9");
        assert_eq!(sig12(9.9999999999999), "10");
        assert_eq!(sig12(-0.0), "0");
    }

    #[test]
    fn price_units() {
        assert_eq!(
            price_units_to_string(to_price_units(1.25)),
            "1.250000000000"
        );
        assert_eq!(
            price_units_to_string(to_price_units(-0.000000000003)),
            "-0.000000000003"
        );
        assert_eq!(price_units_to_string(0), "0.000000000000");
    }
}
