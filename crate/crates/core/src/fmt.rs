//! Fixed number formatting for machine-read output.

/// 17 significant digits in scientific notation; `inf`/`-inf`/`nan` for
/// non-finite values. Round-trips every `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::fmt17;

    #[test]
    fn round_trips() {
        for x in [0.0, 1.0, -3.8898815748423097, 1e-300, f64::MAX, 0.1 + 0.2] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(f64::INFINITY), "inf");
        assert_eq!(fmt17(2.5), "2.5000000000000000e0");
    }
}
