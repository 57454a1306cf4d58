//! Float formatting helpers for exported files.

/// Rounds `x` to `digits` significant decimal digits.
pub(crate) fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    s.parse().unwrap_or(x)
}

/// Shortest decimal text of `x` rounded to `digits` significant digits.
pub(crate) fn fmt_sig(x: f64, digits: usize) -> String {
    round_sig(x, digits).to_string()
}

/// Serde adapter writing float vectors at 12 significant digits.
pub(crate) mod sig12 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rounded: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| super::round_sig(v, 12)).collect())
            .collect();
        rounded.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<f64>>::deserialize(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(4.14, 6), "4.14");
        assert_eq!(fmt_sig(1.0 / 3.0, 6), "0.333333");
        assert_eq!(fmt_sig(123456789.0, 6), "123457000");
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(round_sig(0.123456789012345, 12), 0.123456789012);
    }
}
